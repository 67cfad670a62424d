/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/lti.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <cmath>
#include <string>

#include "hallcal/errors.hpp"

namespace hallcal::lti {

namespace {

constexpr double kDelaySnapTol = 1e-9;

struct Realization {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;
};

void check_proper(const std::vector<double>& num, const std::vector<double>& den,
                  const char* what) {
    if (den.empty() || den.front() == 0.0) {
        throw ConfigError(std::string(what) + ": denominator leading coefficient must be nonzero");
    }
    if (num.empty()) {
        throw ConfigError(std::string(what) + ": empty numerator");
    }
    if (num.size() > den.size()) {
        throw ConfigError(std::string(what) + ": improper transfer function (deg num > deg den)");
    }
}

/// Controllable canonical form of a proper rational function given by
/// descending-power coefficient vectors. Works identically in s and q.
Realization controllable_canonical(std::vector<double> num, std::vector<double> den) {
    const double lead = den.front();
    for (auto& c : den) {
        c /= lead;
    }
    for (auto& c : num) {
        c /= lead;
    }

    const Eigen::Index n = static_cast<Eigen::Index>(den.size()) - 1;

    // Direct feedthrough: leading numerator coefficient once padded to
    // denominator length.
    std::vector<double> padded(den.size(), 0.0);
    std::copy(num.begin(), num.end(), padded.end() - static_cast<std::ptrdiff_t>(num.size()));
    const double d = padded.front();

    Realization r;
    r.D = d;
    r.A.setZero(n, n);
    r.B.setZero(n);
    r.C.setZero(n);
    if (n == 0) {
        return r;
    }
    for (Eigen::Index i = 0; i < n; ++i) {
        r.A(0, i) = -den[static_cast<std::size_t>(i) + 1];
        // remainder of num - d * den gives the strictly proper part
        r.C(i) = padded[static_cast<std::size_t>(i) + 1] - d * den[static_cast<std::size_t>(i) + 1];
    }
    for (Eigen::Index i = 1; i < n; ++i) {
        r.A(i, i - 1) = 1.0;
    }
    r.B(0) = 1.0;
    return r;
}

}  // namespace

void ContinuousTransferFunction::validate() const {
    check_proper(num, den, "continuous transfer function");
    if (input_delay < 0.0) {
        throw ConfigError("continuous transfer function: input delay must be >= 0");
    }
}

double ContinuousTransferFunction::dc_gain() const {
    return num.back() / den.back();
}

DiscreteTransferFunction::DiscreteTransferFunction(std::vector<double> numerator,
                                                   std::vector<double> denominator, double Ts)
    : num(std::move(numerator)), den(std::move(denominator)), sample_time(Ts) {
    check_proper(num, den, "discrete transfer function");
    const double lead = den.front();
    for (auto& c : den) {
        c /= lead;
    }
    for (auto& c : num) {
        c /= lead;
    }
}

void DiscreteTransferFunction::validate() const {
    check_proper(num, den, "discrete transfer function");
    if (sample_time <= 0.0) {
        throw ConfigError("discrete transfer function: sample time must be > 0");
    }
}

void DiscreteStateSpace::validate() const {
    const Eigen::Index n = A.rows();
    if (A.cols() != n || B.size() != n || C.size() != n) {
        throw ConfigError("discrete state space: inconsistent dimensions");
    }
    if (sample_time <= 0.0) {
        throw ConfigError("discrete state space: sample time must be > 0");
    }
}

double DiscreteStateSpace::dc_gain() const {
    if (order() == 0) {
        return D;
    }
    const Eigen::MatrixXd M = Eigen::MatrixXd::Identity(order(), order()) - A;
    return (C * M.partialPivLu().solve(B))(0) + D;
}

DiscreteStateSpace DiscreteStateSpace::scaled_input(double factor) const {
    DiscreteStateSpace out = *this;
    out.B *= factor;
    return out;
}

StepResult ss_step(const DiscreteStateSpace& model, const Eigen::VectorXd& state, double u) {
    if (state.size() != model.order()) {
        throw NumericalError("ss_step: state length " + std::to_string(state.size()) +
                             " does not match model order " + std::to_string(model.order()));
    }
    StepResult r;
    r.output = (model.order() > 0 ? (model.C * state)(0) : 0.0) + model.D * u;
    r.next_state = model.A * state + model.B * u;
    return r;
}

DiscreteStateSpace discretize_zoh(const ContinuousTransferFunction& tf, double Ts) {
    tf.validate();
    if (Ts <= 0.0) {
        throw ConfigError("discretize_zoh: sample time must be > 0");
    }

    Realization c = controllable_canonical(tf.num, tf.den);
    const Eigen::Index n = c.A.rows();

    // Split the delay into whole samples and a fraction, snapping away
    // floating-point dust so integer-multiple delays stay exact.
    double ratio = tf.input_delay / Ts;
    auto whole = static_cast<Eigen::Index>(std::floor(ratio + kDelaySnapTol));
    double frac = ratio - static_cast<double>(whole);
    if (frac < kDelaySnapTol) {
        frac = 0.0;
    } else if (frac > 1.0 - kDelaySnapTol) {
        whole += 1;
        frac = 0.0;
    }

    Eigen::MatrixXd phi(n, n);
    Eigen::VectorXd gamma0(n);  // weight of u(k - whole)
    Eigen::VectorXd gamma1(n);  // weight of u(k - whole - 1), only if frac > 0
    if (n > 0) {
        Eigen::MatrixXd block(n + 1, n + 1);
        block.setZero();
        block.topLeftCorner(n, n) = c.A;
        block.topRightCorner(n, 1) = c.B;

        const Eigen::MatrixXd e1 = (block * ((1.0 - frac) * Ts)).exp();
        const Eigen::MatrixXd phi1 = e1.topLeftCorner(n, n);
        gamma0 = e1.topRightCorner(n, 1);
        if (frac > 0.0) {
            const Eigen::MatrixXd e2 = (block * (frac * Ts)).exp();
            phi = phi1 * e2.topLeftCorner(n, n);
            gamma1 = phi1 * e2.topRightCorner(n, 1);
        } else {
            phi = phi1;
            gamma1.setZero();
        }
    }

    const Eigen::Index n_delay = (frac > 0.0) ? whole + 1 : whole;
    const Eigen::Index n_aug = n + n_delay;

    DiscreteStateSpace d;
    d.sample_time = Ts;
    d.A.setZero(n_aug, n_aug);
    d.B.setZero(n_aug);
    d.C.setZero(n_aug);
    d.A.topLeftCorner(n, n) = phi;
    d.C.head(n) = c.C;

    if (n_delay == 0) {
        d.B.head(n) = gamma0;
        d.D = c.D;
        return d;
    }

    // Delay slots hold past inputs, oldest first; the last slot receives u(k).
    for (Eigen::Index i = 0; i + 1 < n_delay; ++i) {
        d.A(n + i, n + i + 1) = 1.0;
    }
    d.B(n_aug - 1) = 1.0;

    if (frac > 0.0) {
        // slot 0 is u(k - whole - 1), slot 1 is u(k - whole)
        d.A.block(0, n, n, 1) = gamma1;
        if (n_delay >= 2) {
            d.A.block(0, n + 1, n, 1) = gamma0;
        } else {
            d.B.head(n) = gamma0;  // whole == 0: u(k - whole) is the current input
        }
        d.C(n) = c.D;  // y(k) sees u(t_k - tau), which lies in sample k - whole - 1
    } else {
        d.A.block(0, n, n, 1) = gamma0;
        d.C(n) = c.D;
    }
    return d;
}

DiscreteStateSpace tf_to_ss(const DiscreteTransferFunction& tf) {
    tf.validate();
    Realization r = controllable_canonical(tf.num, tf.den);
    DiscreteStateSpace d;
    d.A = std::move(r.A);
    d.B = std::move(r.B);
    d.C = std::move(r.C);
    d.D = r.D;
    d.sample_time = tf.sample_time;
    return d;
}

std::vector<double> impulse_response(const DiscreteStateSpace& model, std::size_t samples) {
    std::vector<double> out(samples, 0.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(model.order());
    for (std::size_t k = 0; k < samples; ++k) {
        const double u = (k == 0) ? 1.0 : 0.0;
        StepResult s = ss_step(model, x, u);
        out[k] = s.output;
        x = std::move(s.next_state);
    }
    return out;
}

std::vector<double> step_response(const DiscreteStateSpace& model, std::size_t samples) {
    std::vector<double> out(samples, 0.0);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(model.order());
    for (std::size_t k = 0; k < samples; ++k) {
        StepResult s = ss_step(model, x, 1.0);
        out[k] = s.output;
        x = std::move(s.next_state);
    }
    return out;
}

}  // namespace hallcal::lti
