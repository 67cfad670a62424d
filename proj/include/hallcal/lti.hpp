/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <vector>

namespace hallcal::lti {

/// Transfer function in s, coefficients in descending powers. Must be
/// proper (deg num <= deg den). input_delay is a pure input transport
/// delay in seconds, >= 0.
struct ContinuousTransferFunction {
    std::vector<double> num;
    std::vector<double> den;
    double input_delay = 0.0;

    void validate() const;
    double dc_gain() const;
};

/// Transfer function in the forward shift operator q, descending powers.
/// The denominator leading coefficient is normalized to 1 on construction.
struct DiscreteTransferFunction {
    std::vector<double> num;
    std::vector<double> den;
    double sample_time = 0.0;

    DiscreteTransferFunction() = default;
    DiscreteTransferFunction(std::vector<double> numerator, std::vector<double> denominator,
                             double Ts);

    void validate() const;
};

/// Single-input single-output discrete state-space model.
struct DiscreteStateSpace {
    Eigen::MatrixXd A;
    Eigen::VectorXd B;
    Eigen::RowVectorXd C;
    double D = 0.0;
    double sample_time = 0.0;

    Eigen::Index order() const { return A.rows(); }
    void validate() const;

    /// DC gain C (I - A)^-1 B + D; the model must have no pole at q = 1.
    double dc_gain() const;

    /// Returns a copy with the input matrix scaled by `factor`.
    DiscreteStateSpace scaled_input(double factor) const;
};

struct StepResult {
    Eigen::VectorXd next_state;
    double output = 0.0;
};

/// One simulation step. The output is computed from the pre-update state:
/// y = C x + D u, next = A x + B u.
StepResult ss_step(const DiscreteStateSpace& model, const Eigen::VectorXd& state, double u);

/// Exact zero-order-hold discretization. A fractional input delay
/// tau = (l + f) Ts is handled inside the ZOH by augmenting the state
/// with l (+1 if f > 0) input-memory slots, so integer delays shift the
/// impulse response by exactly that many samples and fractional delays
/// split the input integral at f Ts.
DiscreteStateSpace discretize_zoh(const ContinuousTransferFunction& tf, double Ts);

/// Controllable canonical realization of a proper discrete transfer function.
DiscreteStateSpace tf_to_ss(const DiscreteTransferFunction& tf);

std::vector<double> impulse_response(const DiscreteStateSpace& model, std::size_t samples);
std::vector<double> step_response(const DiscreteStateSpace& model, std::size_t samples);

}  // namespace hallcal::lti
