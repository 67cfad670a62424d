/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/simulation.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>

#include "hallcal/errors.hpp"
#include "hallcal/rng.hpp"

namespace hallcal::sim {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

/// Approximate positive GCD of a frequency list (Euclid with tolerance).
double common_base_frequency(const std::vector<double>& freqs) {
    double g = 0.0;
    for (double f : freqs) {
        double a = std::max(g, f);
        double b = std::min(g, f);
        while (b > 1e-9 * a) {
            const double r = std::fmod(a, b);
            a = b;
            b = (r > 1e-9 * a) ? r : 0.0;
        }
        g = a;
    }
    return g;
}

}  // namespace

void ReferenceSignal::validate() const {
    if (sample_rate_hz <= 0.0) {
        throw ConfigError("reference: sample rate must be > 0");
    }
    if (is_ramp()) {
        if (ramp().duration_s <= 0.0) {
            throw ConfigError("ramp reference: duration must be > 0");
        }
        return;
    }
    const auto& ms = multisine();
    if (ms.frequencies_hz.empty()) {
        throw ConfigError("multisine reference: frequency grid is empty");
    }
    for (double f : ms.frequencies_hz) {
        if (f <= 0.0) {
            throw ConfigError("multisine reference: frequencies must be > 0");
        }
        if (f >= 0.5 * sample_rate_hz) {
            throw ConfigError("multisine reference: frequency " + std::to_string(f) +
                              " Hz is at or above Nyquist");
        }
    }
    if (ms.periods < 1) {
        throw ConfigError("multisine reference: periods must be >= 1");
    }
    multisine_period_samples(*this);
}

std::size_t multisine_period_samples(const ReferenceSignal& cfg) {
    const auto& ms = cfg.multisine();
    const double base = common_base_frequency(ms.frequencies_hz);
    if (base <= 0.0) {
        throw ConfigError("multisine reference: no common base frequency");
    }
    const double samples = cfg.sample_rate_hz / base;
    const double rounded = std::round(samples);
    if (std::abs(samples - rounded) > 1e-6 || rounded < 2.0) {
        throw ConfigError("multisine reference: period is not an integer number of samples");
    }
    for (double f : ms.frequencies_hz) {
        const double k = f / base;
        if (std::abs(k - std::round(k)) > 1e-6) {
            throw ConfigError("multisine reference: frequencies must be multiples of the base");
        }
    }
    return static_cast<std::size_t>(rounded);
}

std::vector<double> generate_ramp(const ReferenceSignal& cfg) {
    cfg.validate();
    const auto& rp = cfg.ramp();
    const auto n = static_cast<std::size_t>(std::round(rp.duration_s * cfg.sample_rate_hz)) + 1;
    std::vector<double> r(n);
    for (std::size_t k = 0; k < n; ++k) {
        r[k] = rp.start_rad + (rp.end_rad - rp.start_rad) * static_cast<double>(k) /
                                  static_cast<double>(n - 1);
    }
    return r;
}

std::vector<double> generate_multisine(const ReferenceSignal& cfg) {
    cfg.validate();
    const auto& ms = cfg.multisine();
    const std::size_t period = multisine_period_samples(cfg);

    Rng rng(ms.phase_seed);
    std::vector<double> phases(ms.frequencies_hz.size());
    for (auto& p : phases) {
        p = rng.uniform(0.0, kTwoPi);
    }

    const double line_amp =
        ms.amplitude_rms * std::sqrt(2.0 / static_cast<double>(ms.frequencies_hz.size()));
    std::vector<double> one(period, 0.0);
    const double ts = 1.0 / cfg.sample_rate_hz;
    for (std::size_t j = 0; j < ms.frequencies_hz.size(); ++j) {
        const double w = kTwoPi * ms.frequencies_hz[j];
        for (std::size_t k = 0; k < period; ++k) {
            one[k] += line_amp * std::cos(w * static_cast<double>(k) * ts + phases[j]);
        }
    }
    std::vector<double> r;
    r.reserve(period * static_cast<std::size_t>(ms.periods));
    for (int p = 0; p < ms.periods; ++p) {
        r.insert(r.end(), one.begin(), one.end());
    }
    return r;
}

std::vector<double> generate_reference(const ReferenceSignal& cfg) {
    return cfg.is_ramp() ? generate_ramp(cfg) : generate_multisine(cfg);
}

void Dataset::validate() const {
    const std::size_t n = y.size();
    if (t.size() != n || torque.size() != n || r.size() != n ||
        static_cast<std::size_t>(d.rows()) != n || d.cols() != 3) {
        throw ConfigError("dataset: column lengths are inconsistent");
    }
    if (!y0.empty() && y0.size() != n) {
        throw ConfigError("dataset: ground-truth column length mismatch");
    }
    if (sample_time <= 0.0) {
        throw ConfigError("dataset: sample time must be > 0");
    }
}

namespace {

/// Shared closed-loop recursion. Both simulators run exactly this ordering:
/// read sensors, reconstruct, error, controller output, controller update,
/// plant update, so they agree sample-for-sample when fed the same models.
class LoopEngine {
public:
    LoopEngine(const lti::DiscreteStateSpace& plant, const lti::DiscreteStateSpace& controller,
               const DivergenceLimits& limits)
        : plant_(plant),
          controller_(controller),
          limits_(limits),
          xg_(Eigen::VectorXd::Zero(plant.order())),
          xc_(Eigen::VectorXd::Zero(controller.order())),
          xg_next_(plant.order()),
          xc_next_(controller.order()) {
        if (plant.D != 0.0) {
            throw NumericalError(
                "closed-loop simulation: plant with direct feedthrough forms an algebraic loop");
        }
    }

    double plant_output() const {
        return plant_.order() > 0 ? plant_.C.dot(xg_) : 0.0;
    }

    double controller_output(double e) const {
        return (controller_.order() > 0 ? controller_.C.dot(xc_) : 0.0) + controller_.D * e;
    }

    void advance(double e, double plant_input) {
        if (controller_.order() > 0) {
            xc_next_.noalias() = controller_.A * xc_;
            xc_next_.noalias() += controller_.B * e;
            xc_.swap(xc_next_);
        }
        if (plant_.order() > 0) {
            xg_next_.noalias() = plant_.A * xg_;
            xg_next_.noalias() += plant_.B * plant_input;
            xg_.swap(xg_next_);
        }
    }

    bool out_of_bounds(double y0, double torque) const {
        return !(std::abs(y0) < limits_.max_angle) || !(std::abs(torque) < limits_.max_torque);
    }

private:
    const lti::DiscreteStateSpace& plant_;
    const lti::DiscreteStateSpace& controller_;
    DivergenceLimits limits_;
    Eigen::VectorXd xg_;
    Eigen::VectorXd xc_;
    Eigen::VectorXd xg_next_;
    Eigen::VectorXd xc_next_;
};

}  // namespace

Dataset simulate_truth(const SimulationConfig& cfg, ReconstructionKind kind,
                       const recon::CorrectionTable* table) {
    cfg.flux_truth.validate();
    cfg.reference.validate();
    if (kind == ReconstructionKind::Star && table == nullptr) {
        throw ConfigError("simulate_truth: star reconstruction requires a correction table");
    }

    const double ts = 1.0 / cfg.reference.sample_rate_hz;
    const lti::DiscreteStateSpace plant = lti::discretize_zoh(cfg.plant, ts);
    lti::DiscreteTransferFunction ctf = cfg.controller;
    ctf.sample_time = ts;
    const lti::DiscreteStateSpace controller = lti::tf_to_ss(ctf);

    const std::vector<double> r = generate_reference(cfg.reference);
    const std::size_t n = r.size();
    if (cfg.disturbance.size() > 1 && cfg.disturbance.size() != n) {
        throw ConfigError("simulate_truth: disturbance length does not match the record");
    }

    Rng noise1(Rng::derive(cfg.noise.seed, 1));
    Rng noise2(Rng::derive(cfg.noise.seed, 2));
    Rng noise3(Rng::derive(cfg.noise.seed, 3));
    const double noise_std = std::sqrt(cfg.noise.variance);

    Dataset ds;
    ds.sample_time = ts;
    ds.n_m = cfg.flux_truth.pole_pairs;
    ds.seed = cfg.noise.seed;
    ds.reference = cfg.reference;
    ds.t.resize(n);
    ds.d.resize(static_cast<Eigen::Index>(n), 3);
    ds.y.resize(n);
    ds.torque.resize(n);
    ds.r = r;
    ds.y0.resize(n);

    LoopEngine loop(plant, controller, cfg.limits);
    const flux::BasisEvaluator evaluator(cfg.flux_truth.basis);
    const Eigen::Index m = cfg.flux_truth.basis.dimension();
    Eigen::RowVectorXd scratch(m);
    Eigen::Vector3d d;
    double phi = 0.0;

    for (std::size_t k = 0; k < n; ++k) {
        const double y0 = loop.plant_output();
        evaluator.eval_into(y0, scratch);
        for (Eigen::Index ch = 0; ch < 3; ++ch) {
            d(ch) = scratch * cfg.flux_truth.theta.segment(ch * m, m);
        }
        if (noise_std > 0.0) {
            d(0) += noise_std * noise1.gaussian();
            d(1) += noise_std * noise2.gaussian();
            d(2) += noise_std * noise3.gaussian();
        }
        const recon::ReconstructionState state{phi};
        const double y = (kind == ReconstructionKind::Init)
                             ? recon::f_init(d, state, ds.n_m)
                             : recon::f_star(d, state, ds.n_m, *table);
        phi = y;
        const double e = r[k] - y;
        const double t_u = loop.controller_output(e);
        const double t_d = cfg.disturbance.empty()
                               ? 0.0
                               : (cfg.disturbance.size() == 1 ? cfg.disturbance[0]
                                                              : cfg.disturbance[k]);
        const double t_total = t_u + t_d;

        ds.t[k] = static_cast<double>(k) * ts;
        ds.d.row(static_cast<Eigen::Index>(k)) = d;
        ds.y[k] = y;
        ds.torque[k] = t_u;
        ds.y0[k] = y0;

        if (loop.out_of_bounds(y0, t_total)) {
            throw NumericalError("simulate_truth: trajectory diverged at sample " +
                                 std::to_string(k));
        }
        loop.advance(e, t_total);
    }
    return ds;
}

namespace {

template <typename PerSample>
bool run_model_loop(const Eigen::VectorXd& theta, const flux::BasisDescriptor& basis, int n_m,
                    const lti::DiscreteStateSpace& bla, const lti::DiscreteStateSpace& controller,
                    const std::vector<double>& reference, const DivergenceLimits& limits,
                    std::size_t& diverged_at, PerSample&& per_sample) {
    LoopEngine loop(bla, controller, limits);
    const flux::BasisEvaluator evaluator(basis);
    const Eigen::Index m = basis.dimension();

    Eigen::RowVectorXd scratch(m);
    Eigen::Vector3d d;
    double phi = 0.0;
    for (std::size_t k = 0; k < reference.size(); ++k) {
        const double y0 = loop.plant_output();
        evaluator.eval_into(y0, scratch);
        for (Eigen::Index ch = 0; ch < 3; ++ch) {
            d(ch) = scratch * theta.segment(ch * m, m);
        }
        double y = 0.0;
        try {
            y = recon::f_init(d, recon::ReconstructionState{phi}, n_m);
        } catch (const NumericalError&) {
            diverged_at = k;
            return false;
        }
        phi = y;
        const double e = reference[k] - y;
        const double t_u = loop.controller_output(e);
        per_sample(k, d, y);
        if (loop.out_of_bounds(y0, t_u)) {
            diverged_at = k;
            return false;
        }
        loop.advance(e, t_u);
    }
    return true;
}

}  // namespace

ModelSimResult simulate_model(const Eigen::VectorXd& theta, const flux::BasisDescriptor& basis,
                              int n_m, const lti::DiscreteStateSpace& bla,
                              const lti::DiscreteStateSpace& controller,
                              const std::vector<double>& reference,
                              const DivergenceLimits& limits) {
    ModelSimResult out;
    const auto n = static_cast<Eigen::Index>(reference.size());
    out.d_sim.resize(n, 3);
    out.y_sim.resize(n);
    const bool ok = run_model_loop(theta, basis, n_m, bla, controller, reference, limits,
                                   out.diverged_at,
                                   [&](std::size_t k, const Eigen::Vector3d& d, double y) {
                                       out.d_sim.row(static_cast<Eigen::Index>(k)) = d;
                                       out.y_sim(static_cast<Eigen::Index>(k)) = y;
                                   });
    out.diverged = !ok;
    return out;
}

double simulate_model_residual(const Eigen::VectorXd& theta, const flux::BasisDescriptor& basis,
                               int n_m, const lti::DiscreteStateSpace& bla,
                               const lti::DiscreteStateSpace& controller,
                               const std::vector<double>& reference,
                               const Eigen::MatrixXd& d_measured,
                               const DivergenceLimits& limits) {
    double acc = 0.0;
    std::size_t diverged_at = 0;
    const bool ok = run_model_loop(
        theta, basis, n_m, bla, controller, reference, limits, diverged_at,
        [&](std::size_t k, const Eigen::Vector3d& d, double) {
            const auto row = static_cast<Eigen::Index>(k);
            const double e0 = d_measured(row, 0) - d(0);
            const double e1 = d_measured(row, 1) - d(1);
            const double e2 = d_measured(row, 2) - d(2);
            acc += e0 * e0 + e1 * e1 + e2 * e2;
        });
    if (!ok || !std::isfinite(acc)) {
        return std::numeric_limits<double>::infinity();
    }
    return acc;
}

}  // namespace hallcal::sim
