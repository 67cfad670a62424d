/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <variant>
#include <vector>

#include "hallcal/flux_model.hpp"
#include "hallcal/lti.hpp"
#include "hallcal/reconstruction.hpp"

namespace hallcal::sim {

struct RampReference {
    double start_rad = 0.0;
    double end_rad = 0.0;
    double duration_s = 0.0;
};

/// Random-phase multisine: equal-amplitude cosines on a harmonic frequency
/// grid. `amplitude_rms` is the RMS of the generated signal; per-line
/// amplitude is amplitude_rms * sqrt(2 / lines). One period is generated
/// and tiled `periods` times, so the record is exactly periodic.
struct MultisineReference {
    std::vector<double> frequencies_hz;
    double amplitude_rms = 0.0;
    std::uint64_t phase_seed = 0;
    int periods = 1;
};

struct ReferenceSignal {
    std::variant<RampReference, MultisineReference> shape;
    double sample_rate_hz = 0.0;

    bool is_ramp() const { return std::holds_alternative<RampReference>(shape); }
    const RampReference& ramp() const { return std::get<RampReference>(shape); }
    const MultisineReference& multisine() const { return std::get<MultisineReference>(shape); }
    void validate() const;
};

std::vector<double> generate_ramp(const ReferenceSignal& cfg);
std::vector<double> generate_multisine(const ReferenceSignal& cfg);
std::vector<double> generate_reference(const ReferenceSignal& cfg);

/// Samples per multisine period (frequencies must share a common base that
/// divides the sample rate into an integer period).
std::size_t multisine_period_samples(const ReferenceSignal& cfg);

/// Time series logged during closed-loop data collection. `y0` holds the
/// hidden ground-truth rotor angle for validation only; calibration code
/// must not read it.
struct Dataset {
    double sample_time = 0.0;
    int n_m = 1;
    std::uint64_t seed = 0;
    std::string fingerprint;
    ReferenceSignal reference;

    std::vector<double> t;
    Eigen::MatrixXd d;  // N x 3 Hall voltages
    std::vector<double> y;
    std::vector<double> torque;  // controller command
    std::vector<double> r;
    std::vector<double> y0;  // validation-only column, may be empty

    std::size_t size() const { return y.size(); }
    bool has_ground_truth() const { return !y0.empty(); }
    void validate() const;
};

struct DivergenceLimits {
    double max_angle = 1e3;   // rad
    double max_torque = 1e3;  // N m
};

struct SimulationConfig {
    lti::ContinuousTransferFunction plant;
    lti::DiscreteTransferFunction controller;
    flux::FluxModel flux_truth;
    flux::NoiseModel noise;
    ReferenceSignal reference;
    std::vector<double> disturbance;  // empty: none; one entry: constant; else per sample
    DivergenceLimits limits;
};

enum class ReconstructionKind { Init, Star };

/// Closed-loop data collection: true plant + true flux map + sensor noise,
/// position feedback through the chosen reconstruction. Logs the hidden
/// ground-truth angle. Throws NumericalError on divergence.
Dataset simulate_truth(const SimulationConfig& cfg, ReconstructionKind kind = ReconstructionKind::Init,
                       const recon::CorrectionTable* table = nullptr);

struct ModelSimResult {
    Eigen::MatrixXd d_sim;  // N x 3
    Eigen::VectorXd y_sim;
    bool diverged = false;
    std::size_t diverged_at = 0;
};

/// Noise-free closed-loop model simulation used inside the SEM cost:
/// BLA state recursion, flux model d = g_theta(y0), f_init reconstruction
/// with chained unwrap state, zero initial conditions.
ModelSimResult simulate_model(const Eigen::VectorXd& theta, const flux::BasisDescriptor& basis,
                              int n_m, const lti::DiscreteStateSpace& bla,
                              const lti::DiscreteStateSpace& controller,
                              const std::vector<double>& reference,
                              const DivergenceLimits& limits = {});

/// Fused variant accumulating the squared residual against measured Hall
/// voltages; returns +infinity on divergence or degenerate reconstruction.
double simulate_model_residual(const Eigen::VectorXd& theta, const flux::BasisDescriptor& basis,
                               int n_m, const lti::DiscreteStateSpace& bla,
                               const lti::DiscreteStateSpace& controller,
                               const std::vector<double>& reference,
                               const Eigen::MatrixXd& d_measured,
                               const DivergenceLimits& limits = {});

}  // namespace hallcal::sim
