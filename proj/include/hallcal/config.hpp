/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hallcal/flux_model.hpp"
#include "hallcal/identification.hpp"
#include "hallcal/lti.hpp"
#include "hallcal/simulation.hpp"

namespace hallcal::cfg {

struct TruthConfig {
    double perturbation = 0.1;
    std::uint64_t seed = 1;
    double amplitude = 1.0;
};

struct BlaExperimentConfig {
    int realizations = 4;
    int periods = 5;  // first one is discarded as transient
    double f_min_hz = 0.5;
    int lines = 60;  // grid is f_min * {1 .. lines}
    double amplitude_rms = 0.02;
    std::uint64_t phase_seed = 11;
    ident::BlaFitOptions fit;
};

/// The single experiment document consumed by the CLI. Unknown keys are
/// rejected, not ignored.
struct ExperimentConfig {
    double sample_rate_hz = 2000.0;
    int n_m = 11;
    lti::ContinuousTransferFunction plant;
    lti::DiscreteTransferFunction controller;
    flux::BasisDescriptor basis;
    TruthConfig truth;
    flux::NoiseModel noise;
    sim::ReferenceSignal reference;
    std::vector<double> disturbance;
    sim::DivergenceLimits limits;
    BlaExperimentConfig bla;
    ident::CalibrationOptions calibration;

    sim::SimulationConfig simulation_config() const;
    lti::DiscreteStateSpace controller_state_space() const;
    flux::FluxModel ground_truth() const;

    /// Multisine reference for one BLA realization (independent phases).
    sim::ReferenceSignal bla_reference(int realization) const;
    /// Independent noise seed for one BLA realization.
    std::uint64_t bla_noise_seed(int realization) const;
};

ExperimentConfig default_config();

/// The simulation-study preset: desk scale halves the sample rate.
ExperimentConfig paper_simulation_config(bool full_scale);

ExperimentConfig config_from_json(const nlohmann::json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// FNV-1a hash of the canonical config serialization, hex-encoded.
std::string fingerprint(const ExperimentConfig& config);

}  // namespace hallcal::cfg
