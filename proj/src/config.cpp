/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/config.hpp"

#include <algorithm>
#include <cstdio>
#include <initializer_list>

#include "hallcal/errors.hpp"
#include "hallcal/rng.hpp"
#include "hallcal/serialization.hpp"

namespace hallcal::cfg {

using nlohmann::json;

namespace {

void require_keys(const json& j, const std::string& where,
                  std::initializer_list<const char*> allowed) {
    if (!j.is_object()) {
        throw ConfigError("config: '" + where + "' must be an object");
    }
    for (const auto& item : j.items()) {
        if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
                return item.key() == k;
            }) == allowed.end()) {
            throw ConfigError("config: unknown key '" + item.key() + "' in '" + where + "'");
        }
    }
}

sim::ReferenceSignal parse_reference(const json& j, double sample_rate) {
    sim::ReferenceSignal ref;
    ref.sample_rate_hz = sample_rate;
    const std::string type = j.at("type").get<std::string>();
    if (type == "ramp") {
        require_keys(j, "reference", {"type", "start_rad", "end_rad", "duration_s"});
        sim::RampReference r;
        r.start_rad = j.value("start_rad", 0.0);
        r.end_rad = j.at("end_rad").get<double>();
        r.duration_s = j.at("duration_s").get<double>();
        ref.shape = r;
    } else if (type == "multisine") {
        require_keys(j, "reference",
                     {"type", "frequencies_hz", "amplitude_rms", "phase_seed", "periods"});
        sim::MultisineReference m;
        m.frequencies_hz = j.at("frequencies_hz").get<std::vector<double>>();
        m.amplitude_rms = j.at("amplitude_rms").get<double>();
        m.phase_seed = j.value("phase_seed", std::uint64_t{0});
        m.periods = j.value("periods", 1);
        ref.shape = m;
    } else {
        throw ConfigError("config: unknown reference type '" + type + "'");
    }
    ref.validate();
    return ref;
}

json reference_to_json(const sim::ReferenceSignal& ref) {
    if (ref.is_ramp()) {
        const auto& r = ref.ramp();
        return json{{"type", "ramp"},
                    {"start_rad", r.start_rad},
                    {"end_rad", r.end_rad},
                    {"duration_s", r.duration_s}};
    }
    const auto& m = ref.multisine();
    return json{{"type", "multisine"},
                {"frequencies_hz", m.frequencies_hz},
                {"amplitude_rms", m.amplitude_rms},
                {"phase_seed", m.phase_seed},
                {"periods", m.periods}};
}

std::vector<double> parse_disturbance(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "none") {
        require_keys(j, "disturbance", {"type"});
        return {};
    }
    if (type == "constant") {
        require_keys(j, "disturbance", {"type", "value"});
        return {j.at("value").get<double>()};
    }
    if (type == "samples") {
        require_keys(j, "disturbance", {"type", "values"});
        return j.at("values").get<std::vector<double>>();
    }
    throw ConfigError("config: unknown disturbance type '" + type + "'");
}

json disturbance_to_json(const std::vector<double>& d) {
    if (d.empty()) {
        return json{{"type", "none"}};
    }
    if (d.size() == 1) {
        return json{{"type", "constant"}, {"value", d[0]}};
    }
    return json{{"type", "samples"}, {"values", d}};
}

}  // namespace

sim::SimulationConfig ExperimentConfig::simulation_config() const {
    sim::SimulationConfig sc;
    sc.plant = plant;
    sc.controller = controller;
    sc.controller.sample_time = 1.0 / sample_rate_hz;
    sc.flux_truth = ground_truth();
    sc.noise = noise;
    sc.reference = reference;
    sc.reference.sample_rate_hz = sample_rate_hz;
    sc.disturbance = disturbance;
    sc.limits = limits;
    return sc;
}

lti::DiscreteStateSpace ExperimentConfig::controller_state_space() const {
    lti::DiscreteTransferFunction tf = controller;
    tf.sample_time = 1.0 / sample_rate_hz;
    return lti::tf_to_ss(tf);
}

flux::FluxModel ExperimentConfig::ground_truth() const {
    return flux::make_ground_truth(basis, n_m, truth.perturbation, truth.seed, truth.amplitude);
}

sim::ReferenceSignal ExperimentConfig::bla_reference(int realization) const {
    sim::MultisineReference m;
    m.frequencies_hz.resize(static_cast<std::size_t>(bla.lines));
    for (int k = 0; k < bla.lines; ++k) {
        m.frequencies_hz[static_cast<std::size_t>(k)] = bla.f_min_hz * static_cast<double>(k + 1);
    }
    m.amplitude_rms = bla.amplitude_rms;
    m.phase_seed = Rng::derive(bla.phase_seed, static_cast<std::uint64_t>(realization));
    m.periods = bla.periods;
    sim::ReferenceSignal ref;
    ref.shape = m;
    ref.sample_rate_hz = sample_rate_hz;
    ref.validate();
    return ref;
}

std::uint64_t ExperimentConfig::bla_noise_seed(int realization) const {
    return Rng::derive(noise.seed, 1000 + static_cast<std::uint64_t>(realization));
}

ExperimentConfig default_config() {
    ExperimentConfig c;
    c.sample_rate_hz = 2000.0;
    c.n_m = 11;
    c.plant.num = {1.663e5};
    c.plant.den = {1.0, 632.6, 2702.0, 0.0};
    c.plant.input_delay = 1.2e-4;
    c.controller =
        lti::DiscreteTransferFunction({2.94, -3.29, -2.10, 2.45},
                                      {1.0, -3.45, 4.52, -2.68, 0.61}, 1.0 / c.sample_rate_hz);
    flux::FourierBasis fb;
    fb.harmonics = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11};
    c.basis.shape = fb;
    c.truth = TruthConfig{};
    c.noise.variance = 7.5e-6;
    c.noise.seed = 42;
    sim::RampReference ramp;
    ramp.start_rad = 0.0;
    ramp.end_rad = 13.0;
    ramp.duration_s = 26.0;
    c.reference.shape = ramp;
    c.reference.sample_rate_hz = c.sample_rate_hz;

    // The excitation must pin the FRF through the 8-40 Hz crossover region:
    // the loop runs with a thin phase margin there and the scale-candidate
    // simulations go unstable if the fit drifts. One numerator zero captures
    // the sampling-zero/fractional-delay phase that a zeroless fit cannot.
    c.bla.amplitude_rms = 0.04;
    c.bla.realizations = 6;
    c.bla.periods = 6;
    c.bla.lines = 120;
    c.bla.fit.zeros = 1;
    return c;
}

ExperimentConfig paper_simulation_config(bool full_scale) {
    ExperimentConfig c = default_config();
    if (full_scale) {
        c.sample_rate_hz = 4000.0;
        c.reference.sample_rate_hz = 4000.0;
        c.controller.sample_time = 1.0 / 4000.0;
    }
    return c;
}

ExperimentConfig config_from_json(const json& j) {
    require_keys(j, "<root>",
                 {"sample_rate_hz", "n_m", "plant", "controller", "basis", "truth", "noise",
                  "reference", "disturbance", "limits", "bla", "calibration"});
    ExperimentConfig c = default_config();

    c.sample_rate_hz = j.value("sample_rate_hz", c.sample_rate_hz);
    if (c.sample_rate_hz <= 0.0) {
        throw ConfigError("config: sample_rate_hz must be > 0");
    }
    c.n_m = j.value("n_m", c.n_m);
    if (c.n_m <= 0) {
        throw ConfigError("config: n_m must be positive");
    }

    if (j.contains("plant")) {
        const json& p = j.at("plant");
        require_keys(p, "plant", {"num", "den", "delay"});
        c.plant.num = p.at("num").get<std::vector<double>>();
        c.plant.den = p.at("den").get<std::vector<double>>();
        c.plant.input_delay = p.value("delay", 0.0);
        c.plant.validate();
    }
    if (j.contains("controller")) {
        const json& p = j.at("controller");
        require_keys(p, "controller", {"num", "den"});
        c.controller = lti::DiscreteTransferFunction(p.at("num").get<std::vector<double>>(),
                                                     p.at("den").get<std::vector<double>>(),
                                                     1.0 / c.sample_rate_hz);
    }
    if (j.contains("basis")) {
        const json& b = j.at("basis");
        require_keys(b, "basis", {"type", "harmonics", "centers", "signal_variance",
                                  "length_scale"});
        c.basis = io::basis_from_json(b);
    }
    if (j.contains("truth")) {
        const json& t = j.at("truth");
        require_keys(t, "truth", {"perturbation", "seed", "amplitude"});
        c.truth.perturbation = t.value("perturbation", c.truth.perturbation);
        c.truth.seed = t.value("seed", c.truth.seed);
        c.truth.amplitude = t.value("amplitude", c.truth.amplitude);
    }
    if (j.contains("noise")) {
        const json& n = j.at("noise");
        require_keys(n, "noise", {"variance", "seed"});
        c.noise.variance = n.value("variance", c.noise.variance);
        if (c.noise.variance < 0.0) {
            throw ConfigError("config: noise variance must be >= 0");
        }
        c.noise.seed = n.value("seed", c.noise.seed);
    }
    if (j.contains("reference")) {
        c.reference = parse_reference(j.at("reference"), c.sample_rate_hz);
    } else {
        c.reference.sample_rate_hz = c.sample_rate_hz;
    }
    if (j.contains("disturbance")) {
        c.disturbance = parse_disturbance(j.at("disturbance"));
    }
    if (j.contains("limits")) {
        const json& l = j.at("limits");
        require_keys(l, "limits", {"max_angle", "max_torque"});
        c.limits.max_angle = l.value("max_angle", c.limits.max_angle);
        c.limits.max_torque = l.value("max_torque", c.limits.max_torque);
    }
    if (j.contains("bla")) {
        const json& b = j.at("bla");
        require_keys(b, "bla",
                     {"realizations", "periods", "f_min_hz", "lines", "amplitude_rms",
                      "phase_seed", "poles", "zeros", "integrators", "delay_allowance",
                      "sk_iterations"});
        c.bla.realizations = b.value("realizations", c.bla.realizations);
        c.bla.periods = b.value("periods", c.bla.periods);
        c.bla.f_min_hz = b.value("f_min_hz", c.bla.f_min_hz);
        c.bla.lines = b.value("lines", c.bla.lines);
        c.bla.amplitude_rms = b.value("amplitude_rms", c.bla.amplitude_rms);
        c.bla.phase_seed = b.value("phase_seed", c.bla.phase_seed);
        c.bla.fit.poles = b.value("poles", c.bla.fit.poles);
        c.bla.fit.zeros = b.value("zeros", c.bla.fit.zeros);
        c.bla.fit.integrators = b.value("integrators", c.bla.fit.integrators);
        c.bla.fit.delay_allowance = b.value("delay_allowance", c.bla.fit.delay_allowance);
        c.bla.fit.sk_iterations = b.value("sk_iterations", c.bla.fit.sk_iterations);
    }
    if (j.contains("calibration")) {
        const json& k = j.at("calibration");
        require_keys(k, "calibration",
                     {"lut_size", "max_iterations", "tolerance", "fd_step_abs", "fd_step_rel",
                      "spectral_cutoff", "threads", "scale_bracket_lo", "scale_bracket_hi",
                      "scale_scan_points", "optimize_hyperparameters"});
        c.calibration.lut_size = k.value("lut_size", c.calibration.lut_size);
        c.calibration.optimizer.max_iterations =
            k.value("max_iterations", c.calibration.optimizer.max_iterations);
        c.calibration.optimizer.tolerance = k.value("tolerance", c.calibration.optimizer.tolerance);
        c.calibration.optimizer.fd_step_abs =
            k.value("fd_step_abs", c.calibration.optimizer.fd_step_abs);
        c.calibration.optimizer.fd_step_rel =
            k.value("fd_step_rel", c.calibration.optimizer.fd_step_rel);
        c.calibration.optimizer.spectral_cutoff =
            k.value("spectral_cutoff", c.calibration.optimizer.spectral_cutoff);
        c.calibration.optimizer.threads = k.value("threads", c.calibration.optimizer.threads);
        c.calibration.scale.bracket_lo = k.value("scale_bracket_lo", c.calibration.scale.bracket_lo);
        c.calibration.scale.bracket_hi = k.value("scale_bracket_hi", c.calibration.scale.bracket_hi);
        c.calibration.scale.scan_points =
            k.value("scale_scan_points", c.calibration.scale.scan_points);
        c.calibration.optimize_hyperparameters =
            k.value("optimize_hyperparameters", c.calibration.optimize_hyperparameters);
    }
    return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    return config_from_json(io::read_json_file(path));
}

json to_json(const ExperimentConfig& c) {
    return json{
        {"sample_rate_hz", c.sample_rate_hz},
        {"n_m", c.n_m},
        {"plant", {{"num", c.plant.num}, {"den", c.plant.den}, {"delay", c.plant.input_delay}}},
        {"controller", {{"num", c.controller.num}, {"den", c.controller.den}}},
        {"basis", io::to_json(c.basis)},
        {"truth",
         {{"perturbation", c.truth.perturbation},
          {"seed", c.truth.seed},
          {"amplitude", c.truth.amplitude}}},
        {"noise", {{"variance", c.noise.variance}, {"seed", c.noise.seed}}},
        {"reference", reference_to_json(c.reference)},
        {"disturbance", disturbance_to_json(c.disturbance)},
        {"limits", {{"max_angle", c.limits.max_angle}, {"max_torque", c.limits.max_torque}}},
        {"bla",
         {{"realizations", c.bla.realizations},
          {"periods", c.bla.periods},
          {"f_min_hz", c.bla.f_min_hz},
          {"lines", c.bla.lines},
          {"amplitude_rms", c.bla.amplitude_rms},
          {"phase_seed", c.bla.phase_seed},
          {"poles", c.bla.fit.poles},
          {"zeros", c.bla.fit.zeros},
          {"integrators", c.bla.fit.integrators},
          {"delay_allowance", c.bla.fit.delay_allowance},
          {"sk_iterations", c.bla.fit.sk_iterations}}},
        {"calibration",
         {{"lut_size", c.calibration.lut_size},
          {"max_iterations", c.calibration.optimizer.max_iterations},
          {"tolerance", c.calibration.optimizer.tolerance},
          {"fd_step_abs", c.calibration.optimizer.fd_step_abs},
          {"fd_step_rel", c.calibration.optimizer.fd_step_rel},
          {"spectral_cutoff", c.calibration.optimizer.spectral_cutoff},
          {"threads", c.calibration.optimizer.threads},
          {"scale_bracket_lo", c.calibration.scale.bracket_lo},
          {"scale_bracket_hi", c.calibration.scale.bracket_hi},
          {"scale_scan_points", c.calibration.scale.scan_points},
          {"optimize_hyperparameters", c.calibration.optimize_hyperparameters}}}};
}

std::string fingerprint(const ExperimentConfig& config) {
    const std::string dump = to_json(config).dump();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char ch : dump) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    char buf[20];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

}  // namespace hallcal::cfg
