/*
 * SPDX-License-Identifier: Apache-2.0
 */

// Acceptance suite: one pass/fail line per criterion. Heavy artifacts
// (the calibration study) are shared between the criteria that grade the
// same run. Usage: hallcal_acceptance [criterion ...]; default all.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hallcal/config.hpp"
#include "hallcal/identification.hpp"
#include "hallcal/rng.hpp"
#include "hallcal/serialization.hpp"
#include "hallcal/simulation.hpp"
#include "hallcal/validation.hpp"
#include "oracles.hpp"

using namespace hallcal;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Outcome {
    bool pass = false;
    std::string detail;
};

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---------------------------------------------------------------------------
// shared study artifacts (criteria 2, 3, 7, 9)

struct StudyRun {
    cfg::ExperimentConfig config;
    flux::FluxModel truth;
    sim::Dataset dataset;
    ident::BlaEstimate bla;
    ident::CalibrationResult result;
    validation::ErrorMetrics metrics;
    double noise_floor_rms = 0.0;
};

ident::BlaEstimate run_bla(const cfg::ExperimentConfig& config) {
    std::vector<sim::Dataset> exps;
    for (int i = 0; i < config.bla.realizations; ++i) {
        sim::SimulationConfig sc = config.simulation_config();
        sc.reference = config.bla_reference(i);
        sc.noise.seed = config.bla_noise_seed(i);
        exps.push_back(sim::simulate_truth(sc));
    }
    return ident::estimate_bla(exps, config.bla.fit);
}

/// RMS angle error of the exact inverse of the true flux map applied to
/// noisy voltages: the level the paper calls the noise floor.
double noise_floor_oracle(const flux::FluxModel& truth, double noise_variance,
                          std::uint64_t seed, int grid = 3000) {
    Rng rng(seed);
    const double sigma = std::sqrt(noise_variance);
    const double halfwidth = std::numbers::pi / truth.pole_pairs;
    double acc = 0.0;
    for (int i = 0; i < grid; ++i) {
        const double y0 = kTwoPi * (i + 0.5) / grid;
        Eigen::Vector3d d = flux::eval_flux(truth, y0);
        for (int ch = 0; ch < 3; ++ch) {
            d(ch) += sigma * rng.gaussian();
        }
        const double inv = oracles::invert_flux(truth, d, y0 - halfwidth, y0 + halfwidth);
        acc += (inv - y0) * (inv - y0);
    }
    return std::sqrt(acc / grid);
}

StudyRun run_study(const cfg::ExperimentConfig& config) {
    StudyRun study;
    study.config = config;
    study.truth = config.ground_truth();
    study.bla = run_bla(config);
    study.dataset = sim::simulate_truth(config.simulation_config());
    study.dataset.fingerprint = cfg::fingerprint(config);
    study.result = ident::calibrate(study.dataset, study.bla, config.controller_state_space(),
                                    config.basis, config.n_m, config.calibration);
    study.metrics = validation::compute_error_metrics(study.dataset, study.result.table);
    study.noise_floor_rms = noise_floor_oracle(study.truth, config.noise.variance, 777);
    return study;
}

std::optional<StudyRun> g_fourier_study;

const StudyRun& fourier_study() {
    if (!g_fourier_study) {
        std::printf("  [running the simulation-study calibration, Fourier basis ...]\n");
        g_fourier_study = run_study(cfg::default_config());
    }
    return *g_fourier_study;
}

// ---------------------------------------------------------------------------

Outcome criterion_1() {
    const auto t0 = std::chrono::steady_clock::now();
    const int n_m = 11;
    const int steps = 200000;
    recon::ReconstructionState state{0.0};
    double max_err = 0.0;
    for (int k = 0; k <= steps; ++k) {
        const double y0 = kTwoPi * k / steps;
        const double electrical = n_m * y0;
        const Eigen::Vector3d d(std::cos(electrical), std::cos(electrical - kTwoPi / 3.0),
                                std::cos(electrical + kTwoPi / 3.0));
        const double y = recon::f_init(d, state, n_m);
        state.phi = y;
        max_err = std::max(max_err, std::abs(y - y0));
    }
    const double elapsed = seconds_since(t0);
    Outcome out;
    out.pass = max_err < 1e-9 && elapsed < 1.0;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "pure-sinusoid sweep max error %.2e rad (< 1e-9), runtime %.2f s (< 1 s)",
                  max_err, elapsed);
    out.detail = buf;
    return out;
}

Outcome criterion_2() {
    const StudyRun& s = fourier_study();
    const double ratio = s.metrics.rms_star / s.noise_floor_rms;
    const double improvement = s.metrics.improvement_factor_rms;
    Outcome out;
    out.pass = ratio <= 1.5 && improvement >= 5.0;
    char buf[240];
    std::snprintf(buf, sizeof buf,
                  "corrected RMS %.3e rad = %.2f x noise floor %.3e (<= 1.5), RMS improvement "
                  "%.1f (>= 5); c_hat %.4f, %d iterations",
                  s.metrics.rms_star, ratio, s.noise_floor_rms, improvement, s.result.c_hat,
                  s.result.iterations);
    out.detail = buf;
    return out;
}

Outcome criterion_3() {
    const StudyRun& s = fourier_study();
    const double sigma_h = std::sqrt(s.config.noise.variance);
    const int grid = 20000;
    double worst = 0.0;
    Eigen::Vector3d acc = Eigen::Vector3d::Zero();
    for (int i = 0; i < grid; ++i) {
        const double y0 = kTwoPi * i / grid;
        const Eigen::Vector3d diff =
            flux::eval_flux(s.result.model, y0) - flux::eval_flux(s.truth, y0);
        acc += diff.cwiseAbs2();
    }
    for (int ch = 0; ch < 3; ++ch) {
        worst = std::max(worst, std::sqrt(acc(ch) / grid) / sigma_h);
    }
    Outcome out;
    out.pass = worst <= 1.3;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "worst per-channel flux RMS error %.2f x sigma_h (<= 1.3)", worst);
    out.detail = buf;
    return out;
}

Outcome criterion_4() {
    const auto t0 = std::chrono::steady_clock::now();
    cfg::ExperimentConfig c = cfg::default_config();
    c.truth.perturbation = 0.0;
    sim::RampReference ramp;
    ramp.end_rad = 13.0;
    ramp.duration_s = 1.0;
    c.reference.shape = ramp;

    const auto controller = c.controller_state_space();
    const auto theta0 = flux::initial_theta(c.basis, c.n_m, 1.0);
    const auto gd = lti::discretize_zoh(c.plant, 1.0 / c.sample_rate_hz);

    Outcome out;
    out.pass = true;
    std::string detail;

    for (double injected : {0.5, 2.0, 5.0}) {
        ident::BlaEstimate bla;
        bla.model = gd.scaled_input(injected);

        // zero noise: within 1 percent
        c.noise.variance = 0.0;
        const sim::Dataset clean = sim::simulate_truth(c.simulation_config());
        const double clean_err =
            std::abs(ident::estimate_scale(bla, clean, theta0, c.basis, c.n_m, controller).c_hat -
                     injected) /
            injected;

        // sigma^2 = 7.5e-6: median over 10 seeds within 2 percent
        c.noise.variance = 7.5e-6;
        std::vector<double> errs;
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            c.noise.seed = 9000 + seed;
            const sim::Dataset noisy = sim::simulate_truth(c.simulation_config());
            errs.push_back(
                std::abs(
                    ident::estimate_scale(bla, noisy, theta0, c.basis, c.n_m, controller).c_hat -
                    injected) /
                injected);
        }
        std::sort(errs.begin(), errs.end());
        const double median = errs[errs.size() / 2];

        out.pass = out.pass && clean_err < 0.01 && median < 0.02;
        char buf[120];
        std::snprintf(buf, sizeof buf, " c=%.1f: clean %.3f%%, noisy median %.3f%%;", injected,
                      100.0 * clean_err, 100.0 * median);
        detail += buf;
    }
    const double elapsed = seconds_since(t0);
    out.pass = out.pass && elapsed < 300.0;
    char buf[64];
    std::snprintf(buf, sizeof buf, " runtime %.0f s (< 300)", elapsed);
    out.detail = detail + buf;
    return out;
}

Outcome criterion_5() {
    const auto t0 = std::chrono::steady_clock::now();
    cfg::ExperimentConfig c = cfg::default_config();
    c.noise.variance = 0.0;
    sim::RampReference ramp;
    ramp.end_rad = 13.0;
    ramp.duration_s = 6.0;  // 12001 samples
    c.reference.shape = ramp;

    const sim::Dataset ds = sim::simulate_truth(c.simulation_config());
    const auto truth = c.ground_truth();
    const auto bla = lti::discretize_zoh(c.plant, 1.0 / c.sample_rate_hz);
    const auto res = sim::simulate_model(truth.theta, truth.basis, c.n_m, bla,
                                         c.controller_state_space(), ds.r);
    double max_dev = 0.0;
    if (res.diverged) {
        max_dev = std::numeric_limits<double>::infinity();
    } else {
        for (Eigen::Index k = 0; k < res.d_sim.rows(); ++k) {
            max_dev = std::max(max_dev, (res.d_sim.row(k) - ds.d.row(k)).cwiseAbs().maxCoeff());
            max_dev =
                std::max(max_dev, std::abs(res.y_sim(k) - ds.y[static_cast<std::size_t>(k)]));
        }
    }
    const double elapsed = seconds_since(t0);
    Outcome out;
    out.pass = max_dev < 1e-9 && ds.size() >= 10000 && elapsed < 10.0;
    char buf[160];
    std::snprintf(buf, sizeof buf,
                  "max simulator deviation %.2e (< 1e-9) over %zu samples, runtime %.1f s (< 10)",
                  max_dev, ds.size(), elapsed);
    out.detail = buf;
    return out;
}

Outcome criterion_6() {
    const auto t0 = std::chrono::steady_clock::now();
    // smooth distorted model: third electrical harmonic on n_m = 7
    const int n_m = 7;
    flux::FourierBasis fb;
    for (int h = 1; h <= 3 * n_m; ++h) {
        fb.harmonics.push_back(h);
    }
    const flux::BasisDescriptor desc{fb};
    flux::FluxModel model{desc, flux::initial_theta(desc, n_m, 1.0), n_m};
    const Eigen::Index m = desc.dimension();
    for (int ch = 0; ch < 3; ++ch) {
        const double phase = kTwoPi * ch / 3.0;
        model.theta(ch * m + 2 * (3 * n_m) - 1) += 0.05 * std::sin(phase);
        model.theta(ch * m + 2 * (3 * n_m)) += 0.05 * std::cos(phase);
    }

    auto max_roundtrip = [&](std::size_t table_size) {
        const auto table = recon::build_lut(model, table_size);
        double worst = 0.0;
        for (int i = 0; i < 20000; ++i) {
            const double y0 = kTwoPi * i / 20000.0;
            const double est = recon::f_star(flux::eval_flux(model, y0),
                                             recon::ReconstructionState{y0}, n_m, table);
            worst = std::max(worst, std::abs(est - y0));
        }
        return worst;
    };
    const double e512 = max_roundtrip(512);
    const double e1024 = max_roundtrip(1024);
    const double e2048 = max_roundtrip(2048);
    const double elapsed = seconds_since(t0);

    Outcome out;
    out.pass = (e512 / e1024 >= 3.0) && (e1024 / e2048 >= 3.0) && elapsed < 30.0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "max roundtrip error %.2e -> %.2e -> %.2e rad (ratios %.1f, %.1f >= 3), "
                  "runtime %.1f s (< 30)",
                  e512, e1024, e2048, e512 / e1024, e1024 / e2048, elapsed);
    out.detail = buf;
    return out;
}

Outcome criterion_7() {
    const StudyRun& s = fourier_study();
    const double total = s.metrics.psd_init.total_power();
    double in_band = 0.0;
    for (double f : {11.0, 22.0, 33.0}) {
        in_band += validation::band_power(s.metrics.psd_init, f - 0.5, f + 0.5);
    }
    const double fraction = in_band / total;
    const double power_ratio = total / s.metrics.psd_star.total_power();
    Outcome out;
    out.pass = fraction >= 0.60 && power_ratio >= 20.0;
    char buf[200];
    std::snprintf(buf, sizeof buf,
                  "%.1f%% of initial error power at {11,22,33} +/- 0.5 cyc/rev (>= 60%%), "
                  "total power reduced %.0f x (>= 20)",
                  100.0 * fraction, power_ratio);
    out.detail = buf;
    return out;
}

Outcome criterion_8() {
    // The hardware numbers of the physical BLDC experiment need the rig and
    // are out of scope; the periodic-kernel identification path is instead
    // validated on the simulation study: same motor and data collection,
    // kernel model structure for the calibration.
    std::printf("  [running the simulation-study calibration, kernel basis ...]\n");
    const cfg::ExperimentConfig data_cfg = cfg::default_config();
    const flux::FluxModel truth = data_cfg.ground_truth();
    const ident::BlaEstimate bla = run_bla(data_cfg);
    const sim::Dataset dataset = sim::simulate_truth(data_cfg.simulation_config());

    const flux::BasisDescriptor kernel_basis{flux::make_kernel_basis(64, 1.0, 0.1)};
    ident::CalibrationOptions options = data_cfg.calibration;
    options.optimizer.max_iterations = 60;
    const ident::CalibrationResult result = ident::calibrate(
        dataset, bla, data_cfg.controller_state_space(), kernel_basis, data_cfg.n_m, options);
    const validation::ErrorMetrics metrics =
        validation::compute_error_metrics(dataset, result.table);
    const double floor_rms = noise_floor_oracle(truth, data_cfg.noise.variance, 777);

    Outcome out;
    const double improvement = metrics.improvement_factor_rms;
    out.pass = improvement >= 3.0 && kernel_basis.dimension() <= 200;
    char buf[240];
    std::snprintf(buf, sizeof buf,
                  "kernel basis (m=%ld) RMS improvement %.1f (>= 3); corrected RMS %.3e rad "
                  "(floor %.3e); hardware-rig numbers remain out of scope",
                  static_cast<long>(kernel_basis.dimension()), improvement, metrics.rms_star,
                  floor_rms);
    out.detail = buf;
    return out;
}

Outcome criterion_9() {
    namespace fs = std::filesystem;
    const fs::path base = fs::temp_directory_path() / "hallcal_acceptance_determinism";
    fs::remove_all(base);

    // criterion-2 pipeline twice, byte-compared through the serialized files
    const auto dump_study = [&](const StudyRun& s, const fs::path& dir) {
        io::write_dataset(s.dataset, dir / "dataset.csv", true);
        io::write_json_file(io::to_json(s.result.model), dir / "flux_model.json");
        io::write_table_binary(s.result.table, dir / "table.bin");
        io::write_json_file(io::to_json(s.bla), dir / "bla.json");
        std::string trace = "iteration,J\n";
        for (std::size_t i = 0; i < s.result.j_trace.size(); ++i) {
            trace += std::to_string(i) + ',' + io::format_double(s.result.j_trace[i]) + '\n';
        }
        io::write_text_file(trace, dir / "jtrace.csv");
    };
    dump_study(fourier_study(), base / "a");
    dump_study(run_study(cfg::default_config()), base / "b");

    // criterion-4 style scale estimation twice
    const auto dump_scale = [&](const fs::path& file) {
        cfg::ExperimentConfig c = cfg::default_config();
        c.truth.perturbation = 0.0;
        c.noise.variance = 7.5e-6;
        c.noise.seed = 12345;
        sim::RampReference ramp;
        ramp.end_rad = 13.0;
        ramp.duration_s = 1.0;
        c.reference.shape = ramp;
        const sim::Dataset data = sim::simulate_truth(c.simulation_config());
        ident::BlaEstimate bla;
        bla.model = lti::discretize_zoh(c.plant, 1.0 / c.sample_rate_hz).scaled_input(2.0);
        const auto est = ident::estimate_scale(bla, data, flux::initial_theta(c.basis, c.n_m, 1.0),
                                               c.basis, c.n_m, c.controller_state_space());
        std::string text = io::format_double(est.c_hat) + "\n";
        for (std::size_t i = 0; i < est.scan_c.size(); ++i) {
            text += io::format_double(est.scan_c[i]) + ',' + io::format_double(est.scan_cost[i]) +
                    '\n';
        }
        io::write_text_file(text, file);
    };
    dump_scale(base / "a" / "scale.csv");
    dump_scale(base / "b" / "scale.csv");

    const auto identical = [&](const char* name) {
        std::ifstream fa(base / "a" / name, std::ios::binary);
        std::ifstream fb(base / "b" / name, std::ios::binary);
        const std::string sa((std::istreambuf_iterator<char>(fa)),
                             std::istreambuf_iterator<char>());
        const std::string sb((std::istreambuf_iterator<char>(fb)),
                             std::istreambuf_iterator<char>());
        return !sa.empty() && sa == sb;
    };

    Outcome out;
    out.pass = true;
    std::string detail = "byte-identical across repeated runs:";
    for (const char* name :
         {"dataset.csv", "flux_model.json", "table.bin", "bla.json", "jtrace.csv", "scale.csv"}) {
        const bool same = identical(name);
        out.pass = out.pass && same;
        detail += std::string(" ") + name + (same ? " ok" : " MISMATCH");
    }
    out.detail = detail;
    fs::remove_all(base);
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    std::set<int> selected;
    for (int i = 1; i < argc; ++i) {
        selected.insert(std::atoi(argv[i]));
    }
    const auto enabled = [&](int id) { return selected.empty() || selected.count(id) > 0; };

    std::map<int, Outcome (*)()> criteria = {
        {1, criterion_1}, {2, criterion_2}, {3, criterion_3},
        {4, criterion_4}, {5, criterion_5}, {6, criterion_6},
        {7, criterion_7}, {8, criterion_8}, {9, criterion_9},
    };

    int failures = 0;
    for (const auto& [id, fn] : criteria) {
        if (!enabled(id)) {
            continue;
        }
        Outcome out;
        try {
            out = fn();
        } catch (const std::exception& e) {
            out.pass = false;
            out.detail = std::string("exception: ") + e.what();
        }
        std::printf("%s Criterion %d: %s\n", out.pass ? "PASS" : "FAIL", id, out.detail.c_str());
        std::fflush(stdout);
        if (!out.pass) {
            ++failures;
        }
    }
    return failures;
}
