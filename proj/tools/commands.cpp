/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "commands.hpp"

#include <iostream>
#include <string>
#include <vector>

#include "hallcal/config.hpp"
#include "hallcal/identification.hpp"
#include "hallcal/serialization.hpp"
#include "hallcal/simulation.hpp"
#include "hallcal/validation.hpp"
#include "manifest.hpp"

namespace hallcal::cli {

namespace {

cfg::ExperimentConfig load_or_default(const std::filesystem::path& path) {
    if (path.empty()) {
        return cfg::default_config();
    }
    return cfg::load_config(path);
}

std::string csv_line(std::initializer_list<double> values) {
    std::string line;
    bool first = true;
    for (double v : values) {
        if (!first) {
            line += ',';
        }
        line += io::format_double(v);
        first = false;
    }
    line += '\n';
    return line;
}

void write_jtrace(const std::vector<double>& trace, const std::filesystem::path& path) {
    std::string out = "iteration,J\n";
    for (std::size_t i = 0; i < trace.size(); ++i) {
        out += std::to_string(i) + ',' + io::format_double(trace[i]) + '\n';
    }
    io::write_text_file(out, path);
}

void write_psd_csv(const validation::CumulativePsd& init, const validation::CumulativePsd& star,
                   const std::filesystem::path& path) {
    std::string out = "cycles_per_rev,cumulative_power_init,cumulative_power_star\n";
    for (std::size_t k = 0; k < init.cycles_per_rev.size(); ++k) {
        out += csv_line({init.cycles_per_rev[k], init.cumulative_power[k],
                         k < star.cumulative_power.size() ? star.cumulative_power[k] : 0.0});
    }
    io::write_text_file(out, path);
}

sim::Dataset collect_bla_realization(const cfg::ExperimentConfig& config, int realization) {
    sim::SimulationConfig sc = config.simulation_config();
    sc.reference = config.bla_reference(realization);
    sc.noise.seed = config.bla_noise_seed(realization);
    return sim::simulate_truth(sc);
}

ident::BlaEstimate run_bla_identification(const cfg::ExperimentConfig& config) {
    std::vector<sim::Dataset> experiments;
    experiments.reserve(static_cast<std::size_t>(config.bla.realizations));
    for (int i = 0; i < config.bla.realizations; ++i) {
        experiments.push_back(collect_bla_realization(config, i));
    }
    return ident::estimate_bla(experiments, config.bla.fit);
}

void write_frf_csv(const ident::BlaEstimate& bla, const std::filesystem::path& path) {
    std::string out = "freq_hz,re,im,variance\n";
    for (std::size_t i = 0; i < bla.freqs_hz.size(); ++i) {
        out += csv_line({bla.freqs_hz[i], bla.frf[i].real(), bla.frf[i].imag(),
                         bla.frf_variance[i]});
    }
    io::write_text_file(out, path);
}

}  // namespace

int cmd_simulate(const CommonOptions& opt) {
    cfg::ExperimentConfig config = load_or_default(opt.config_path);
    if (opt.seed) {
        config.noise.seed = *opt.seed;
    }
    sim::Dataset ds = sim::simulate_truth(config.simulation_config());
    ds.fingerprint = cfg::fingerprint(config);

    io::write_dataset(ds, opt.out_dir / "dataset.csv", true);
    io::write_json_file(cfg::to_json(config), opt.out_dir / "config.json");
    write_manifest(opt.out_dir, "simulate", ds.fingerprint, {config.noise.seed, config.truth.seed},
                   {"dataset.csv", "dataset.meta.json", "config.json"});
    std::cout << "wrote " << (opt.out_dir / "dataset.csv").string() << " (" << ds.size()
              << " samples)\n";
    return 0;
}

int cmd_identify_bla(const CommonOptions& opt) {
    cfg::ExperimentConfig config = load_or_default(opt.config_path);
    if (opt.seed) {
        config.noise.seed = *opt.seed;
    }
    const ident::BlaEstimate bla = run_bla_identification(config);

    io::write_json_file(io::to_json(bla), opt.out_dir / "bla.json");
    write_frf_csv(bla, opt.out_dir / "frf.csv");
    io::write_json_file(cfg::to_json(config), opt.out_dir / "config.json");
    write_manifest(opt.out_dir, "identify-bla", cfg::fingerprint(config),
                   {config.noise.seed, config.bla.phase_seed},
                   {"bla.json", "frf.csv", "config.json"});
    std::cout << "wrote " << (opt.out_dir / "bla.json").string() << " (fit residual "
              << bla.fit_residual << ")\n";
    return 0;
}

int cmd_calibrate(const CalibrateOptions& opt) {
    cfg::ExperimentConfig config = load_or_default(opt.config_path);
    const sim::Dataset ds = io::read_dataset(opt.dataset_path);
    const ident::BlaEstimate bla = io::bla_from_json(io::read_json_file(opt.bla_path));
    if (std::abs(ds.sample_time - bla.model.sample_time) > 1e-12) {
        throw ConfigError("calibrate: dataset and BLA sample rates differ");
    }

    lti::DiscreteTransferFunction ctf = config.controller;
    ctf.sample_time = ds.sample_time;
    const lti::DiscreteStateSpace controller = lti::tf_to_ss(ctf);

    const ident::CalibrationResult result =
        ident::calibrate(ds, bla, controller, config.basis, ds.n_m, config.calibration);

    io::write_json_file(io::to_json(result.model), opt.out_dir / "flux_model.json");
    io::write_json_file(io::to_json(result.table), opt.out_dir / "table.json");
    io::write_table_binary(result.table, opt.out_dir / "table.bin");
    write_jtrace(result.j_trace, opt.out_dir / "jtrace.csv");
    io::write_json_file(io::to_json(result), opt.out_dir / "result.json");
    write_manifest(opt.out_dir, "calibrate", cfg::fingerprint(config), {ds.seed},
                   {"flux_model.json", "table.json", "table.bin", "jtrace.csv", "result.json"});
    std::cout << "c_hat=" << result.c_hat << " final_cost=" << result.final_cost << " iterations="
              << result.iterations << '\n';
    return 0;
}

int cmd_validate(const ValidateOptions& opt) {
    const sim::Dataset ds = io::read_dataset(opt.dataset_path);
    if (!ds.has_ground_truth()) {
        throw ConfigError(
            "validate: dataset lacks the hidden y0 column; ground truth is required for "
            "validation (and only for validation)");
    }
    recon::CorrectionTable table;
    if (opt.table_path.extension() == ".bin") {
        table = io::read_table_binary(opt.table_path);
    } else {
        table = io::table_from_json(io::read_json_file(opt.table_path));
    }

    const validation::ErrorSequences seq = validation::replay_errors(ds, table);
    const validation::ErrorMetrics metrics = validation::compute_error_metrics(ds, table);

    std::string err_csv = "y0,error_init,error_star\n";
    for (std::size_t k = 0; k < seq.position.size(); ++k) {
        err_csv += csv_line({seq.position[k], seq.error_init[k], seq.error_star[k]});
    }
    io::write_text_file(err_csv, opt.out_dir / "error_vs_position.csv");
    write_psd_csv(metrics.psd_init, metrics.psd_star, opt.out_dir / "cumulative_psd.csv");

    nlohmann::json m{{"rms_init", metrics.rms_init},
                     {"rms_star", metrics.rms_star},
                     {"peak_init", metrics.peak_init},
                     {"peak_star", metrics.peak_star},
                     {"improvement_factor_rms", metrics.improvement_factor_rms},
                     {"improvement_factor_peak", metrics.improvement_factor_peak},
                     {"total_power_init", metrics.psd_init.total_power()},
                     {"total_power_star", metrics.psd_star.total_power()}};
    io::write_json_file(m, opt.out_dir / "metrics.json");
    write_manifest(opt.out_dir, "validate", ds.fingerprint, {ds.seed},
                   {"metrics.json", "error_vs_position.csv", "cumulative_psd.csv"});
    std::cout << "rms_init=" << metrics.rms_init << " rms_star=" << metrics.rms_star
              << " improvement_rms=" << metrics.improvement_factor_rms << '\n';
    return 0;
}

int cmd_replicate_paper_sim(const ReplicateOptions& opt) {
    cfg::ExperimentConfig config = cfg::paper_simulation_config(opt.full_scale);
    if (opt.seed) {
        config.noise.seed = *opt.seed;
    }
    const std::string fp = cfg::fingerprint(config);

    std::cout << "collecting multisine realizations for the BLA...\n";
    const ident::BlaEstimate bla = run_bla_identification(config);
    io::write_json_file(io::to_json(bla), opt.out_dir / "bla.json");
    write_frf_csv(bla, opt.out_dir / "frf.csv");

    std::cout << "collecting ramp dataset...\n";
    sim::Dataset ds = sim::simulate_truth(config.simulation_config());
    ds.fingerprint = fp;
    io::write_dataset(ds, opt.out_dir / "dataset.csv", true);

    std::cout << "calibrating (scale correction + simulation error minimization)...\n";
    const ident::CalibrationResult result = ident::calibrate(
        ds, bla, config.controller_state_space(), config.basis, config.n_m, config.calibration);
    io::write_json_file(io::to_json(result.model), opt.out_dir / "flux_model.json");
    io::write_json_file(io::to_json(result.table), opt.out_dir / "table.json");
    io::write_table_binary(result.table, opt.out_dir / "table.bin");
    write_jtrace(result.j_trace, opt.out_dir / "jtrace.csv");
    io::write_json_file(io::to_json(result), opt.out_dir / "result.json");

    std::cout << "validating against the hidden ground truth...\n";
    const validation::ErrorMetrics metrics = validation::compute_error_metrics(ds, result.table);
    write_psd_csv(metrics.psd_init, metrics.psd_star, opt.out_dir / "cumulative_psd.csv");

    nlohmann::json summary{{"c_hat", result.c_hat},
                           {"final_cost", result.final_cost},
                           {"iterations", result.iterations},
                           {"rms_init", metrics.rms_init},
                           {"rms_star", metrics.rms_star},
                           {"peak_init", metrics.peak_init},
                           {"peak_star", metrics.peak_star},
                           {"improvement_factor_rms", metrics.improvement_factor_rms},
                           {"improvement_factor_peak", metrics.improvement_factor_peak}};
    io::write_json_file(summary, opt.out_dir / "summary.json");
    io::write_json_file(cfg::to_json(config), opt.out_dir / "config.json");
    write_manifest(opt.out_dir, opt.full_scale ? "replicate-paper-sim --full-scale"
                                               : "replicate-paper-sim --desk-scale",
                   fp, {config.noise.seed, config.truth.seed, config.bla.phase_seed},
                   {"bla.json", "frf.csv", "dataset.csv", "flux_model.json", "table.json",
                    "table.bin", "jtrace.csv", "result.json", "cumulative_psd.csv",
                    "summary.json", "config.json"});

    std::cout << "rms_init=" << metrics.rms_init << " rad, rms_star=" << metrics.rms_star
              << " rad, improvement x" << metrics.improvement_factor_rms << '\n';
    return 0;
}

}  // namespace hallcal::cli
