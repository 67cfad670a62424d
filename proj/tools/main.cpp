/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <CLI11.hpp>

#include <cstdint>
#include <string>

#include "commands.hpp"
#include "hallcal/version.hpp"

int main(int argc, char** argv) {
    CLI::App app{"Self-calibration toolkit for linear analog Hall sensors"};
    app.set_version_flag("--version", std::string("hallcal ") + hallcal::kVersion);
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;

    auto add_seed = [&](CLI::App* cmd) {
        cmd->add_option("--seed", seed, "Override the noise seed")
            ->each([&](const std::string&) { seed_set = true; });
    };

    auto* simulate = app.add_subcommand("simulate", "Run the closed-loop truth simulator");
    simulate->add_option("--config", config_path, "Experiment config JSON");
    simulate->add_option("--out", out_dir, "Output directory");
    add_seed(simulate);

    auto* identify = app.add_subcommand("identify-bla",
                                        "Estimate the best linear approximation from "
                                        "multisine experiments");
    identify->add_option("--config", config_path, "Experiment config JSON");
    identify->add_option("--out", out_dir, "Output directory");
    add_seed(identify);

    std::string dataset_path;
    std::string bla_path;
    std::string table_path;

    auto* calibrate = app.add_subcommand("calibrate", "Run the calibration pipeline on a dataset");
    calibrate->add_option("--dataset", dataset_path, "Dataset CSV")->required();
    calibrate->add_option("--bla", bla_path, "BLA JSON")->required();
    calibrate->add_option("--config", config_path, "Experiment config JSON");
    calibrate->add_option("--out", out_dir, "Output directory");

    auto* validate = app.add_subcommand("validate",
                                        "Compute error metrics against the hidden ground truth");
    validate->add_option("--dataset", dataset_path, "Dataset CSV with the y0 column")->required();
    validate->add_option("--table", table_path, "Correction table (.bin or .json)")->required();
    validate->add_option("--out", out_dir, "Output directory");

    bool full_scale = false;
    bool desk_scale = false;
    auto* replicate = app.add_subcommand("replicate-paper-sim",
                                         "Run the full simulation study end to end");
    replicate->add_option("--out", out_dir, "Output directory");
    replicate->add_flag("--full-scale", full_scale, "4 kHz sample rate (slow)");
    replicate->add_flag("--desk-scale", desk_scale, "2 kHz sample rate (default)");
    add_seed(replicate);

    CLI11_PARSE(app, argc, argv);

    using namespace hallcal::cli;
    const auto seed_opt = seed_set ? std::optional<std::uint64_t>(seed) : std::nullopt;

    if (simulate->parsed()) {
        return guarded([&] { return cmd_simulate({config_path, out_dir, seed_opt}); });
    }
    if (identify->parsed()) {
        return guarded([&] { return cmd_identify_bla({config_path, out_dir, seed_opt}); });
    }
    if (calibrate->parsed()) {
        return guarded(
            [&] { return cmd_calibrate({dataset_path, bla_path, config_path, out_dir}); });
    }
    if (validate->parsed()) {
        return guarded([&] { return cmd_validate({dataset_path, table_path, out_dir}); });
    }
    if (replicate->parsed()) {
        return guarded(
            [&] { return cmd_replicate_paper_sim({out_dir, seed_opt, full_scale}); });
    }
    return 1;
}
