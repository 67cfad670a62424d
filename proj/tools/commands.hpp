/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>

#include "hallcal/errors.hpp"

namespace hallcal::cli {

struct CommonOptions {
    std::filesystem::path config_path;
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;  // overrides the config noise seed
};

int cmd_simulate(const CommonOptions& opt);
int cmd_identify_bla(const CommonOptions& opt);

struct CalibrateOptions {
    std::filesystem::path dataset_path;
    std::filesystem::path bla_path;
    std::filesystem::path config_path;  // optional; defaults when empty
    std::filesystem::path out_dir;
};
int cmd_calibrate(const CalibrateOptions& opt);

struct ValidateOptions {
    std::filesystem::path dataset_path;
    std::filesystem::path table_path;
    std::filesystem::path out_dir;
};
int cmd_validate(const ValidateOptions& opt);

struct ReplicateOptions {
    std::filesystem::path out_dir;
    std::optional<std::uint64_t> seed;
    bool full_scale = false;
};
int cmd_replicate_paper_sim(const ReplicateOptions& opt);

/// Exit codes: 0 success, 2 config error, 3 numerical failure, 4 bijectivity
/// failure.
template <typename Fn>
int guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const BijectivityError& e) {
        std::cerr << "bijectivity failure: " << e.what() << '\n';
        return 4;
    } catch (const NumericalError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}

}  // namespace hallcal::cli
