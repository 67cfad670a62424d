/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <json.hpp>

#include <chrono>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <string>
#include <vector>

#include "hallcal/serialization.hpp"
#include "hallcal/version.hpp"

namespace hallcal::cli {

/// Every output directory gets exactly one manifest describing the command,
/// the config fingerprint and the seeds, which together reproduce the run.
/// The timestamp is informational; all numeric outputs depend only on the
/// config and seeds.
inline void write_manifest(const std::filesystem::path& out_dir, const std::string& command,
                           const std::string& config_fingerprint,
                           const std::vector<std::uint64_t>& seeds,
                           const std::vector<std::string>& outputs) {
    const auto now = std::chrono::system_clock::now();
    const std::time_t tt = std::chrono::system_clock::to_time_t(now);
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%FT%TZ", std::gmtime(&tt));

    nlohmann::json j{{"command", command},
                     {"config_fingerprint", config_fingerprint},
                     {"seeds", seeds},
                     {"version", kVersion},
                     {"created", stamp},
                     {"outputs", outputs}};
    io::write_json_file(j, out_dir / "manifest.json");
}

}  // namespace hallcal::cli
