/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <json.hpp>

#include <filesystem>
#include <string>

#include "hallcal/identification.hpp"
#include "hallcal/lti.hpp"
#include "hallcal/reconstruction.hpp"
#include "hallcal/simulation.hpp"

namespace hallcal::io {

using json = nlohmann::json;

/// Formats a double with 17 significant digits (lossless round trip).
std::string format_double(double value);

json to_json(const lti::ContinuousTransferFunction& tf);
json to_json(const lti::DiscreteTransferFunction& tf);
json to_json(const lti::DiscreteStateSpace& ss);
lti::ContinuousTransferFunction continuous_tf_from_json(const json& j);
lti::DiscreteTransferFunction discrete_tf_from_json(const json& j);
lti::DiscreteStateSpace state_space_from_json(const json& j);

json to_json(const flux::BasisDescriptor& desc);
flux::BasisDescriptor basis_from_json(const json& j);

json to_json(const flux::FluxModel& model);
flux::FluxModel flux_model_from_json(const json& j);

json to_json(const sim::ReferenceSignal& ref);
sim::ReferenceSignal reference_from_json(const json& j);

json to_json(const recon::CorrectionTable& table);
recon::CorrectionTable table_from_json(const json& j);

json to_json(const ident::BlaEstimate& bla);
ident::BlaEstimate bla_from_json(const json& j);

json to_json(const ident::CalibrationResult& result);

/// Flat binary correction table: uint32 size, then knots and corrections as
/// little-endian 64-bit floats.
void write_table_binary(const recon::CorrectionTable& table, const std::filesystem::path& path);
recon::CorrectionTable read_table_binary(const std::filesystem::path& path);

/// Dataset CSV with header t,d1,d2,d3,y,T,r[,y0] at 17 significant digits,
/// plus a JSON metadata sidecar (same stem, .meta.json suffix).
void write_dataset(const sim::Dataset& data, const std::filesystem::path& csv_path,
                   bool include_ground_truth);
sim::Dataset read_dataset(const std::filesystem::path& csv_path);

void write_json_file(const json& j, const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

void write_text_file(const std::string& text, const std::filesystem::path& path);

}  // namespace hallcal::io
