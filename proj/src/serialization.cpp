/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/serialization.hpp"

#include <array>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <vector>

#include "hallcal/errors.hpp"

namespace hallcal::io {

namespace {

std::vector<double> doubles_from(const json& j, const char* what) {
    if (!j.is_array()) {
        throw ConfigError(std::string("expected an array for ") + what);
    }
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number()) {
            throw ConfigError(std::string("expected numbers in ") + what);
        }
        out.push_back(v.get<double>());
    }
    return out;
}

Eigen::VectorXd vector_from(const json& j, const char* what) {
    const std::vector<double> v = doubles_from(j, what);
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

json vector_to(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        out.push_back(v(i));
    }
    return out;
}

void append_le_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
}

void append_le_f64(std::string& buf, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
        buf.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
}

std::uint32_t read_le_u32(const unsigned char* p) {
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) {
        v = (v << 8) | p[i];
    }
    return v;
}

double read_le_f64(const unsigned char* p) {
    std::uint64_t bits = 0;
    for (int i = 7; i >= 0; --i) {
        bits = (bits << 8) | p[i];
    }
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
}

}  // namespace

std::string format_double(double value) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", value);
    return buf;
}

json to_json(const lti::ContinuousTransferFunction& tf) {
    return json{{"kind", "continuous_tf"},
                {"num", tf.num},
                {"den", tf.den},
                {"delay", tf.input_delay}};
}

json to_json(const lti::DiscreteTransferFunction& tf) {
    return json{{"kind", "discrete_tf"}, {"num", tf.num}, {"den", tf.den}, {"Ts", tf.sample_time}};
}

json to_json(const lti::DiscreteStateSpace& ss) {
    json a = json::array();
    for (Eigen::Index i = 0; i < ss.A.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < ss.A.cols(); ++j) {
            row.push_back(ss.A(i, j));
        }
        a.push_back(row);
    }
    return json{{"kind", "state_space"},
                {"A", a},
                {"B", vector_to(ss.B)},
                {"C", vector_to(ss.C.transpose())},
                {"D", ss.D},
                {"Ts", ss.sample_time}};
}

lti::ContinuousTransferFunction continuous_tf_from_json(const json& j) {
    lti::ContinuousTransferFunction tf;
    tf.num = doubles_from(j.at("num"), "num");
    tf.den = doubles_from(j.at("den"), "den");
    tf.input_delay = j.value("delay", 0.0);
    tf.validate();
    return tf;
}

lti::DiscreteTransferFunction discrete_tf_from_json(const json& j) {
    return {doubles_from(j.at("num"), "num"), doubles_from(j.at("den"), "den"),
            j.value("Ts", 0.0)};
}

lti::DiscreteStateSpace state_space_from_json(const json& j) {
    lti::DiscreteStateSpace ss;
    const json& a = j.at("A");
    const auto n = static_cast<Eigen::Index>(a.size());
    ss.A.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto row = doubles_from(a[static_cast<std::size_t>(i)], "A row");
        if (static_cast<Eigen::Index>(row.size()) != n) {
            throw ConfigError("state space A matrix is not square");
        }
        for (Eigen::Index k = 0; k < n; ++k) {
            ss.A(i, k) = row[static_cast<std::size_t>(k)];
        }
    }
    ss.B = vector_from(j.at("B"), "B");
    ss.C = vector_from(j.at("C"), "C").transpose();
    ss.D = j.at("D").get<double>();
    ss.sample_time = j.at("Ts").get<double>();
    ss.validate();
    return ss;
}

json to_json(const flux::BasisDescriptor& desc) {
    if (desc.is_fourier()) {
        return json{{"type", "fourier"}, {"harmonics", desc.fourier().harmonics}};
    }
    const auto& k = desc.kernel();
    return json{{"type", "periodic_kernel"},
                {"centers", static_cast<int>(k.centers.size())},
                {"signal_variance", k.signal_variance},
                {"length_scale", k.length_scale}};
}

flux::BasisDescriptor basis_from_json(const json& j) {
    const std::string type = j.at("type").get<std::string>();
    if (type == "fourier") {
        flux::FourierBasis f;
        f.harmonics = j.at("harmonics").get<std::vector<int>>();
        flux::BasisDescriptor d{f};
        d.validate();
        return d;
    }
    if (type == "periodic_kernel") {
        flux::BasisDescriptor d{flux::make_kernel_basis(j.at("centers").get<int>(),
                                                        j.at("signal_variance").get<double>(),
                                                        j.at("length_scale").get<double>())};
        d.validate();
        return d;
    }
    throw ConfigError("unknown basis type '" + type + "'");
}

json to_json(const flux::FluxModel& model) {
    return json{{"basis", to_json(model.basis)},
                {"theta", vector_to(model.theta)},
                {"pole_pairs", model.pole_pairs}};
}

flux::FluxModel flux_model_from_json(const json& j) {
    flux::FluxModel m;
    m.basis = basis_from_json(j.at("basis"));
    m.theta = vector_from(j.at("theta"), "theta");
    m.pole_pairs = j.at("pole_pairs").get<int>();
    m.validate();
    return m;
}

json to_json(const sim::ReferenceSignal& ref) {
    if (ref.is_ramp()) {
        const auto& r = ref.ramp();
        return json{{"type", "ramp"},
                    {"start_rad", r.start_rad},
                    {"end_rad", r.end_rad},
                    {"duration_s", r.duration_s},
                    {"sample_rate_hz", ref.sample_rate_hz}};
    }
    const auto& m = ref.multisine();
    return json{{"type", "multisine"},
                {"frequencies_hz", m.frequencies_hz},
                {"amplitude_rms", m.amplitude_rms},
                {"phase_seed", m.phase_seed},
                {"periods", m.periods},
                {"sample_rate_hz", ref.sample_rate_hz}};
}

sim::ReferenceSignal reference_from_json(const json& j) {
    sim::ReferenceSignal ref;
    ref.sample_rate_hz = j.at("sample_rate_hz").get<double>();
    const std::string type = j.at("type").get<std::string>();
    if (type == "ramp") {
        sim::RampReference r;
        r.start_rad = j.at("start_rad").get<double>();
        r.end_rad = j.at("end_rad").get<double>();
        r.duration_s = j.at("duration_s").get<double>();
        ref.shape = r;
    } else if (type == "multisine") {
        sim::MultisineReference m;
        m.frequencies_hz = j.at("frequencies_hz").get<std::vector<double>>();
        m.amplitude_rms = j.at("amplitude_rms").get<double>();
        m.phase_seed = j.at("phase_seed").get<std::uint64_t>();
        m.periods = j.at("periods").get<int>();
        ref.shape = m;
    } else {
        throw ConfigError("unknown reference type '" + type + "'");
    }
    ref.validate();
    return ref;
}

json to_json(const recon::CorrectionTable& table) {
    return json{{"y_hat", table.y_hat}, {"eta", table.eta}};
}

recon::CorrectionTable table_from_json(const json& j) {
    recon::CorrectionTable t;
    t.y_hat = doubles_from(j.at("y_hat"), "y_hat");
    t.eta = doubles_from(j.at("eta"), "eta");
    t.validate();
    return t;
}

json to_json(const ident::BlaEstimate& bla) {
    json re = json::array();
    json im = json::array();
    for (const auto& g : bla.frf) {
        re.push_back(g.real());
        im.push_back(g.imag());
    }
    return json{{"model", to_json(bla.model)},
                {"freqs_hz", bla.freqs_hz},
                {"frf_re", re},
                {"frf_im", im},
                {"frf_variance", bla.frf_variance},
                {"scale_corrected", bla.scale_corrected},
                {"fit_residual", bla.fit_residual},
                {"max_pole_magnitude", bla.max_pole_magnitude}};
}

ident::BlaEstimate bla_from_json(const json& j) {
    ident::BlaEstimate bla;
    bla.model = state_space_from_json(j.at("model"));
    bla.freqs_hz = j.at("freqs_hz").get<std::vector<double>>();
    const auto re = doubles_from(j.at("frf_re"), "frf_re");
    const auto im = doubles_from(j.at("frf_im"), "frf_im");
    if (re.size() != im.size() || re.size() != bla.freqs_hz.size()) {
        throw ConfigError("bla: FRF arrays have inconsistent lengths");
    }
    bla.frf.resize(re.size());
    for (std::size_t i = 0; i < re.size(); ++i) {
        bla.frf[i] = {re[i], im[i]};
    }
    bla.frf_variance = j.at("frf_variance").get<std::vector<double>>();
    bla.scale_corrected = j.at("scale_corrected").get<bool>();
    bla.fit_residual = j.value("fit_residual", 0.0);
    bla.max_pole_magnitude = j.value("max_pole_magnitude", 0.0);
    return bla;
}

json to_json(const ident::CalibrationResult& result) {
    return json{{"model", to_json(result.model)},
                {"c_hat", result.c_hat},
                {"amplitude_estimate", result.amplitude_estimate},
                {"final_cost", result.final_cost},
                {"iterations", result.iterations},
                {"stalled", result.stalled},
                {"j_trace_length", result.j_trace.size()},
                {"bijective", true}};
}

void write_table_binary(const recon::CorrectionTable& table, const std::filesystem::path& path) {
    std::string buf;
    buf.reserve(4 + 16 * table.size());
    append_le_u32(buf, static_cast<std::uint32_t>(table.size()));
    for (double v : table.y_hat) {
        append_le_f64(buf, v);
    }
    for (double v : table.eta) {
        append_le_f64(buf, v);
    }
    write_text_file(buf, path);
}

recon::CorrectionTable read_table_binary(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ConfigError("cannot open table file " + path.string());
    }
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (buf.size() < 4) {
        throw ConfigError("table file too short: " + path.string());
    }
    const auto* p = reinterpret_cast<const unsigned char*>(buf.data());
    const std::uint32_t m = read_le_u32(p);
    if (buf.size() != 4 + 16ull * m) {
        throw ConfigError("table file has inconsistent length: " + path.string());
    }
    recon::CorrectionTable t;
    t.y_hat.resize(m);
    t.eta.resize(m);
    for (std::uint32_t i = 0; i < m; ++i) {
        t.y_hat[i] = read_le_f64(p + 4 + 8ull * i);
        t.eta[i] = read_le_f64(p + 4 + 8ull * (m + i));
    }
    t.validate();
    return t;
}

namespace {

std::filesystem::path meta_path_for(const std::filesystem::path& csv_path) {
    std::filesystem::path p = csv_path;
    p.replace_extension(".meta.json");
    return p;
}

}  // namespace

void write_dataset(const sim::Dataset& data, const std::filesystem::path& csv_path,
                   bool include_ground_truth) {
    data.validate();
    const bool with_y0 = include_ground_truth && data.has_ground_truth();
    std::string out;
    out.reserve(data.size() * 140);
    out += with_y0 ? "t,d1,d2,d3,y,T,r,y0\n" : "t,d1,d2,d3,y,T,r\n";
    for (std::size_t k = 0; k < data.size(); ++k) {
        const auto row = static_cast<Eigen::Index>(k);
        out += format_double(data.t[k]);
        out += ',';
        out += format_double(data.d(row, 0));
        out += ',';
        out += format_double(data.d(row, 1));
        out += ',';
        out += format_double(data.d(row, 2));
        out += ',';
        out += format_double(data.y[k]);
        out += ',';
        out += format_double(data.torque[k]);
        out += ',';
        out += format_double(data.r[k]);
        if (with_y0) {
            out += ',';
            out += format_double(data.y0[k]);
        }
        out += '\n';
    }
    write_text_file(out, csv_path);

    const json meta{{"sample_time", data.sample_time},
                    {"n_m", data.n_m},
                    {"seed", data.seed},
                    {"fingerprint", data.fingerprint},
                    {"reference", to_json(data.reference)},
                    {"columns", with_y0 ? 8 : 7}};
    write_json_file(meta, meta_path_for(csv_path));
}

sim::Dataset read_dataset(const std::filesystem::path& csv_path) {
    std::ifstream in(csv_path);
    if (!in) {
        throw ConfigError("cannot open dataset " + csv_path.string());
    }
    std::string header;
    if (!std::getline(in, header)) {
        throw ConfigError("dataset is empty: " + csv_path.string());
    }
    bool with_y0 = false;
    if (header == "t,d1,d2,d3,y,T,r,y0") {
        with_y0 = true;
    } else if (header != "t,d1,d2,d3,y,T,r") {
        throw ConfigError("dataset has unexpected header '" + header + "'");
    }

    sim::Dataset ds;
    std::vector<std::array<double, 8>> rows;
    std::string line;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) {
            continue;
        }
        std::array<double, 8> row{};
        const char* p = line.c_str();
        const std::size_t want = with_y0 ? 8 : 7;
        for (std::size_t c = 0; c < want; ++c) {
            char* end = nullptr;
            row[c] = std::strtod(p, &end);
            if (end == p) {
                throw ConfigError("dataset parse error at line " + std::to_string(line_no));
            }
            p = end;
            if (c + 1 < want) {
                if (*p != ',') {
                    throw ConfigError("dataset parse error at line " + std::to_string(line_no) +
                                      ": expected comma");
                }
                ++p;
            }
        }
        rows.push_back(row);
    }
    const std::size_t n = rows.size();
    if (n < 2) {
        throw ConfigError("dataset has fewer than two samples");
    }
    ds.t.resize(n);
    ds.d.resize(static_cast<Eigen::Index>(n), 3);
    ds.y.resize(n);
    ds.torque.resize(n);
    ds.r.resize(n);
    if (with_y0) {
        ds.y0.resize(n);
    }
    for (std::size_t k = 0; k < n; ++k) {
        ds.t[k] = rows[k][0];
        ds.d(static_cast<Eigen::Index>(k), 0) = rows[k][1];
        ds.d(static_cast<Eigen::Index>(k), 1) = rows[k][2];
        ds.d(static_cast<Eigen::Index>(k), 2) = rows[k][3];
        ds.y[k] = rows[k][4];
        ds.torque[k] = rows[k][5];
        ds.r[k] = rows[k][6];
        if (with_y0) {
            ds.y0[k] = rows[k][7];
        }
    }

    const std::filesystem::path meta_path = meta_path_for(csv_path);
    if (std::filesystem::exists(meta_path)) {
        const json meta = read_json_file(meta_path);
        ds.sample_time = meta.at("sample_time").get<double>();
        ds.n_m = meta.at("n_m").get<int>();
        ds.seed = meta.at("seed").get<std::uint64_t>();
        ds.fingerprint = meta.value("fingerprint", "");
        ds.reference = reference_from_json(meta.at("reference"));
    } else {
        ds.sample_time = n > 1 ? ds.t[1] - ds.t[0] : 0.0;
        sim::RampReference r;
        r.duration_s = ds.t.back();
        r.end_rad = ds.r.back();
        ds.reference.shape = r;
        ds.reference.sample_rate_hz = ds.sample_time > 0.0 ? 1.0 / ds.sample_time : 0.0;
    }
    ds.validate();
    return ds;
}

void write_json_file(const json& j, const std::filesystem::path& path) {
    write_text_file(j.dump(2) + "\n", path);
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ConfigError("cannot open " + path.string());
    }
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw ConfigError("JSON parse error in " + path.string() + ": " + e.what());
    }
    return j;
}

void write_text_file(const std::string& text, const std::filesystem::path& path) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw ConfigError("cannot write " + path.string());
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw ConfigError("failed writing " + path.string());
    }
}

}  // namespace hallcal::io
