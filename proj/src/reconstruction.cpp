/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/reconstruction.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "hallcal/errors.hpp"

namespace hallcal::recon {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

double positive_mod_2pi(double x) {
    double r = std::fmod(x, kTwoPi);
    if (r < 0.0) {
        r += kTwoPi;
    }
    return r;
}

}  // namespace

const Eigen::Matrix3d& clarke_matrix() {
    static const Eigen::Matrix3d c = [] {
        const double s3 = std::sqrt(3.0) / 2.0;
        Eigen::Matrix3d m;
        m << 1.0, -0.5, -0.5,  //
            0.0, s3, -s3,      //
            0.5, 0.5, 0.5;
        return Eigen::Matrix3d(m * (2.0 / 3.0));
    }();
    return c;
}

Eigen::Vector3d clarke(const Eigen::Vector3d& d) {
    return clarke_matrix() * d;
}

double unwrap_gamma(double y_now, double y_prev) {
    return y_prev + positive_mod_2pi(y_now - y_prev + std::numbers::pi) - std::numbers::pi;
}

double f_init(const Eigen::Vector3d& d, const ReconstructionState& state, int n_m) {
    const Eigen::Matrix3d& c = clarke_matrix();
    const double d1 = c.row(0) * d;
    const double d2 = c.row(1) * d;
    if (d1 == 0.0 && d2 == 0.0) {
        throw NumericalError("f_init: degenerate input, both Clarke components are zero");
    }
    const double electrical = std::atan2(d2, d1);
    return unwrap_gamma(electrical, static_cast<double>(n_m) * state.phi) /
           static_cast<double>(n_m);
}

void CorrectionTable::validate() const {
    if (y_hat.size() != eta.size()) {
        throw ConfigError("correction table: knot and correction lengths differ");
    }
    if (y_hat.size() < 2) {
        throw ConfigError("correction table: need at least two knots");
    }
    const BijectivityReport report = check_bijective(*this);
    if (!report.ok) {
        throw BijectivityError(report.message, report.index_a, report.index_b);
    }
}

BijectivityReport check_bijective(const CorrectionTable& table) {
    BijectivityReport report;
    const std::size_t m = table.y_hat.size();
    std::size_t descents = 0;
    std::size_t descent_at = 0;
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t j = (i + 1) % m;
        if (table.y_hat[j] <= table.y_hat[i]) {
            ++descents;
            descent_at = i;
        }
    }
    // A cyclically increasing sequence over [0, 2pi) has exactly one wrap.
    if (descents != 1) {
        report.ok = false;
        report.index_a = descent_at;
        report.index_b = (descent_at + 1) % m;
        report.message = "correction table knots are not strictly increasing modulo one wrap (" +
                         std::to_string(descents) + " descents, e.g. between indices " +
                         std::to_string(report.index_a) + " and " + std::to_string(report.index_b) +
                         ")";
    }
    return report;
}

CorrectionTable build_lut(const flux::FluxModel& model, std::size_t table_size) {
    model.validate();
    if (table_size < 2) {
        throw ConfigError("build_lut: table size must be at least 2");
    }
    const int n_m = model.pole_pairs;
    CorrectionTable table;
    table.y_hat.resize(table_size);
    table.eta.resize(table_size);
    Eigen::RowVectorXd scratch(model.basis.dimension());
    Eigen::Vector3d d;
    for (std::size_t i = 0; i < table_size; ++i) {
        const double y0 = kTwoPi * static_cast<double>(i) / static_cast<double>(table_size);
        eval_flux_into(model, y0, scratch, d);
        // Each grid point is evaluated in its own period: phi seeds at y0.
        const double estimate = f_init(d, ReconstructionState{y0}, n_m);
        table.y_hat[i] = positive_mod_2pi(estimate);
        table.eta[i] = y0 - estimate;
    }
    const BijectivityReport report = check_bijective(table);
    if (!report.ok) {
        throw BijectivityError(report.message, report.index_a, report.index_b);
    }
    return table;
}

namespace {

/// Index of the smallest knot in a strictly-increasing-modulo-one-wrap
/// sequence, found by binary search against the first element.
std::size_t find_rotation(const std::vector<double>& v) {
    const std::size_t m = v.size();
    if (v[0] <= v[m - 1]) {
        return 0;
    }
    std::size_t lo = 0;
    std::size_t hi = m - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (v[mid] >= v[0]) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    return hi;
}

}  // namespace

double eta_lookup(const CorrectionTable& table, double y_hat) {
    const std::size_t m = table.y_hat.size();
    const std::size_t rot = find_rotation(table.y_hat);
    const auto knot = [&](std::size_t i) { return table.y_hat[(rot + i) % m]; };
    const auto corr = [&](std::size_t i) { return table.eta[(rot + i) % m]; };

    const double q = positive_mod_2pi(y_hat);
    // Binary search for the last sorted knot <= q.
    if (q < knot(0) || q >= knot(m - 1)) {
        // seam segment between the last and (first + 2pi) knot, eq. (18) wrap
        const double lo = knot(m - 1);
        const double hi = knot(0) + kTwoPi;
        const double qq = (q < knot(0)) ? q + kTwoPi : q;
        const double w = (qq - lo) / (hi - lo);
        return corr(m - 1) + w * (corr(0) - corr(m - 1));
    }
    std::size_t lo = 0;
    std::size_t hi = m - 1;
    while (hi - lo > 1) {
        const std::size_t mid = (lo + hi) / 2;
        if (knot(mid) <= q) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    const double w = (q - knot(lo)) / (knot(hi) - knot(lo));
    return corr(lo) + w * (corr(hi) - corr(lo));
}

double f_star(const Eigen::Vector3d& d, const ReconstructionState& state, int n_m,
              const CorrectionTable& table) {
    const double initial = f_init(d, state, n_m);
    return initial + eta_lookup(table, initial);
}

}  // namespace hallcal::recon
