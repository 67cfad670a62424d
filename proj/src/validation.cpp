/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/validation.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "hallcal/errors.hpp"
#include "hallcal/fft.hpp"

namespace hallcal::validation {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

CumulativePsd compute_cumulative_psd(const std::vector<double>& error,
                                     const std::vector<double>& position,
                                     std::size_t grid_size) {
    if (error.size() != position.size() || error.size() < 2) {
        throw NumericalError("compute_cumulative_psd: need matching error/position sequences");
    }
    for (std::size_t i = 1; i < position.size(); ++i) {
        if (!(position[i] > position[i - 1])) {
            throw NumericalError("compute_cumulative_psd: position must be strictly increasing "
                                 "(violated at sample " +
                                 std::to_string(i) + ")");
        }
    }
    if (!is_power_of_two(grid_size)) {
        throw NumericalError("compute_cumulative_psd: grid size must be a power of two");
    }

    double span = position.back() - position.front();
    const double revolutions = span / kTwoPi;
    if (revolutions >= 1.0) {
        span = std::floor(revolutions) * kTwoPi;  // whole revolutions: no leakage for periodic content
    }

    // Periodic resampling grid: grid_size points, endpoint excluded.
    std::vector<std::complex<double>> samples(grid_size);
    std::size_t src = 0;
    for (std::size_t i = 0; i < grid_size; ++i) {
        const double p =
            position.front() + span * static_cast<double>(i) / static_cast<double>(grid_size);
        while (src + 2 < position.size() && position[src + 1] <= p) {
            ++src;
        }
        const double w = (p - position[src]) / (position[src + 1] - position[src]);
        samples[i] = error[src] + w * (error[src + 1] - error[src]);
    }

    fft_radix2(samples);

    CumulativePsd out;
    const std::size_t half = grid_size / 2;
    out.cycles_per_rev.resize(half + 1);
    out.cumulative_power.resize(half + 1);
    const double rev_span = span / kTwoPi;
    const double norm = 1.0 / (static_cast<double>(grid_size) * static_cast<double>(grid_size));
    double acc = 0.0;
    for (std::size_t k = 0; k <= half; ++k) {
        double p = std::norm(samples[k]) * norm;
        if (k != 0 && k != half) {
            p *= 2.0;  // fold the conjugate half
        }
        acc += p;
        out.cycles_per_rev[k] = static_cast<double>(k) / rev_span;
        out.cumulative_power[k] = acc;
    }
    return out;
}

double band_power(const CumulativePsd& psd, double f_lo, double f_hi) {
    double below = 0.0;
    double upto = 0.0;
    for (std::size_t k = 0; k < psd.cycles_per_rev.size(); ++k) {
        if (psd.cycles_per_rev[k] < f_lo) {
            below = psd.cumulative_power[k];
        }
        if (psd.cycles_per_rev[k] <= f_hi) {
            upto = psd.cumulative_power[k];
        }
    }
    return std::max(upto - below, 0.0);
}

ErrorSequences replay_errors(const sim::Dataset& data, const recon::CorrectionTable& table) {
    data.validate();
    if (!data.has_ground_truth()) {
        throw ConfigError(
            "validation requires the hidden ground-truth column, which exists for "
            "validation only and is absent from calibration inputs");
    }
    ErrorSequences seq;
    const std::size_t n = data.size();
    seq.position = data.y0;
    seq.error_init.resize(n);
    seq.error_star.resize(n);
    double phi = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        seq.error_init[k] = data.y[k] - data.y0[k];
        const Eigen::Vector3d d = data.d.row(static_cast<Eigen::Index>(k));
        const double y_star = recon::f_star(d, recon::ReconstructionState{phi}, data.n_m, table);
        phi = y_star;
        seq.error_star[k] = y_star - data.y0[k];
    }
    return seq;
}

namespace {

double rms(const std::vector<double>& v) {
    double acc = 0.0;
    for (double x : v) {
        acc += x * x;
    }
    return std::sqrt(acc / static_cast<double>(v.size()));
}

double peak(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

/// Longest strictly increasing suffix, so a spin-up transient at the start
/// of a record does not break the position resampling.
std::size_t increasing_suffix_start(const std::vector<double>& v) {
    std::size_t start = v.size() - 1;
    while (start > 0 && v[start - 1] < v[start]) {
        --start;
    }
    return start;
}

}  // namespace

ErrorMetrics compute_error_metrics(const sim::Dataset& data, const recon::CorrectionTable& table,
                                   std::size_t psd_grid_size) {
    const ErrorSequences seq = replay_errors(data, table);

    ErrorMetrics m;
    m.rms_init = rms(seq.error_init);
    m.rms_star = rms(seq.error_star);
    m.peak_init = peak(seq.error_init);
    m.peak_star = peak(seq.error_star);
    m.improvement_factor_rms = m.rms_star > 0.0 ? m.rms_init / m.rms_star : 0.0;
    m.improvement_factor_peak = m.peak_star > 0.0 ? m.peak_init / m.peak_star : 0.0;

    const std::size_t start = increasing_suffix_start(seq.position);
    if (seq.position.size() - start < 2) {
        throw NumericalError("compute_error_metrics: ground-truth position never increases");
    }
    const std::vector<double> pos(seq.position.begin() + static_cast<std::ptrdiff_t>(start),
                                  seq.position.end());
    const std::vector<double> e_init(seq.error_init.begin() + static_cast<std::ptrdiff_t>(start),
                                     seq.error_init.end());
    const std::vector<double> e_star(seq.error_star.begin() + static_cast<std::ptrdiff_t>(start),
                                     seq.error_star.end());
    m.psd_init = compute_cumulative_psd(e_init, pos, psd_grid_size);
    m.psd_star = compute_cumulative_psd(e_star, pos, psd_grid_size);
    return m;
}

}  // namespace hallcal::validation
