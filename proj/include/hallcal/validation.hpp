/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <vector>

#include "hallcal/reconstruction.hpp"
#include "hallcal/simulation.hpp"

namespace hallcal::validation {

/// One-sided cumulative periodogram over the position coordinate.
/// Frequencies are in cycles per revolution; the final cumulative value
/// equals the mean-square of the resampled error (Parseval).
struct CumulativePsd {
    std::vector<double> cycles_per_rev;
    std::vector<double> cumulative_power;  // rad^2, non-decreasing

    double total_power() const { return cumulative_power.empty() ? 0.0 : cumulative_power.back(); }
};

/// Resamples the error onto a uniform position grid by linear interpolation
/// and accumulates the periodogram. Position must be strictly increasing.
/// When the span covers at least one revolution, the analysis window is
/// truncated to a whole number of revolutions so periodic content lands on
/// exact bins.
CumulativePsd compute_cumulative_psd(const std::vector<double>& error,
                                     const std::vector<double>& position,
                                     std::size_t grid_size = 1u << 16);

/// Power inside [f_lo, f_hi] cycles/rev, summed bin-wise.
double band_power(const CumulativePsd& psd, double f_lo, double f_hi);

struct ErrorMetrics {
    double rms_init = 0.0;
    double rms_star = 0.0;
    double peak_init = 0.0;
    double peak_star = 0.0;
    double improvement_factor_rms = 0.0;
    double improvement_factor_peak = 0.0;
    CumulativePsd psd_init;
    CumulativePsd psd_star;
};

/// Error sequences of both reconstructions against the hidden ground truth:
/// the logged angle is the f_init output; the corrected angle is replayed
/// from the stored voltages through f_star with a chained unwrap state.
struct ErrorSequences {
    std::vector<double> position;  // ground truth y0
    std::vector<double> error_init;
    std::vector<double> error_star;
};

ErrorSequences replay_errors(const sim::Dataset& data, const recon::CorrectionTable& table);

ErrorMetrics compute_error_metrics(const sim::Dataset& data, const recon::CorrectionTable& table,
                                   std::size_t psd_grid_size = 1u << 16);

}  // namespace hallcal::validation
