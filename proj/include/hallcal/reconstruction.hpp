/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "hallcal/flux_model.hpp"

namespace hallcal::recon {

/// Clarke transformation matrix. Rows 1-2 reject the common-mode component;
/// row 3 is the zero sequence (computed, but the angle uses only rows 1-2).
const Eigen::Matrix3d& clarke_matrix();

Eigen::Vector3d clarke(const Eigen::Vector3d& d);

/// Unwraps y_now onto the branch nearest y_prev:
/// y_prev + mod(y_now - y_prev + pi, 2pi) - pi. The increment relative to
/// y_prev always lies in [-pi, pi).
double unwrap_gamma(double y_now, double y_prev);

/// Previous angle estimate, owned by the caller and updated after each call.
struct ReconstructionState {
    double phi = 0.0;
};

/// Clarke + atan2 + unwrap initial reconstruction. The unwrap acts on the
/// electrical angle against n_m * phi; exact when the flux map consists of
/// three pure 120-degree-shifted sinusoids. Throws NumericalError when both
/// quadrature components are exactly zero.
double f_init(const Eigen::Vector3d& d, const ReconstructionState& state, int n_m);

struct BijectivityReport {
    bool ok = true;
    std::size_t index_a = 0;
    std::size_t index_b = 0;
    std::string message;
};

/// Wrap-around piecewise-linear correction table. Knots are stored in grid
/// build order: strictly increasing in [0, 2pi) modulo exactly one wrap.
struct CorrectionTable {
    std::vector<double> y_hat;
    std::vector<double> eta;

    std::size_t size() const { return y_hat.size(); }
    void validate() const;
};

/// Evaluates the model on M equidistant grid points, seeding the unwrap
/// state at each grid point itself, and stores (f_init output mod 2pi,
/// grid angle minus f_init output). Throws BijectivityError when the knot
/// sequence is not invertible.
CorrectionTable build_lut(const flux::FluxModel& model, std::size_t table_size);

BijectivityReport check_bijective(const CorrectionTable& table);

/// Piecewise-linear interpolation with wrap-around at the 2pi seam.
double eta_lookup(const CorrectionTable& table, double y_hat);

/// Corrected reconstruction: f_init plus the interpolated table correction.
double f_star(const Eigen::Vector3d& d, const ReconstructionState& state, int n_m,
              const CorrectionTable& table);

}  // namespace hallcal::recon
