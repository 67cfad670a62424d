/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <Eigen/Dense>

#include <complex>
#include <cstddef>
#include <vector>

#include "hallcal/flux_model.hpp"
#include "hallcal/lti.hpp"
#include "hallcal/reconstruction.hpp"
#include "hallcal/simulation.hpp"

namespace hallcal::ident {

struct BlaFitOptions {
    int poles = 3;
    int zeros = 0;
    int integrators = 1;      // poles pinned at q = 1 (rigid-body mode)
    int delay_allowance = 1;  // extra pure-delay samples tried during the fit
    int sk_iterations = 20;
};

/// Best linear approximation of the torque-to-angle dynamics, known up to a
/// constant until the scale step corrects it.
struct BlaEstimate {
    lti::DiscreteStateSpace model;
    std::vector<double> freqs_hz;
    std::vector<std::complex<double>> frf;
    std::vector<double> frf_variance;  // per-bin variance of the FRF mean
    bool scale_corrected = false;
    double fit_residual = 0.0;         // weighted relative fit error
    double max_pole_magnitude = 0.0;
};

/// Indirect closed-loop FRF estimate averaged over random-phase multisine
/// realizations (reference as instrument: G = (Y/R) / (T/R)), followed by an
/// iteratively reweighted rational fit. Each dataset must hold an integer
/// number of multisine periods; the first period of each is discarded as
/// transient.
BlaEstimate estimate_bla(const std::vector<sim::Dataset>& experiments,
                         const BlaFitOptions& options = {});

struct ScaleEstimateOptions {
    double bracket_lo = 0.1;
    double bracket_hi = 10.0;
    int scan_points = 50;
    double golden_rel_tol = 1e-5;
};

struct ScaleEstimate {
    double c_hat = 1.0;
    std::size_t crossing_index_data = 0;  // sample at or before the last 2 pi n crossing
    int rotations_data = 0;
    std::vector<double> scan_c;
    std::vector<double> scan_cost;
};

/// Estimates the unknown BLA constant from the last full-rotation crossing:
/// the candidate simulation uses the BLA with its input matrix divided by c,
/// so the minimizer is the scale of the supplied BLA itself. Crossings are
/// located on a local linear regression spanning one period of the
/// reconstruction ripple (averaging out both noise and the periodic error),
/// and the squared mismatch is evaluated unwrapped between the regressed
/// crossing events, which removes the spurious minima the raw single-sample
/// comparison develops once the crossings slip a whole sample apart.
ScaleEstimate estimate_scale(const BlaEstimate& bla, const sim::Dataset& data,
                             const Eigen::VectorXd& theta0, const flux::BasisDescriptor& basis,
                             int n_m, const lti::DiscreteStateSpace& controller,
                             const ScaleEstimateOptions& options = {});

struct OptimizerSettings {
    int max_iterations = 150;
    double tolerance = 1e-9;    // relative cost decrease stopping threshold
    double fd_step_abs = 1e-6;  // finite-difference step floor
    double fd_step_rel = 1e-6;
    /// Relative eigenvalue cutoff of the scaled Gauss-Newton normal matrix;
    /// directions below it are left untouched. Kept near zero: weakly
    /// observable directions still carry the sensor-offset and gain-jitter
    /// content the fit must recover, so only numerically null directions
    /// may be dropped.
    double spectral_cutoff = 1e-6;
    int threads = 0;  // 0: hardware concurrency
};

/// Simulation-error-minimization problem over theta (and, for a kernel
/// basis, log sigma_f and log length-scale appended to the parameter vector).
struct SemProblem {
    Eigen::MatrixXd d_measured;  // N x 3
    std::vector<double> reference;
    double sample_time = 0.0;
    BlaEstimate bla;  // must be scale corrected
    lti::DiscreteStateSpace controller;
    flux::BasisDescriptor basis;
    int n_m = 1;
    Eigen::VectorXd theta0;
    bool optimize_hyperparameters = false;
    OptimizerSettings settings;
    sim::DivergenceLimits limits;

    static SemProblem from_dataset(const sim::Dataset& data, BlaEstimate bla,
                                   lti::DiscreteStateSpace controller,
                                   flux::BasisDescriptor basis, int n_m, Eigen::VectorXd theta0,
                                   OptimizerSettings settings = {});
    void validate() const;

    /// theta0 plus the hyperparameter tail when enabled.
    Eigen::VectorXd initial_parameters() const;
    flux::BasisDescriptor basis_for(const Eigen::VectorXd& params) const;
    Eigen::VectorXd theta_part(const Eigen::VectorXd& params) const;
};

/// Summed squared simulation residual over all samples and channels;
/// +infinity when the candidate destabilizes the loop.
double sem_cost(const Eigen::VectorXd& params, const SemProblem& problem);

/// Central finite-difference gradient of sem_cost with the solver's step
/// rule h_i = max(fd_step_abs, fd_step_rel |x_i|).
Eigen::VectorXd sem_gradient(const Eigen::VectorXd& params, const SemProblem& problem);

struct SemSolution {
    Eigen::VectorXd parameters;
    Eigen::VectorXd theta_star;
    flux::BasisDescriptor basis_star;
    std::vector<double> j_trace;  // cost at accepted iterates, strictly decreasing
    int iterations = 0;
    bool stalled = false;
};

/// BFGS with central finite-difference gradients and Armijo backtracking.
SemSolution solve_sem(const SemProblem& problem);

struct CalibrationOptions {
    std::size_t lut_size = 2048;
    OptimizerSettings optimizer;
    ScaleEstimateOptions scale;
    bool optimize_hyperparameters = true;  // applies to kernel bases only
};

struct CalibrationResult {
    flux::FluxModel model;
    recon::CorrectionTable table;
    double c_hat = 1.0;
    double amplitude_estimate = 0.0;
    std::vector<double> j_trace;
    double final_cost = 0.0;
    int iterations = 0;
    bool stalled = false;
};

/// Full calibration pipeline on recorded ramp data: scale-correct the BLA,
/// minimize the simulation error, build the correction table. Reads only the
/// voltage, angle, torque and reference columns; never the hidden y0.
CalibrationResult calibrate(const sim::Dataset& data, const BlaEstimate& bla,
                            const lti::DiscreteStateSpace& controller,
                            const flux::BasisDescriptor& basis, int n_m,
                            const CalibrationOptions& options = {});

/// RMS carrier amplitude of the Clarke quadrature pair, used to scale theta0.
double estimate_amplitude(const sim::Dataset& data);

}  // namespace hallcal::ident
