/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <variant>
#include <vector>

namespace hallcal::flux {

/// Fourier basis [1, sin(h1 y), cos(h1 y), sin(h2 y), cos(h2 y), ...],
/// dimension m = 2 * harmonics.size() + 1.
struct FourierBasis {
    std::vector<int> harmonics;
};

/// Squared-exponential kernel on the unit-circle embedding
/// x = [sin y, cos y]: beta_j(y) = signal_variance * exp(-|x - x_j|^2 / (2 l^2)).
/// Centers are equidistant in [0, 2pi).
struct PeriodicKernelBasis {
    Eigen::VectorXd centers;
    double signal_variance = 1.0;  // sigma_f^2
    double length_scale = 0.1;
};

struct BasisDescriptor {
    std::variant<FourierBasis, PeriodicKernelBasis> shape;

    bool is_fourier() const { return std::holds_alternative<FourierBasis>(shape); }
    const FourierBasis& fourier() const { return std::get<FourierBasis>(shape); }
    const PeriodicKernelBasis& kernel() const { return std::get<PeriodicKernelBasis>(shape); }

    Eigen::Index dimension() const;
    void validate() const;
};

PeriodicKernelBasis make_kernel_basis(int centers, double signal_variance, double length_scale);

Eigen::RowVectorXd fourier_basis(double y0, const std::vector<int>& harmonics);
Eigen::RowVectorXd kernel_basis(double y0, const PeriodicKernelBasis& basis);
Eigen::RowVectorXd eval_basis(double y0, const BasisDescriptor& desc);

/// Hot-path variant: writes into a preallocated row of size desc.dimension().
void eval_basis_into(double y0, const BasisDescriptor& desc, Eigen::RowVectorXd& out);

/// Precomputes the per-center trigonometry of a kernel basis once, so the
/// per-sample work inside simulation loops reduces to fused multiplies and
/// one vectorized exponential.
class BasisEvaluator {
public:
    explicit BasisEvaluator(const BasisDescriptor& desc);
    void eval_into(double y0, Eigen::RowVectorXd& out) const;
    Eigen::Index dimension() const { return desc_->dimension(); }

private:
    const BasisDescriptor* desc_;
    Eigen::ArrayXd sin_centers_;
    Eigen::ArrayXd cos_centers_;
    double inv_l2_ = 0.0;
    double signal_variance_ = 0.0;
};

/// psi(y0) = I_3 (x) beta(y0), a 3 x 3m block-diagonal regressor.
Eigen::MatrixXd regressor_psi(double y0, const BasisDescriptor& desc);

/// Zero-mean i.i.d. Gaussian sensor noise, one independent stream per channel.
struct NoiseModel {
    double variance = 0.0;  // volts^2 per channel
    std::uint64_t seed = 0;
};

/// Periodic flux-density map: angle -> three Hall voltages, linear in theta.
/// theta stacks one coefficient block of length m per channel.
struct FluxModel {
    BasisDescriptor basis;
    Eigen::VectorXd theta;
    int pole_pairs = 1;

    void validate() const;
};

Eigen::Vector3d eval_flux(const FluxModel& model, double y0);

/// Hot-path variant with caller-provided basis scratch row.
void eval_flux_into(const FluxModel& model, double y0, Eigen::RowVectorXd& scratch,
                    Eigen::Vector3d& out);

/// Coefficients reproducing amplitude * cos(n_m y - 2pi (h-1)/3) per channel h.
/// Exact for a Fourier basis containing harmonic n_m; ridge least squares on
/// the center grid for a kernel basis.
Eigen::VectorXd initial_theta(const BasisDescriptor& desc, int n_m, double amplitude);

/// Seeded synthetic ground truth: pure sinusoids plus per-channel offsets,
/// fundamental gain/phase jitter and sub-harmonic magnet variation. The
/// result stays 2pi-periodic but loses the 2pi/n_m symmetry whenever
/// perturbation > 0 and the basis carries sub-n_m content.
FluxModel make_ground_truth(const BasisDescriptor& desc, int n_m, double perturbation,
                            std::uint64_t seed, double amplitude = 1.0);

}  // namespace hallcal::flux
