/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/flux_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "hallcal/errors.hpp"
#include "hallcal/rng.hpp"

namespace hallcal::flux {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

// Relative weight of the sub-n_m magnet-variation coefficients in
// make_ground_truth. Keeps the reconstruction-error spectrum dominated by
// the electrical-period content while still breaking pole-pair symmetry.
constexpr double kSubHarmonicScale = 0.15;

}  // namespace

Eigen::Index BasisDescriptor::dimension() const {
    if (is_fourier()) {
        return 2 * static_cast<Eigen::Index>(fourier().harmonics.size()) + 1;
    }
    return kernel().centers.size();
}

void BasisDescriptor::validate() const {
    if (is_fourier()) {
        const auto& h = fourier().harmonics;
        if (h.empty()) {
            throw ConfigError("fourier basis: harmonics must be non-empty");
        }
        for (int v : h) {
            if (v <= 0) {
                throw ConfigError("fourier basis: harmonics must be positive");
            }
        }
        return;
    }
    const auto& k = kernel();
    const Eigen::Index m = k.centers.size();
    if (m < 2) {
        throw ConfigError("kernel basis: need at least two centers");
    }
    if (!(k.signal_variance > 0.0) || !(k.length_scale > 0.0)) {
        throw ConfigError("kernel basis: signal variance and length scale must be > 0");
    }
    const double spacing = kTwoPi / static_cast<double>(m);
    for (Eigen::Index j = 0; j < m; ++j) {
        const double expected = spacing * static_cast<double>(j);
        if (std::abs(k.centers(j) - expected) > 1e-9) {
            throw ConfigError("kernel basis: centers must be equidistant in [0, 2pi)");
        }
    }
}

PeriodicKernelBasis make_kernel_basis(int centers, double signal_variance, double length_scale) {
    PeriodicKernelBasis b;
    b.centers.resize(centers);
    for (int j = 0; j < centers; ++j) {
        b.centers(j) = kTwoPi * static_cast<double>(j) / static_cast<double>(centers);
    }
    b.signal_variance = signal_variance;
    b.length_scale = length_scale;
    return b;
}

Eigen::RowVectorXd fourier_basis(double y0, const std::vector<int>& harmonics) {
    Eigen::RowVectorXd out(2 * static_cast<Eigen::Index>(harmonics.size()) + 1);
    out(0) = 1.0;
    for (std::size_t i = 0; i < harmonics.size(); ++i) {
        const double arg = y0 * static_cast<double>(harmonics[i]);
        out(1 + 2 * static_cast<Eigen::Index>(i)) = std::sin(arg);
        out(2 + 2 * static_cast<Eigen::Index>(i)) = std::cos(arg);
    }
    return out;
}

Eigen::RowVectorXd kernel_basis(double y0, const PeriodicKernelBasis& basis) {
    Eigen::RowVectorXd out(basis.centers.size());
    const double sy = std::sin(y0);
    const double cy = std::cos(y0);
    const double inv_l2 = 1.0 / (basis.length_scale * basis.length_scale);
    // |x - x_j|^2 = 2 - 2 cos(y - c_j), expanded through the embedding
    out = (((basis.centers.array().sin() * sy + basis.centers.array().cos() * cy) - 1.0) *
           inv_l2)
              .exp()
              .matrix()
              .transpose() *
          basis.signal_variance;
    return out;
}

Eigen::RowVectorXd eval_basis(double y0, const BasisDescriptor& desc) {
    Eigen::RowVectorXd out(desc.dimension());
    eval_basis_into(y0, desc, out);
    return out;
}

void eval_basis_into(double y0, const BasisDescriptor& desc, Eigen::RowVectorXd& out) {
    if (desc.is_fourier()) {
        const auto& harmonics = desc.fourier().harmonics;
        out(0) = 1.0;
        // One sincos plus complex powers instead of trig per harmonic.
        const double s1 = std::sin(y0);
        const double c1 = std::cos(y0);
        double sh = 0.0;
        double ch = 1.0;
        int reached = 0;
        for (std::size_t i = 0; i < harmonics.size(); ++i) {
            const int h = harmonics[i];
            if (h < reached) {
                // non-monotone harmonic list: fall back to direct evaluation
                const double arg = y0 * static_cast<double>(h);
                out(1 + 2 * static_cast<Eigen::Index>(i)) = std::sin(arg);
                out(2 + 2 * static_cast<Eigen::Index>(i)) = std::cos(arg);
                continue;
            }
            while (reached < h) {
                const double ns = sh * c1 + ch * s1;
                ch = ch * c1 - sh * s1;
                sh = ns;
                ++reached;
            }
            out(1 + 2 * static_cast<Eigen::Index>(i)) = sh;
            out(2 + 2 * static_cast<Eigen::Index>(i)) = ch;
        }
        return;
    }
    const auto& basis = desc.kernel();
    const double sy = std::sin(y0);
    const double cy = std::cos(y0);
    const double inv_l2 = 1.0 / (basis.length_scale * basis.length_scale);
    out = (((basis.centers.array().sin() * sy + basis.centers.array().cos() * cy) - 1.0) *
           inv_l2)
              .exp()
              .matrix()
              .transpose() *
          basis.signal_variance;
}

BasisEvaluator::BasisEvaluator(const BasisDescriptor& desc) : desc_(&desc) {
    if (!desc.is_fourier()) {
        const auto& k = desc.kernel();
        sin_centers_ = k.centers.array().sin();
        cos_centers_ = k.centers.array().cos();
        inv_l2_ = 1.0 / (k.length_scale * k.length_scale);
        signal_variance_ = k.signal_variance;
    }
}

void BasisEvaluator::eval_into(double y0, Eigen::RowVectorXd& out) const {
    if (desc_->is_fourier()) {
        eval_basis_into(y0, *desc_, out);
        return;
    }
    const double sy = std::sin(y0);
    const double cy = std::cos(y0);
    out = (((sin_centers_ * sy + cos_centers_ * cy) - 1.0) * inv_l2_)
              .exp()
              .matrix()
              .transpose() *
          signal_variance_;
}

Eigen::MatrixXd regressor_psi(double y0, const BasisDescriptor& desc) {
    const Eigen::Index m = desc.dimension();
    const Eigen::RowVectorXd beta = eval_basis(y0, desc);
    Eigen::MatrixXd psi = Eigen::MatrixXd::Zero(3, 3 * m);
    for (Eigen::Index ch = 0; ch < 3; ++ch) {
        psi.block(ch, ch * m, 1, m) = beta;
    }
    return psi;
}

void FluxModel::validate() const {
    basis.validate();
    if (theta.size() != 3 * basis.dimension()) {
        throw ConfigError("flux model: theta length must be 3 x basis dimension, got " +
                          std::to_string(theta.size()));
    }
    if (pole_pairs <= 0) {
        throw ConfigError("flux model: pole pairs must be positive");
    }
}

Eigen::Vector3d eval_flux(const FluxModel& model, double y0) {
    Eigen::RowVectorXd scratch(model.basis.dimension());
    Eigen::Vector3d out;
    eval_flux_into(model, y0, scratch, out);
    return out;
}

void eval_flux_into(const FluxModel& model, double y0, Eigen::RowVectorXd& scratch,
                    Eigen::Vector3d& out) {
    eval_basis_into(y0, model.basis, scratch);
    const Eigen::Index m = scratch.size();
    for (Eigen::Index ch = 0; ch < 3; ++ch) {
        out(ch) = scratch * model.theta.segment(ch * m, m);
    }
}

Eigen::VectorXd initial_theta(const BasisDescriptor& desc, int n_m, double amplitude) {
    desc.validate();
    const Eigen::Index m = desc.dimension();
    Eigen::VectorXd theta = Eigen::VectorXd::Zero(3 * m);
    if (amplitude == 0.0) {
        return theta;
    }

    if (desc.is_fourier()) {
        const auto& harmonics = desc.fourier().harmonics;
        const auto it = std::find(harmonics.begin(), harmonics.end(), n_m);
        if (it == harmonics.end()) {
            throw ConfigError("initial_theta: fourier basis lacks harmonic " +
                              std::to_string(n_m));
        }
        const Eigen::Index slot = 1 + 2 * static_cast<Eigen::Index>(it - harmonics.begin());
        for (Eigen::Index ch = 0; ch < 3; ++ch) {
            const double phase = kTwoPi * static_cast<double>(ch) / 3.0;
            // A cos(n_m y - phase) = A cos(phase) cos(n_m y) + A sin(phase) sin(n_m y)
            theta(ch * m + slot) = amplitude * std::sin(phase);
            theta(ch * m + slot + 1) = amplitude * std::cos(phase);
        }
        return theta;
    }

    // Ridge least squares on the center grid, one solve shared by all
    // channels. The kernel Gram structure is ill-conditioned, hence the ridge.
    const auto& kb = desc.kernel();
    Eigen::MatrixXd design(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        design.row(i) = kernel_basis(kb.centers(i), kb);
    }
    Eigen::MatrixXd normal = design.transpose() * design;
    const double ridge = 1e-8 * kb.signal_variance;
    normal.diagonal().array() += ridge;
    const Eigen::LDLT<Eigen::MatrixXd> solver(normal);

    for (Eigen::Index ch = 0; ch < 3; ++ch) {
        const double phase = kTwoPi * static_cast<double>(ch) / 3.0;
        Eigen::VectorXd target(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            target(i) = amplitude * std::cos(static_cast<double>(n_m) * kb.centers(i) - phase);
        }
        theta.segment(ch * m, m) = solver.solve(design.transpose() * target);
    }
    return theta;
}

FluxModel make_ground_truth(const BasisDescriptor& desc, int n_m, double perturbation,
                            std::uint64_t seed, double amplitude) {
    if (perturbation < 0.0 || perturbation > 0.5) {
        throw ConfigError("make_ground_truth: perturbation must lie in [0, 0.5]");
    }
    FluxModel model;
    model.basis = desc;
    model.pole_pairs = n_m;
    model.theta = initial_theta(desc, n_m, amplitude);
    if (perturbation == 0.0) {
        model.validate();
        return model;
    }

    Rng rng(Rng::derive(seed, 0x67726f756e64ULL));
    const Eigen::Index m = desc.dimension();

    if (desc.is_fourier()) {
        const auto& harmonics = desc.fourier().harmonics;
        for (Eigen::Index ch = 0; ch < 3; ++ch) {
            const Eigen::Index base = ch * m;
            // per-channel sensor offset
            model.theta(base) += perturbation * amplitude * rng.uniform(-1.0, 1.0);
            for (std::size_t i = 0; i < harmonics.size(); ++i) {
                const Eigen::Index slot = base + 1 + 2 * static_cast<Eigen::Index>(i);
                if (harmonics[i] == n_m) {
                    // fundamental gain/phase jitter, independent per channel
                    model.theta(slot) *= 1.0 + perturbation * rng.uniform(-1.0, 1.0);
                    model.theta(slot + 1) *= 1.0 + perturbation * rng.uniform(-1.0, 1.0);
                } else {
                    const double scale = kSubHarmonicScale * perturbation * amplitude;
                    model.theta(slot) += scale * rng.uniform(-1.0, 1.0);
                    model.theta(slot + 1) += scale * rng.uniform(-1.0, 1.0);
                }
            }
        }
    } else {
        // Weight jitter plus an approximately constant per-channel offset
        // through the near-constant row sum of the kernel basis.
        const auto& kb = desc.kernel();
        double row_sum = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            row_sum += kernel_basis(kb.centers(i), kb).sum();
        }
        row_sum /= static_cast<double>(m);
        for (Eigen::Index ch = 0; ch < 3; ++ch) {
            const Eigen::Index base = ch * m;
            const double offset =
                perturbation * amplitude * rng.uniform(-1.0, 1.0) / row_sum;
            for (Eigen::Index j = 0; j < m; ++j) {
                model.theta(base + j) =
                    model.theta(base + j) * (1.0 + perturbation * rng.uniform(-1.0, 1.0)) +
                    offset;
            }
        }
    }
    model.validate();
    return model;
}

}  // namespace hallcal::flux
