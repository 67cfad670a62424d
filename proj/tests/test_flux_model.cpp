/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hallcal/errors.hpp"
#include "hallcal/flux_model.hpp"
#include "hallcal/rng.hpp"

using namespace hallcal;

namespace {

constexpr double kPi = std::numbers::pi;

flux::BasisDescriptor fourier_1_to(int top) {
    flux::FourierBasis f;
    for (int h = 1; h <= top; ++h) {
        f.harmonics.push_back(h);
    }
    return flux::BasisDescriptor{f};
}

}  // namespace

TEST_CASE("fourier basis ordering and quadrant values") {
    const auto b0 = flux::fourier_basis(0.0, {1});
    REQUIRE(b0.size() == 3);
    CHECK(b0(0) == 1.0);
    CHECK(b0(1) == doctest::Approx(0.0));
    CHECK(b0(2) == doctest::Approx(1.0));

    const auto b = flux::fourier_basis(kPi / 2.0, {1, 2});
    REQUIRE(b.size() == 5);
    CHECK(b(0) == 1.0);
    CHECK(b(1) == doctest::Approx(1.0));
    CHECK(b(2) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(b(3) == doctest::Approx(0.0).epsilon(1e-15));
    CHECK(b(4) == doctest::Approx(-1.0));
}

TEST_CASE("fourier basis matches direct trig evaluation") {
    const auto desc = fourier_1_to(11);
    const double y0 = 0.3;
    const auto beta = flux::eval_basis(y0, desc);
    REQUIRE(beta.size() == 23);
    CHECK(beta(0) == 1.0);
    for (int h = 1; h <= 11; ++h) {
        CHECK(std::abs(beta(2 * h - 1) - std::sin(h * y0)) < 1e-15);
        CHECK(std::abs(beta(2 * h) - std::cos(h * y0)) < 1e-15);
    }
}

TEST_CASE("kernel basis values and periodicity") {
    const auto kb = flux::make_kernel_basis(8, 1.0, 1.0);

    SUBCASE("unit value at a center") {
        const auto beta = flux::kernel_basis(kb.centers(3), kb);
        CHECK(beta(3) == doctest::Approx(1.0));
    }
    SUBCASE("antipodal center gives exp(-2)") {
        // centers include pi for even m
        const auto beta = flux::kernel_basis(0.0, kb);
        CHECK(beta(4) == doctest::Approx(std::exp(-2.0)));
    }
    SUBCASE("2 pi shift leaves rows unchanged") {
        const auto a = flux::kernel_basis(0.7, kb);
        const auto b = flux::kernel_basis(0.7 + 2.0 * kPi, kb);
        for (Eigen::Index j = 0; j < a.size(); ++j) {
            CHECK(std::abs(a(j) - b(j)) < 1e-15);
        }
    }
}

TEST_CASE("regressor is a block-diagonal Kronecker product") {
    flux::FourierBasis f;
    f.harmonics = {1};
    const flux::BasisDescriptor desc{f};
    const auto psi = flux::regressor_psi(0.0, desc);
    REQUIRE(psi.rows() == 3);
    REQUIRE(psi.cols() == 9);
    // beta = [1, 0, 1] on each diagonal block, zeros elsewhere
    const Eigen::RowVector3d beta(1.0, 0.0, 1.0);
    for (int ch = 0; ch < 3; ++ch) {
        for (int j = 0; j < 9; ++j) {
            const double expected = (j / 3 == ch) ? beta(j % 3) : 0.0;
            CHECK(psi(ch, j) == doctest::Approx(expected));
        }
    }

    int nonzero = 0;
    for (int ch = 0; ch < 3; ++ch) {
        for (int j = 0; j < 9; ++j) {
            if (psi(ch, j) != 0.0) {
                ++nonzero;
            }
        }
    }
    CHECK(nonzero == 6);  // beta itself has one zero at y0 = 0

    SUBCASE("a dense basis row fills exactly 3m entries") {
        const auto dense = flux::regressor_psi(0.3, desc);
        int filled = 0;
        for (int ch = 0; ch < 3; ++ch) {
            for (int j = 0; j < 9; ++j) {
                if (dense(ch, j) != 0.0) {
                    ++filled;
                }
            }
        }
        CHECK(filled == 9);
    }
}

TEST_CASE("psi theta equals the per-channel inner products") {
    const auto desc = fourier_1_to(5);
    const Eigen::Index m = desc.dimension();
    Rng rng(3);
    Eigen::VectorXd theta(3 * m);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        theta(i) = rng.uniform(-1.0, 1.0);
    }
    const double y0 = rng.uniform(0.0, 2.0 * kPi);
    const Eigen::Vector3d via_psi = flux::regressor_psi(y0, desc) * theta;
    const auto beta = flux::eval_basis(y0, desc);
    for (int ch = 0; ch < 3; ++ch) {
        double acc = 0.0;
        for (Eigen::Index j = 0; j < m; ++j) {
            acc += beta(j) * theta(ch * m + j);
        }
        CHECK(std::abs(via_psi(ch) - acc) < 1e-15);
    }

    flux::FluxModel model{desc, theta, 5};
    const Eigen::Vector3d via_eval = flux::eval_flux(model, y0);
    CHECK((via_eval - via_psi).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("pure three-phase cosines at zero angle") {
    const auto desc = fourier_1_to(11);
    flux::FluxModel model{desc, flux::initial_theta(desc, 11, 1.0), 11};
    const Eigen::Vector3d d = flux::eval_flux(model, 0.0);
    CHECK(d(0) == doctest::Approx(1.0));
    CHECK(d(1) == doctest::Approx(-0.5));
    CHECK(d(2) == doctest::Approx(-0.5));
}

TEST_CASE("flux model periodicity and linearity in theta") {
    const auto desc = fourier_1_to(7);
    const auto truth = flux::make_ground_truth(desc, 7, 0.2, 99);
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const double y0 = rng.uniform(-10.0, 10.0);
        const Eigen::Vector3d a = flux::eval_flux(truth, y0);
        const Eigen::Vector3d b = flux::eval_flux(truth, y0 + 2.0 * kPi);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
    }

    flux::FluxModel m1 = truth;
    flux::FluxModel m2 = truth;
    Eigen::VectorXd t2(truth.theta.size());
    for (Eigen::Index i = 0; i < t2.size(); ++i) {
        t2(i) = rng.uniform(-1.0, 1.0);
    }
    m2.theta = t2;
    flux::FluxModel mix = truth;
    mix.theta = 0.3 * m1.theta + 1.7 * m2.theta;
    for (int trial = 0; trial < 20; ++trial) {
        const double y0 = rng.uniform(0.0, 2.0 * kPi);
        const Eigen::Vector3d lhs = flux::eval_flux(mix, y0);
        const Eigen::Vector3d rhs =
            0.3 * flux::eval_flux(m1, y0) + 1.7 * flux::eval_flux(m2, y0);
        CHECK((lhs - rhs).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("initial theta for the fourier basis") {
    const auto desc = fourier_1_to(11);
    const auto theta = flux::initial_theta(desc, 11, 1.0);
    const Eigen::Index m = desc.dimension();
    REQUIRE(theta.size() == 3 * m);

    // support is confined to the sin/cos pair of harmonic 11 per channel;
    // channel 0 has a zero sine coefficient (phase 0), so 5 entries are
    // nonzero out of the 6 slots
    int nonzero = 0;
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const Eigen::Index within = i % m;
        if (theta(i) != 0.0) {
            ++nonzero;
            CHECK((within == 2 * 11 - 1 || within == 2 * 11));
        }
    }
    CHECK(nonzero == 5);
    CHECK(theta(2 * 11) == doctest::Approx(1.0));  // channel 0 cosine

    SUBCASE("amplitude zero gives the zero vector") {
        CHECK(flux::initial_theta(desc, 11, 0.0).norm() == 0.0);
    }
    SUBCASE("missing harmonic is rejected") {
        flux::FourierBasis f;
        f.harmonics = {1, 2, 3};
        CHECK_THROWS_AS(flux::initial_theta(flux::BasisDescriptor{f}, 11, 1.0), ConfigError);
    }
}

TEST_CASE("initial theta for the kernel basis reproduces sinusoids") {
    flux::BasisDescriptor desc{flux::make_kernel_basis(64, 1.0, 0.1)};
    const int n_m = 11;
    const auto theta = flux::initial_theta(desc, n_m, 1.0);
    flux::FluxModel model{desc, theta, n_m};
    double max_err = 0.0;
    for (int i = 0; i < 2000; ++i) {
        const double y0 = 2.0 * kPi * i / 2000.0;
        const Eigen::Vector3d d = flux::eval_flux(model, y0);
        for (int ch = 0; ch < 3; ++ch) {
            const double target = std::cos(n_m * y0 - 2.0 * kPi * ch / 3.0);
            max_err = std::max(max_err, std::abs(d(ch) - target));
        }
    }
    CHECK(max_err < 1e-3);
}

TEST_CASE("ground truth determinism and symmetry breaking") {
    const auto desc = fourier_1_to(11);

    SUBCASE("zero perturbation returns pure sinusoids") {
        const auto gt = flux::make_ground_truth(desc, 11, 0.0, 5);
        const auto theta0 = flux::initial_theta(desc, 11, 1.0);
        CHECK((gt.theta - theta0).norm() == 0.0);
    }
    SUBCASE("same seed twice gives identical theta") {
        const auto a = flux::make_ground_truth(desc, 11, 0.1, 123);
        const auto b = flux::make_ground_truth(desc, 11, 0.1, 123);
        CHECK((a.theta - b.theta).norm() == 0.0);
        const auto c = flux::make_ground_truth(desc, 11, 0.1, 124);
        CHECK((a.theta - c.theta).norm() > 0.0);
    }
    SUBCASE("perturbation breaks the pole-pair symmetry") {
        const auto gt = flux::make_ground_truth(desc, 11, 0.1, 7);
        const double shift = 2.0 * kPi / 11.0;
        double max_dev = 0.0;
        for (int i = 0; i < 10000; ++i) {
            const double y0 = 2.0 * kPi * i / 10000.0;
            max_dev = std::max(max_dev, (flux::eval_flux(gt, y0) -
                                         flux::eval_flux(gt, y0 + shift))
                                            .norm());
        }
        CHECK(max_dev > 1e-3);
    }
    SUBCASE("perturbation outside [0, 0.5] is rejected") {
        CHECK_THROWS_AS(flux::make_ground_truth(desc, 11, -0.1, 1), ConfigError);
        CHECK_THROWS_AS(flux::make_ground_truth(desc, 11, 0.6, 1), ConfigError);
    }
}
