/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hallcal/errors.hpp"
#include "hallcal/validation.hpp"

using namespace hallcal;

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

}  // namespace

TEST_CASE("cumulative psd concentrates a pure spatial tone in one bin") {
    const std::size_t n = 20000;
    std::vector<double> pos(n);
    std::vector<double> err(n);
    for (std::size_t k = 0; k < n; ++k) {
        pos[k] = 2.0 * kTwoPi * static_cast<double>(k) / (n - 1);  // exactly two revolutions
        err[k] = std::sin(11.0 * pos[k]);
    }
    const auto psd = validation::compute_cumulative_psd(err, pos, 1u << 14);
    const double total = psd.total_power();
    CHECK(total == doctest::Approx(0.5).epsilon(1e-3));  // mean square of a unit sine
    const double at_11 = validation::band_power(psd, 10.5, 11.5);
    CHECK(at_11 / total > 0.99);
}

TEST_CASE("cumulative psd of zero error is identically zero") {
    std::vector<double> pos(512);
    std::vector<double> err(512, 0.0);
    for (std::size_t k = 0; k < pos.size(); ++k) {
        pos[k] = 0.01 * static_cast<double>(k);
    }
    const auto psd = validation::compute_cumulative_psd(err, pos, 1024);
    CHECK(psd.total_power() == 0.0);
    for (double v : psd.cumulative_power) {
        CHECK(v == 0.0);
    }
}

TEST_CASE("constant error lands entirely in the zero-frequency bin") {
    std::vector<double> pos(4096);
    std::vector<double> err(4096, 1e-3);
    for (std::size_t k = 0; k < pos.size(); ++k) {
        pos[k] = kTwoPi * 3.0 * static_cast<double>(k) / 4095.0;
    }
    const auto psd = validation::compute_cumulative_psd(err, pos, 4096);
    CHECK(psd.cumulative_power.front() == doctest::Approx(1e-6).epsilon(1e-9));
    CHECK(psd.total_power() == doctest::Approx(1e-6).epsilon(1e-9));
}

TEST_CASE("parseval holds for a broadband error") {
    const std::size_t n = 8192;
    std::vector<double> pos(n);
    std::vector<double> err(n);
    for (std::size_t k = 0; k < n; ++k) {
        pos[k] = kTwoPi * 2.0 * static_cast<double>(k) / (n - 1);
        err[k] = std::sin(3.0 * pos[k]) + 0.25 * std::cos(17.0 * pos[k]) + 0.1;
    }
    const std::size_t grid = 8192;
    const auto psd = validation::compute_cumulative_psd(err, pos, grid);

    // recompute the mean square of the resampled sequence independently
    const double span = kTwoPi * 2.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < grid; ++i) {
        const double p = pos.front() + span * static_cast<double>(i) / grid;
        std::size_t lo = 0;
        std::size_t hi = n - 1;
        while (hi - lo > 1) {
            const std::size_t mid = (lo + hi) / 2;
            if (pos[mid] <= p) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        const double w = (p - pos[lo]) / (pos[hi] - pos[lo]);
        const double v = err[lo] + w * (err[hi] - err[lo]);
        acc += v * v;
    }
    CHECK(psd.total_power() == doctest::Approx(acc / grid).epsilon(1e-9));
}

TEST_CASE("non-monotone position is rejected") {
    std::vector<double> pos = {0.0, 0.1, 0.05, 0.2};
    std::vector<double> err = {0.0, 0.0, 0.0, 0.0};
    CHECK_THROWS_AS(validation::compute_cumulative_psd(err, pos, 256), NumericalError);
}

TEST_CASE("improvement factors are the plain rms and peak ratios") {
    // synthetic dataset: y = y0 + known error, table with zero corrections
    const std::size_t n = 5000;
    sim::Dataset ds;
    ds.sample_time = 1e-3;
    ds.n_m = 11;
    ds.t.resize(n);
    ds.d.resize(static_cast<Eigen::Index>(n), 3);
    ds.y.resize(n);
    ds.torque.assign(n, 0.0);
    ds.r.resize(n);
    ds.y0.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        const double y0 = kTwoPi * 2.0 * static_cast<double>(k) / (n - 1);
        ds.t[k] = static_cast<double>(k) * ds.sample_time;
        ds.y0[k] = y0;
        ds.y[k] = y0 + 1e-3 * std::sin(11.0 * y0);
        ds.r[k] = y0;
        const double e = 11.0 * y0;
        ds.d(static_cast<Eigen::Index>(k), 0) = std::cos(e);
        ds.d(static_cast<Eigen::Index>(k), 1) = std::cos(e - kTwoPi / 3.0);
        ds.d(static_cast<Eigen::Index>(k), 2) = std::cos(e + kTwoPi / 3.0);
    }
    recon::CorrectionTable zero;
    for (int i = 0; i < 64; ++i) {
        zero.y_hat.push_back(kTwoPi * i / 64.0);
        zero.eta.push_back(0.0);
    }
    const auto metrics = validation::compute_error_metrics(ds, zero, 1u << 12);
    // logged f_init error is the injected sine; the replayed f_star error is
    // zero because the voltages are pure sinusoids and the table is zero
    CHECK(metrics.rms_init == doctest::Approx(1e-3 / std::sqrt(2.0)).epsilon(1e-3));
    CHECK(metrics.peak_init == doctest::Approx(1e-3).epsilon(1e-3));
    CHECK(metrics.rms_star < 1e-12);
    CHECK(metrics.improvement_factor_rms ==
          doctest::Approx(metrics.rms_init / metrics.rms_star));

    SUBCASE("missing ground truth is rejected") {
        sim::Dataset no_truth = ds;
        no_truth.y0.clear();
        CHECK_THROWS_AS(validation::compute_error_metrics(no_truth, zero, 1u << 12),
                        ConfigError);
    }
}
