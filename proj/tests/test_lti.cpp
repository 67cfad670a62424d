/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hallcal/errors.hpp"
#include "hallcal/lti.hpp"
#include "hallcal/rng.hpp"
#include "oracles.hpp"

using namespace hallcal;

namespace {

lti::ContinuousTransferFunction example_plant() {
    lti::ContinuousTransferFunction tf;
    tf.num = {1.663e5};
    tf.den = {1.0, 632.6, 2702.0, 0.0};
    tf.input_delay = 1.2e-4;
    return tf;
}

lti::DiscreteTransferFunction example_controller(double ts) {
    return {{2.94, -3.29, -2.10, 2.45}, {1.0, -3.45, 4.52, -2.68, 0.61}, ts};
}

}  // namespace

TEST_CASE("zoh discretization of an integrator") {
    lti::ContinuousTransferFunction tf;
    tf.num = {1.0};
    tf.den = {1.0, 0.0};
    const auto d = lti::discretize_zoh(tf, 0.1);
    REQUIRE(d.order() == 1);
    CHECK(d.A(0, 0) == doctest::Approx(1.0));
    CHECK(d.B(0) == doctest::Approx(0.1));
    CHECK(d.C(0) == doctest::Approx(1.0));
    CHECK(d.D == doctest::Approx(0.0));
}

TEST_CASE("zoh discretization of a static gain") {
    lti::ContinuousTransferFunction tf;
    tf.num = {2.0};
    tf.den = {1.0};
    const auto d = lti::discretize_zoh(tf, 0.05);
    CHECK(d.order() == 0);
    CHECK(d.D == doctest::Approx(2.0));
}

TEST_CASE("zoh with fractional delay matches dense integration of the example plant") {
    const auto tf = example_plant();
    const double ts = 2.5e-4;
    const auto d = lti::discretize_zoh(tf, ts);

    const std::size_t n = 4000;  // one second
    const auto discrete = lti::step_response(d, n);
    const auto continuous =
        oracles::continuous_delayed_step_response(tf.num, tf.den, tf.input_delay, ts, n);

    double max_abs = 0.0;
    for (double v : continuous) {
        max_abs = std::max(max_abs, std::abs(v));
    }
    double max_err = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        max_err = std::max(max_err, std::abs(discrete[k] - continuous[k]));
    }
    CHECK(max_err / max_abs < 1e-6);
}

TEST_CASE("integer-sample delay shifts the impulse response exactly") {
    auto tf = example_plant();
    tf.input_delay = 0.0;
    const double ts = 1e-3;
    const auto base = lti::impulse_response(lti::discretize_zoh(tf, ts), 60);

    tf.input_delay = 3.0 * ts;
    const auto shifted = lti::impulse_response(lti::discretize_zoh(tf, ts), 63);
    for (std::size_t k = 0; k < 3; ++k) {
        CHECK(shifted[k] == 0.0);
    }
    for (std::size_t k = 0; k < 60; ++k) {
        CHECK(shifted[k + 3] == doctest::Approx(base[k]).epsilon(1e-12));
    }
}

TEST_CASE("zoh preserves the DC gain of a stable plant") {
    lti::ContinuousTransferFunction tf;
    tf.num = {3.0, 5.0};
    tf.den = {1.0, 2.0, 4.0};
    const auto d = lti::discretize_zoh(tf, 0.01);
    CHECK(std::abs(d.dc_gain() - tf.dc_gain()) < 1e-9);
}

TEST_CASE("improper transfer functions and bad sample times are rejected") {
    lti::ContinuousTransferFunction improper;
    improper.num = {1.0, 0.0, 0.0};
    improper.den = {1.0, 1.0};
    CHECK_THROWS_AS(lti::discretize_zoh(improper, 0.1), ConfigError);

    lti::ContinuousTransferFunction ok;
    ok.num = {1.0};
    ok.den = {1.0, 1.0};
    CHECK_THROWS_AS(lti::discretize_zoh(ok, 0.0), ConfigError);
    CHECK_THROWS_AS(lti::discretize_zoh(ok, -0.1), ConfigError);

    CHECK_THROWS_AS(lti::DiscreteTransferFunction({1.0, 0.0}, {1.0}, 0.1), ConfigError);
}

TEST_CASE("tf_to_ss static and unit-delay cases") {
    const auto unity = lti::tf_to_ss({{1.0}, {1.0}, 0.1});
    CHECK(unity.order() == 0);
    CHECK(unity.D == doctest::Approx(1.0));

    const auto delay = lti::tf_to_ss({{1.0}, {1.0, 0.0}, 0.1});
    REQUIRE(delay.order() == 1);
    CHECK(delay.A(0, 0) == doctest::Approx(0.0));
    const auto h = lti::impulse_response(delay, 4);
    CHECK(h[0] == doctest::Approx(0.0));
    CHECK(h[1] == doctest::Approx(1.0));
    CHECK(h[2] == doctest::Approx(0.0));
}

TEST_CASE("controller realization matches polynomial long division") {
    const auto tf = example_controller(2.5e-4);
    const auto ss = lti::tf_to_ss(tf);
    const auto h = lti::impulse_response(ss, 100);
    const auto href = oracles::long_division_impulse(tf.num, tf.den, 100);
    double scale = 1.0;
    for (double v : href) {
        scale = std::max(scale, std::abs(v));
    }
    for (std::size_t k = 0; k < 100; ++k) {
        CHECK(std::abs(h[k] - href[k]) / scale < 1e-12);
    }
}

TEST_CASE("controller step response matches the difference equation") {
    const auto tf = example_controller(2.5e-4);
    const auto ss = lti::tf_to_ss(tf);
    const std::vector<double> u(10, 1.0);
    const auto yref = oracles::filter_difference_equation(tf.num, tf.den, u);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(ss.order());
    for (std::size_t k = 0; k < u.size(); ++k) {
        auto s = lti::ss_step(ss, x, u[k]);
        CHECK(s.output == doctest::Approx(yref[k]).epsilon(1e-12));
        x = std::move(s.next_state);
    }
}

TEST_CASE("ss_step basics") {
    lti::DiscreteStateSpace acc;
    acc.A = Eigen::MatrixXd::Constant(1, 1, 1.0);
    acc.B = Eigen::VectorXd::Constant(1, 1.0);
    acc.C = Eigen::RowVectorXd::Constant(1, 1.0);
    acc.D = 0.0;
    acc.sample_time = 1.0;

    Eigen::VectorXd x = Eigen::VectorXd::Zero(1);
    const auto s = lti::ss_step(acc, x, 1.0);
    CHECK(s.output == doctest::Approx(0.0));
    CHECK(s.next_state(0) == doctest::Approx(1.0));

    const auto zero = lti::ss_step(acc, Eigen::VectorXd::Zero(1), 0.0);
    CHECK(zero.output == 0.0);
    CHECK(zero.next_state(0) == 0.0);

    CHECK_THROWS_AS(lti::ss_step(acc, Eigen::VectorXd::Zero(2), 1.0), NumericalError);
}

TEST_CASE("ss_step is linear in the input sequence") {
    const auto ss = lti::tf_to_ss(example_controller(1e-3));
    Rng rng(5);
    std::vector<double> u1(40), u2(40);
    for (std::size_t k = 0; k < 40; ++k) {
        u1[k] = rng.uniform(-1.0, 1.0);
        u2[k] = rng.uniform(-1.0, 1.0);
    }
    const double alpha = 0.7;
    const double beta = -1.3;

    auto run = [&](auto input) {
        Eigen::VectorXd x = Eigen::VectorXd::Zero(ss.order());
        std::vector<double> y(40);
        for (std::size_t k = 0; k < 40; ++k) {
            auto s = lti::ss_step(ss, x, input(k));
            y[k] = s.output;
            x = std::move(s.next_state);
        }
        return y;
    };
    const auto y1 = run([&](std::size_t k) { return u1[k]; });
    const auto y2 = run([&](std::size_t k) { return u2[k]; });
    const auto ymix = run([&](std::size_t k) { return alpha * u1[k] + beta * u2[k]; });
    double scale = 1.0;
    for (std::size_t k = 0; k < 40; ++k) {
        scale = std::max({scale, std::abs(y1[k]), std::abs(y2[k])});
    }
    for (std::size_t k = 0; k < 40; ++k) {
        CHECK(std::abs(ymix[k] - alpha * y1[k] - beta * y2[k]) / scale < 1e-12);
    }
}

TEST_CASE("zero state and zero input stay at zero") {
    const auto d = lti::discretize_zoh(example_plant(), 5e-4);
    Eigen::VectorXd x = Eigen::VectorXd::Zero(d.order());
    for (int k = 0; k < 20; ++k) {
        auto s = lti::ss_step(d, x, 0.0);
        CHECK(s.output == 0.0);
        x = std::move(s.next_state);
        CHECK(x.norm() == 0.0);
    }
}
