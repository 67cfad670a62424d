/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "hallcal/fft.hpp"
#include "hallcal/rng.hpp"

using namespace hallcal;

TEST_CASE("rng streams are deterministic and seed-separated") {
    Rng a(123);
    Rng b(123);
    Rng c(124);
    bool all_equal = true;
    bool any_equal_to_c = false;
    for (int i = 0; i < 1000; ++i) {
        const auto va = a.next_u64();
        const auto vb = b.next_u64();
        const auto vc = c.next_u64();
        all_equal = all_equal && (va == vb);
        any_equal_to_c = any_equal_to_c || (va == vc);
    }
    CHECK(all_equal);
    CHECK_FALSE(any_equal_to_c);

    CHECK(Rng::derive(1, 2) != Rng::derive(1, 3));
    CHECK(Rng::derive(1, 2) == Rng::derive(1, 2));
}

TEST_CASE("uniform and gaussian moments") {
    Rng rng(7);
    const int n = 200000;
    double mean = 0.0;
    double var = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform01();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        mean += u;
        var += (u - 0.5) * (u - 0.5);
    }
    CHECK(mean / n == doctest::Approx(0.5).epsilon(0.01));
    CHECK(var / n == doctest::Approx(1.0 / 12.0).epsilon(0.02));

    double gmean = 0.0;
    double gvar = 0.0;
    for (int i = 0; i < n; ++i) {
        const double g = rng.gaussian();
        gmean += g;
        gvar += g * g;
    }
    CHECK(std::abs(gmean / n) < 0.01);
    CHECK(gvar / n == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("fft matches a direct dft and satisfies parseval") {
    Rng rng(42);
    const std::size_t n = 256;
    std::vector<std::complex<double>> x(n);
    std::vector<double> xr(n);
    for (std::size_t i = 0; i < n; ++i) {
        xr[i] = rng.uniform(-1.0, 1.0);
        x[i] = xr[i];
    }
    auto spectrum = x;
    fft_radix2(spectrum);

    double time_energy = 0.0;
    for (double v : xr) {
        time_energy += v * v;
    }
    double freq_energy = 0.0;
    for (const auto& v : spectrum) {
        freq_energy += std::norm(v);
    }
    CHECK(freq_energy / static_cast<double>(n) == doctest::Approx(time_energy).epsilon(1e-12));

    for (std::size_t k = 0; k < n; k += 17) {
        const auto direct = dft_bin(xr.data(), n, k);
        CHECK(std::abs(direct - spectrum[k]) < 1e-9);
    }

    std::vector<std::complex<double>> bad(12);
    CHECK_THROWS(fft_radix2(bad));
}
