/*
 * SPDX-License-Identifier: Apache-2.0
 */

#include "hallcal/fft.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace hallcal {

bool is_power_of_two(std::size_t n) {
    return n != 0 && (n & (n - 1)) == 0;
}

void fft_radix2(std::vector<std::complex<double>>& data) {
    const std::size_t n = data.size();
    if (!is_power_of_two(n)) {
        throw std::invalid_argument("fft_radix2: size must be a power of two");
    }
    // bit-reversal permutation
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) {
            j ^= bit;
        }
        j ^= bit;
        if (i < j) {
            std::swap(data[i], data[j]);
        }
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double angle = -2.0 * std::numbers::pi / static_cast<double>(len);
        const std::complex<double> wlen(std::cos(angle), std::sin(angle));
        for (std::size_t i = 0; i < n; i += len) {
            std::complex<double> w(1.0, 0.0);
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> u = data[i + k];
                const std::complex<double> v = data[i + k + len / 2] * w;
                data[i + k] = u + v;
                data[i + k + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

std::complex<double> dft_bin(const double* x, std::size_t n, std::size_t k) {
    const double w = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
    // Recurrence instead of per-sample trig keeps this O(n) with two sincos calls.
    const double cw = std::cos(w);
    const double sw = std::sin(w);
    double cr = 1.0;
    double ci = 0.0;
    double acc_re = 0.0;
    double acc_im = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        acc_re += x[i] * cr;
        acc_im += x[i] * ci;
        const double nr = cr * cw - ci * sw;
        ci = cr * sw + ci * cw;
        cr = nr;
    }
    return {acc_re, acc_im};
}

}  // namespace hallcal
