/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <complex>
#include <cstddef>
#include <vector>

namespace hallcal {

bool is_power_of_two(std::size_t n);

/// In-place iterative radix-2 FFT. Size must be a power of two.
void fft_radix2(std::vector<std::complex<double>>& data);

/// DFT of a real segment at a single bin k (0 <= k < n).
std::complex<double> dft_bin(const double* x, std::size_t n, std::size_t k);

}  // namespace hallcal
