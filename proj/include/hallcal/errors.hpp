/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace hallcal {

/// Invalid configuration or malformed input files. CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Numerical failure at runtime (divergence, failed fit, degenerate input).
/// CLI exit code 3.
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Correction-table knots are not strictly increasing modulo one wrap,
/// so the table cannot represent a bijective angle map. CLI exit code 4.
class BijectivityError : public std::runtime_error {
public:
    BijectivityError(const std::string& msg, std::size_t index_a, std::size_t index_b)
        : std::runtime_error(msg), index_a(index_a), index_b(index_b) {}

    std::size_t index_a = 0;
    std::size_t index_b = 0;
};

}  // namespace hallcal
