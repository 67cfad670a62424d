/*
 * SPDX-License-Identifier: Apache-2.0
 */

#pragma once

#include <cstdint>

namespace hallcal {

/// xoshiro256++ with splitmix64 seeding. Standard-library engines are
/// portable, but the <random> distributions are not: identical seeds can
/// produce different streams across standard libraries. Everything seeded
/// must be bit-reproducible, so both the generator and the conversions
/// live here.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t next_u64();

    /// Uniform on [0, 1).
    double uniform01();

    /// Uniform on [a, b).
    double uniform(double a, double b);

    /// Standard normal via Box-Muller (deterministic call sequence).
    double gaussian();

    /// Derives an independent stream seed from a master seed.
    static std::uint64_t derive(std::uint64_t master, std::uint64_t stream);

private:
    std::uint64_t state_[4];
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace hallcal
