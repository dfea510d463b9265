#pragma once

#include <array>
#include <cstdint>

namespace effattn {

// xoshiro256** seeded through splitmix64. Both are fully specified integer
// recurrences, so a seed yields the same stream on every platform and
// compiler. Floating-point draws use only exact conversions plus libm
// log/sqrt/cos for the normal distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed);

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t next_u64() noexcept;
    // Uniform on [0, 1) with 53 bits of precision.
    double uniform01() noexcept;
    double uniform(double lo, double hi) noexcept;
    // Box-Muller; the second variate of each pair is cached.
    double normal(double mean, double stddev) noexcept;
    // Uniform integer in [lo, hi].
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) noexcept;

private:
    std::uint64_t seed_;
    std::array<std::uint64_t, 4> s_{};
    bool has_spare_ = false;
    double spare_ = 0.0;
};

} // namespace effattn
