#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

namespace hvcl {

/// Seeded random source passed explicitly into every sampling operation.
///
/// The engine is std::mt19937_64, whose output sequence is fixed by the standard.
/// The distributions are implemented here instead of using <random>'s
/// distribution classes, whose algorithms are implementation-defined, so a seed
/// reproduces the same draws on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal draw (ziggurat method).
    double normal();

    /// Unbiased integer in [0, n). n must be positive.
    std::uint64_t below(std::uint64_t n);

    void fill_normal(std::span<double> out);

    /// Seeded Fisher-Yates permutation of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

    /// Independent child stream; advances this generator by one draw.
    Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

private:
    std::mt19937_64 engine_;
};

} // namespace hvcl
