#pragma once

#include <cstdint>
#include <optional>
#include <random>

namespace poisonlab {

/// Seeded stream of uniforms and normals. The engine is std::mt19937_64,
/// whose output sequence is fixed by the standard; the conversions to
/// floating point are done here rather than through <random> distributions
/// (whose algorithms are implementation-defined), so streams match across
/// platforms and toolchains.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }
    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
    /// Uniform integer on [0, n).
    std::uint64_t below(std::uint64_t n);
    /// Standard normal by Box-Muller; the second variate of each pair is cached.
    double normal();
    /// Independent child stream seeded from this one.
    Rng fork() { return Rng(next_u64()); }

private:
    std::mt19937_64 engine_;
    std::optional<double> spare_;
};

}  // namespace poisonlab
