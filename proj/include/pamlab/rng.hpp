#pragma once

// Seeded random streams.
//
// A single 64-bit master seed is split into independent streams by a
// counter-based hash of (master, stream ids...). Variate transforms are
// written out here instead of using <random> distributions so that outputs
// do not depend on the standard library implementation.

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace pamlab {

/// SplitMix64 finalizer; bijective on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Derive a stream seed from the master seed and a path of counters.
inline std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> path) noexcept
{
    std::uint64_t s = splitmix64(master);
    for (auto p : path) {
        s = splitmix64(s ^ splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return s;
}

class RngStream {
public:
    explicit RngStream(std::uint64_t seed) : engine_(seed), seed_(seed) {}
    RngStream(std::uint64_t master, std::initializer_list<std::uint64_t> path)
        : RngStream(derive_seed(master, path)) {}

    std::uint64_t seed() const noexcept { return seed_; }

    std::uint64_t bits() { return engine_(); }

    /// Uniform on the open interval (0,1), 53 bits of resolution.
    double uniform()
    {
        for (;;) {
            const double u = static_cast<double>(engine_() >> 11) * 0x1.0p-53;
            if (u > 0.0) return u;
        }
    }

    /// Standard exponential variate.
    double exponential() { return -std::log(uniform()); }

    /// Uniform integer in [0, n).
    std::uint64_t below(std::uint64_t n)
    {
        // Lemire-style rejection keeps the result unbiased.
        const std::uint64_t limit = (~std::uint64_t{0}) - (~std::uint64_t{0}) % n;
        for (;;) {
            const std::uint64_t x = engine_();
            if (x < limit) return x % n;
        }
    }

    /// Uniform on (-pi/2, pi/2).
    double uniform_angle() { return std::numbers::pi * (uniform() - 0.5); }

private:
    std::mt19937_64 engine_;
    std::uint64_t seed_;
};

} // namespace pamlab
