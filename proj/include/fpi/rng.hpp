#pragma once

#include <cmath>
#include <cstdint>

namespace fpi {

/// Deterministic PRNG used everywhere randomness is needed.
///
/// Algorithm: PCG32 (XSH-RR variant) — a 64-bit LCG state with an
/// xorshift + rotate output function. The stream depends only on the
/// 64-bit seed, so identical seeds reproduce identical draws on every
/// platform and build.
class Pcg32 {
public:
    explicit Pcg32(std::uint64_t seed = 0x853c49e6748fea9bULL) { reseed(seed); }

    void reseed(std::uint64_t seed) {
        state_ = 0;
        next_u32();
        state_ += seed;
        next_u32();
    }

    std::uint32_t next_u32() {
        std::uint64_t old = state_;
        state_ = old * 6364136223846793005ULL + 1442695040888963407ULL;
        std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
        std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
        return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
    }

    std::uint64_t next_u64() {
        std::uint64_t hi = next_u32();
        return (hi << 32) | next_u32();
    }

    /// Uniform real in [0, 1).
    double uniform() { return next_u32() * 0x1p-32; }

    /// Uniform real in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in [0, n). Fixed-point multiply mapping (documented:
    /// bias < 2^-32, irrelevant at the scales used here and fully deterministic).
    std::uint32_t uniform_int(std::uint32_t n) {
        return static_cast<std::uint32_t>((static_cast<std::uint64_t>(next_u32()) * n) >> 32);
    }

    /// Uniform integer in [lo, hi] inclusive.
    int uniform_int(int lo, int hi) {
        return lo + static_cast<int>(uniform_int(static_cast<std::uint32_t>(hi - lo + 1)));
    }

    /// Standard normal via Box-Muller (consumes exactly two draws, no cache).
    double normal() {
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    /// Normal truncated to mean +/- 2*std by rejection.
    double trunc_normal(double mean, double std_dev) {
        double z = normal();
        while (z < -2.0 || z > 2.0) z = normal();
        return mean + std_dev * z;
    }

    /// Derive an independent stream. Mixing is splitmix64 of (state, tag),
    /// so forks are reproducible functions of the parent seed.
    Pcg32 fork(std::uint64_t tag) const {
        std::uint64_t x = state_ ^ (tag + 0x9e3779b97f4a7c15ULL);
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        x = x ^ (x >> 31);
        return Pcg32(x);
    }

    std::uint64_t state() const { return state_; }

private:
    std::uint64_t state_ = 0;
};

/// Stateless 64-bit mix for deriving per-sample seeds from (seed, indices).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b, std::uint64_t c = 0) {
    std::uint64_t x = a * 0x9e3779b97f4a7c15ULL + b * 0xc2b2ae3d27d4eb4fULL + c * 0x165667b19e3779f9ULL + 0x27d4eb2f165667c5ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace fpi
