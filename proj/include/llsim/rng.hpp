#pragma once

#include <cmath>
#include <cstdint>
#include <span>

#include "llsim/errors.hpp"

namespace llsim {

/// Finalizing mixer (Stafford variant 13). Bijective on 64-bit words.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Deterministic 64-bit generator (splitmix64). The exact algorithm is part
/// of the file-format contract: identical seeds must reproduce identical
/// corpora and specs everywhere, so no std:: engine is used.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    /// Uniform double in [0, 1), 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform double in (0, 1]; safe as a log() argument.
    double next_double_open() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    /// Standard exponential variate.
    double next_exponential() { return -std::log(next_double_open()); }

    /// Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) { return next_u64() % n; }

  private:
    std::uint64_t state_;
};

/// Derives an independent child stream seed from (parent, index). Documented
/// in the README so other implementations can reproduce output files:
///   child = mix64(parent ^ mix64(index + 0x9E3779B97F4A7C15)).
inline std::uint64_t derive_seed(std::uint64_t parent, std::uint64_t index) {
    return mix64(parent ^ mix64(index + 0x9E3779B97F4A7C15ull));
}

/// Named top-level stream indices used with derive_seed.
namespace streams {
inline constexpr std::uint64_t spec_rows = 1;
inline constexpr std::uint64_t intention_path = 2;
inline constexpr std::uint64_t message = 3;
inline constexpr std::uint64_t trial = 4;
inline constexpr std::uint64_t prompt = 5;
inline constexpr std::uint64_t monte_carlo = 6;
inline constexpr std::uint64_t calibration = 7;
inline constexpr std::uint64_t holdout = 8;
}  // namespace streams

/// Samples an index from an (assumed normalized) probability row.
inline int sample_categorical(SplitMix64& rng, std::span<const double> probs) {
    const double u = rng.next_double();
    double cum = 0.0;
    int last_positive = -1;
    for (int i = 0; i < static_cast<int>(probs.size()); ++i) {
        if (probs[i] > 0.0) last_positive = i;
        cum += probs[i];
        if (u < cum) return i;
    }
    // Float dust can leave cum slightly below 1; fall back to the last
    // positive entry so zero-probability symbols are never produced.
    if (last_positive < 0) throw DegenerateEvidence("categorical row sums to zero");
    return last_positive;
}

/// Fills `out` with one draw from a symmetric Dirichlet(1,...,1).
inline void sample_dirichlet_ones(SplitMix64& rng, std::span<double> out) {
    double total = 0.0;
    for (double& w : out) {
        w = rng.next_exponential();
        total += w;
    }
    for (double& w : out) w /= total;
}

}  // namespace llsim
