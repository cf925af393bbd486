#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>

namespace dd {

// splitmix64 finalizer. Used both as the generator step and for seed
// derivation, so the whole pipeline stays reproducible without relying on
// implementation-defined std:: distributions.
constexpr std::uint64_t mix64(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
}

// Counter-based PRNG (splitmix64). Bit-exact across platforms for the
// integer stream; Gaussian draws use Box-Muller on two uniforms each, no
// caching, so consumption counts are predictable.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        return mix64(state_);
    }

    // Uniform in [0, 1).
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

    // Standard normal via Box-Muller (cosine branch only).
    double next_gaussian() {
        double u1 = next_double();  // [0,1) -> 1-u1 in (0,1]
        double u2 = next_double();
        double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    // Index in [0, n).
    std::uint64_t next_index(std::uint64_t n) { return next_u64() % n; }

    // One draw from a categorical distribution given as probabilities.
    // Returns a 1-based index; consumes exactly one uniform.
    std::uint32_t next_categorical(std::span<const double> probs) {
        double u = next_double();
        double acc = 0.0;
        for (std::size_t j = 0; j < probs.size(); ++j) {
            acc += probs[j];
            if (u < acc) return static_cast<std::uint32_t>(j + 1);
        }
        return static_cast<std::uint32_t>(probs.size());  // guard against rounding
    }

private:
    std::uint64_t state_;
};

// Derives the seed of stream `index` from a base seed. Streams don't depend
// on evaluation order, so parallel producers stay reproducible.
constexpr std::uint64_t split_seed(std::uint64_t base, std::uint64_t index) {
    return mix64(base ^ mix64(index * 0x9E3779B97F4A7C15ULL + 0x632BE59BD9B4E019ULL));
}

}  // namespace dd
