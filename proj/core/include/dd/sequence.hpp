#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dd/errors.hpp"
#include "dd/rng.hpp"

namespace dd {

// A sequence of codebook token ids. Ids are 1-based throughout the public
// API, matching 1-based codebook entries. Slicing follows the inclusive
// head convention: head(t) is elements 1..t.
struct TokenSeq {
    std::vector<std::uint32_t> ids;
    std::optional<std::uint32_t> condition;

    std::uint32_t size() const { return static_cast<std::uint32_t>(ids.size()); }
};

// n continuous noise vectors of dimension dim. When `seed` is set, the
// values are exactly what generate(seed, n, dim) produces, so stores only
// need to persist the seed. Tails produced by slicing carry no seed.
class NoiseSeq {
public:
    NoiseSeq() : dim_(0) {}
    NoiseSeq(std::uint32_t dim, std::vector<double> values,
             std::optional<std::uint64_t> seed = std::nullopt);

    static NoiseSeq generate(std::uint64_t seed, std::uint32_t n, std::uint32_t dim);

    std::uint32_t size() const {
        return dim_ == 0 ? 0 : static_cast<std::uint32_t>(values_.size() / dim_);
    }
    std::uint32_t dim() const { return dim_; }
    std::optional<std::uint64_t> seed() const { return seed_; }

    // 1-based element access.
    std::span<const double> vec(std::uint32_t i) const;

    const std::vector<double>& raw() const { return values_; }

private:
    std::uint32_t dim_;
    std::vector<double> values_;
    std::optional<std::uint64_t> seed_;
};

// One point of a noise-to-data trajectory over a length-n sequence:
// data tokens 1..t-1 followed by noise vectors t..n, with t in [1, n+1].
// t = 1 is pure noise, t = n+1 pure data.
struct TrajectoryPoint {
    TokenSeq prefix;    // length t-1
    NoiseSeq suffix;    // length n-t+1
    std::uint32_t t = 1;

    std::uint32_t size() const { return prefix.size() + suffix.size(); }
};

// Elements 1..t of a sequence (inclusive head); t = 0 gives the empty
// sequence. Throws DomainError for t > n.
TokenSeq slice_head(const TokenSeq& seq, std::uint32_t t);
NoiseSeq slice_head(const NoiseSeq& seq, std::uint32_t t);

// Elements t..n (the tail that starts at position t). t = n+1 gives the
// empty tail.
NoiseSeq slice_tail(const NoiseSeq& seq, std::uint32_t t);

// Assembles the trajectory point (q_1..q_{t-1}, e_t..e_n). Lengths must be
// exactly t-1 and n-t+1 for the implied n.
TrajectoryPoint concat_mixed(TokenSeq data_head, NoiseSeq noise_tail, std::uint32_t t);

}  // namespace dd
