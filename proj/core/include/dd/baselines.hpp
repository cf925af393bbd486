#pragma once

#include <cstdint>
#include <vector>

#include "dd/rng.hpp"
#include "dd/sequence.hpp"
#include "dd/teacher.hpp"

namespace dd {

// Per-position token frequencies: rows[j][k] is the probability of token
// k+1 at position j+1. Every row sums to 1.
struct MarginalTable {
    std::uint32_t seq_len = 0;
    std::uint32_t vocab = 0;
    std::vector<std::vector<double>> rows;

    void validate() const;
};

// The optimum of the position-independent one-step objective: plain
// occurrence frequencies per position.
MarginalTable fit_onestep_star(const std::vector<TokenSeq>& dataset, std::uint32_t vocab);

// Independent categorical draw per position.
TokenSeq sample_onestep_star(const MarginalTable& table, Rng& rng);

// The one-step objective: sum over positions and tokens of the dataset
// frequency times log of the modeled probability, averaged over
// positions. Maximized at the frequency table.
double onestep_objective(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                         const MarginalTable& table);

struct Prop1Report {
    double objective_at_frequency = 0.0;
    double best_alternative = 0.0;
    std::uint32_t trials = 0;
    bool frequency_is_max = false;
};

// Numerical optimality check: evaluates the objective at the frequency
// table and at `trials` random perturbed tables projected back onto the
// simplex; reports whether any alternative beats the frequency table.
Prop1Report verify_prop1(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                         std::uint32_t trials, Rng& rng);

// Skip baseline: the teacher samples the first n - n_skip positions; the
// remaining positions are filled independently from the marginal table
// (the least-informative completion on a pure token domain).
TokenSeq skip_n_sample(const Teacher& teacher, const MarginalTable& marginals,
                       std::uint32_t n_skip, std::optional<std::uint32_t> condition, Rng& rng);

}  // namespace dd
