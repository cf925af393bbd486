#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dd/baselines.hpp"
#include "dd/sequence.hpp"
#include "dd/teacher.hpp"

namespace dd {

// Probability mass over length-n sequences of tokens in [1, V]. Dense
// storage (an indexed vector over all V^n outcomes) when V^n fits the
// enumeration guard, sparse otherwise. Probabilities sum to 1 within 1e-9
// after normalize().
class JointDist {
public:
    static constexpr std::uint64_t kDenseLimit = 1'000'000;

    JointDist(std::uint32_t seq_len, std::uint32_t vocab);

    std::uint32_t seq_len() const { return n_; }
    std::uint32_t vocab() const { return vocab_; }
    bool dense() const { return dense_; }
    std::uint64_t outcome_count() const;  // V^n; only meaningful when dense

    void add(const std::vector<std::uint32_t>& ids, double mass);
    double prob(const std::vector<std::uint32_t>& ids) const;
    double total_mass() const;
    void normalize();

    // Visits every outcome with positive mass (sparse) or every outcome
    // (dense).
    void for_each(const std::function<void(const std::vector<std::uint32_t>&, double)>& fn)
        const;

    // n x V position marginals.
    std::vector<std::vector<double>> position_marginals() const;

private:
    std::uint64_t encode(const std::vector<std::uint32_t>& ids) const;
    std::vector<std::uint32_t> decode(std::uint64_t index) const;
    static std::string key_of(const std::vector<std::uint32_t>& ids);

    std::uint32_t n_, vocab_;
    bool dense_;
    std::vector<double> dense_p_;
    std::unordered_map<std::string, double> sparse_p_;
};

// Chain-rule enumeration of the teacher's sequence joint. Guarded by the
// dense limit; throws DomainError beyond it.
JointDist exact_joint(const Teacher& teacher, std::optional<std::uint32_t> condition);

// Frequency estimate from M draws of the sampler closure. vocab = 0
// infers the vocabulary from the draws.
JointDist empirical_joint(const std::function<TokenSeq()>& sampler, std::uint64_t samples,
                          std::uint32_t vocab = 0);

// Rough Monte-Carlo TV noise scale: sqrt(V^n / M) / 2.
double tv_confidence_halfwidth(std::uint32_t seq_len, std::uint32_t vocab,
                               std::uint64_t samples);

// Total variation distance: half the L1 distance over the union of
// supports. Both distributions must share (n, V).
double tv_distance(const JointDist& a, const JointDist& b);

// Mean absolute per-position marginal TV between two joints.
double mean_marginal_tv(const JointDist& a, const JointDist& b);

// Mean over position pairs (i < j) of the mutual information of the
// pair's 2-D marginal. Zero for any product-of-marginals distribution.
double mean_pairwise_mutual_information(const JointDist& dist);

// Marginal table view of a joint (for the skip baseline's fill rule).
MarginalTable marginal_table_from_joint(const JointDist& dist);

// Exact joint of the skip baseline: teacher chain rule on the first
// n - n_skip positions, marginal fill on the rest.
JointDist skip_n_exact_joint(const Teacher& teacher, const MarginalTable& marginals,
                             std::uint32_t n_skip, std::optional<std::uint32_t> condition);

// One evaluated system: TV numbers are against the reference joint.
struct SystemResult {
    std::string name;
    std::uint64_t steps_per_sample = 0;
    double tv_joint = 0.0;
    double tv_marginal_mean = 0.0;
    double mi_gap = 0.0;  // reference mean pairwise MI minus system's
    double wall_ms = 0.0;
    std::uint64_t samples = 0;
    double speedup = 0.0;  // teacher invocations per sample / system's
};

struct EvalReport {
    std::uint32_t seq_len = 0;
    std::uint32_t vocab = 0;
    std::uint64_t samples = 0;
    double confidence_halfwidth = 0.0;
    double reference_mi = 0.0;
    std::vector<SystemResult> systems;

    void write_kv(std::ostream& os) const;
    void write_csv(std::ostream& os) const;  // header + one row per system
    static const char* csv_header();
};

// A named sampler plus its per-sample invocation count.
struct SystemUnderTest {
    std::string name;
    std::uint64_t steps_per_sample = 0;
    std::function<TokenSeq()> draw;
};

// Runs every system for `samples` draws against the exact teacher joint.
EvalReport evaluate_systems(const Teacher& teacher, std::optional<std::uint32_t> condition,
                            const std::vector<SystemUnderTest>& systems,
                            std::uint64_t samples);

}  // namespace dd
