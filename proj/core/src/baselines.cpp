#include "dd/baselines.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace dd {

void MarginalTable::validate() const {
    if (rows.size() != seq_len) throw DomainError("marginal table: row count mismatch");
    for (const auto& row : rows) {
        if (row.size() != vocab) throw DomainError("marginal table: row width mismatch");
        double sum = 0.0;
        for (double p : row) {
            if (!(p >= 0.0)) throw DomainError("marginal table: negative entry");
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9)
            throw DomainError("marginal table: row sums to " + std::to_string(sum));
    }
}

MarginalTable fit_onestep_star(const std::vector<TokenSeq>& dataset, std::uint32_t vocab) {
    if (dataset.empty()) throw DomainError("fit_onestep_star: empty dataset");
    const std::uint32_t n = dataset.front().size();
    MarginalTable table;
    table.seq_len = n;
    table.vocab = vocab;
    table.rows.assign(n, std::vector<double>(vocab, 0.0));
    for (const TokenSeq& seq : dataset) {
        if (seq.size() != n) throw DomainError("fit_onestep_star: sequences must share n");
        for (std::uint32_t j = 0; j < n; ++j) {
            std::uint32_t id = seq.ids[j];
            if (id < 1 || id > vocab) throw DomainError("fit_onestep_star: id out of range");
            table.rows[j][id - 1] += 1.0;
        }
    }
    for (auto& row : table.rows)
        for (double& p : row) p /= static_cast<double>(dataset.size());
    return table;
}

TokenSeq sample_onestep_star(const MarginalTable& table, Rng& rng) {
    TokenSeq seq;
    seq.ids.reserve(table.seq_len);
    for (std::uint32_t j = 0; j < table.seq_len; ++j)
        seq.ids.push_back(rng.next_categorical(table.rows[j]));
    return seq;
}

double onestep_objective(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                         const MarginalTable& table) {
    if (dataset.empty()) throw DomainError("onestep_objective: empty dataset");
    MarginalTable freq = fit_onestep_star(dataset, vocab);
    if (table.seq_len != freq.seq_len || table.vocab != vocab)
        throw DomainError("onestep_objective: table shape mismatch");
    double objective = 0.0;
    for (std::uint32_t j = 0; j < freq.seq_len; ++j) {
        for (std::uint32_t k = 0; k < vocab; ++k) {
            double f = freq.rows[j][k];
            if (f == 0.0) continue;  // 0 * log(.) contributes nothing
            objective += f * std::log(table.rows[j][k]);
        }
    }
    return objective / static_cast<double>(freq.seq_len);
}

Prop1Report verify_prop1(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                         std::uint32_t trials, Rng& rng) {
    MarginalTable freq = fit_onestep_star(dataset, vocab);
    Prop1Report report;
    report.trials = trials;
    report.objective_at_frequency = onestep_objective(dataset, vocab, freq);
    report.best_alternative = -std::numeric_limits<double>::infinity();
    for (std::uint32_t trial = 0; trial < trials; ++trial) {
        MarginalTable alt = freq;
        for (auto& row : alt.rows) {
            double sum = 0.0;
            for (double& p : row) {
                p = std::max(0.0, p + rng.next_uniform(-0.5, 0.5));
                sum += p;
            }
            if (sum <= 0.0) {
                // Degenerate perturbation; fall back to uniform.
                std::fill(row.begin(), row.end(), 1.0 / vocab);
            } else {
                for (double& p : row) p /= sum;
            }
        }
        double objective = onestep_objective(dataset, vocab, alt);
        report.best_alternative = std::max(report.best_alternative, objective);
    }
    report.frequency_is_max =
        report.objective_at_frequency >= report.best_alternative - 1e-12;
    return report;
}

TokenSeq skip_n_sample(const Teacher& teacher, const MarginalTable& marginals,
                       std::uint32_t n_skip, std::optional<std::uint32_t> condition,
                       Rng& rng) {
    const std::uint32_t n = teacher.seq_len();
    if (n_skip >= n)
        throw DomainError("skip_n_sample: n_skip=" + std::to_string(n_skip) +
                          " must be < n = " + std::to_string(n));
    if (marginals.seq_len != n || marginals.vocab != teacher.vocab())
        throw DomainError("skip_n_sample: marginal table shape mismatch");
    TokenSeq seq;
    seq.condition = condition;
    for (std::uint32_t j = 0; j < n - n_skip; ++j) {
        NextTokenDist dist = teacher.next_dist(seq);
        seq.ids.push_back(rng.next_categorical(dist.probs));
    }
    for (std::uint32_t j = n - n_skip; j < n; ++j)
        seq.ids.push_back(rng.next_categorical(marginals.rows[j]));
    return seq;
}

}  // namespace dd
