#include "dd/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

namespace dd {

JointDist::JointDist(std::uint32_t seq_len, std::uint32_t vocab)
    : n_(seq_len), vocab_(vocab) {
    if (n_ == 0 || vocab_ == 0) throw DomainError("joint: bad dimensions");
    double outcomes = std::pow(static_cast<double>(vocab_), static_cast<double>(n_));
    dense_ = outcomes <= static_cast<double>(kDenseLimit);
    if (dense_) dense_p_.assign(static_cast<std::size_t>(outcomes), 0.0);
}

std::uint64_t JointDist::outcome_count() const {
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < n_; ++i) count *= vocab_;
    return count;
}

std::uint64_t JointDist::encode(const std::vector<std::uint32_t>& ids) const {
    if (ids.size() != n_) throw DomainError("joint: sequence length mismatch");
    std::uint64_t index = 0;
    for (std::uint32_t id : ids) {
        if (id < 1 || id > vocab_) throw DomainError("joint: id out of range");
        index = index * vocab_ + (id - 1);
    }
    return index;
}

std::vector<std::uint32_t> JointDist::decode(std::uint64_t index) const {
    std::vector<std::uint32_t> ids(n_);
    for (std::uint32_t i = n_; i-- > 0;) {
        ids[i] = static_cast<std::uint32_t>(index % vocab_) + 1;
        index /= vocab_;
    }
    return ids;
}

std::string JointDist::key_of(const std::vector<std::uint32_t>& ids) {
    std::string key;
    key.reserve(ids.size() * 4);
    for (std::uint32_t id : ids)
        for (int b = 0; b < 4; ++b) key.push_back(static_cast<char>((id >> (8 * b)) & 0xFF));
    return key;
}

void JointDist::add(const std::vector<std::uint32_t>& ids, double mass) {
    if (dense_) {
        dense_p_[encode(ids)] += mass;
    } else {
        if (ids.size() != n_) throw DomainError("joint: sequence length mismatch");
        sparse_p_[key_of(ids)] += mass;
    }
}

double JointDist::prob(const std::vector<std::uint32_t>& ids) const {
    if (dense_) return dense_p_[encode(ids)];
    auto it = sparse_p_.find(key_of(ids));
    return it == sparse_p_.end() ? 0.0 : it->second;
}

double JointDist::total_mass() const {
    double sum = 0.0;
    if (dense_)
        for (double p : dense_p_) sum += p;
    else
        for (const auto& [key, p] : sparse_p_) sum += p;
    return sum;
}

void JointDist::normalize() {
    double sum = total_mass();
    if (sum <= 0.0) throw DomainError("joint: cannot normalize zero mass");
    if (dense_)
        for (double& p : dense_p_) p /= sum;
    else
        for (auto& [key, p] : sparse_p_) p /= sum;
}

void JointDist::for_each(
    const std::function<void(const std::vector<std::uint32_t>&, double)>& fn) const {
    if (dense_) {
        for (std::uint64_t index = 0; index < dense_p_.size(); ++index)
            fn(decode(index), dense_p_[index]);
    } else {
        for (const auto& [key, p] : sparse_p_) {
            std::vector<std::uint32_t> ids(n_);
            for (std::uint32_t i = 0; i < n_; ++i) {
                std::uint32_t id = 0;
                for (int b = 0; b < 4; ++b)
                    id |= static_cast<std::uint32_t>(
                              static_cast<unsigned char>(key[i * 4 + b]))
                          << (8 * b);
                ids[i] = id;
            }
            fn(ids, p);
        }
    }
}

std::vector<std::vector<double>> JointDist::position_marginals() const {
    std::vector<std::vector<double>> marginals(n_, std::vector<double>(vocab_, 0.0));
    for_each([&](const std::vector<std::uint32_t>& ids, double p) {
        if (p == 0.0) return;
        for (std::uint32_t i = 0; i < n_; ++i) marginals[i][ids[i] - 1] += p;
    });
    return marginals;
}

JointDist exact_joint(const Teacher& teacher, std::optional<std::uint32_t> condition) {
    const std::uint32_t n = teacher.seq_len();
    const std::uint32_t vocab = teacher.vocab();
    double outcomes = std::pow(static_cast<double>(vocab), static_cast<double>(n));
    if (outcomes > static_cast<double>(JointDist::kDenseLimit))
        throw DomainError("exact_joint: V^n exceeds the enumeration guard");
    JointDist joint(n, vocab);
    TokenSeq prefix;
    prefix.condition = condition;
    std::function<void(double)> walk = [&](double mass) {
        if (prefix.size() == n) {
            joint.add(prefix.ids, mass);
            return;
        }
        NextTokenDist dist = teacher.next_dist(prefix);
        for (std::uint32_t id = 1; id <= vocab; ++id) {
            double p = dist.probs[id - 1];
            if (p == 0.0) continue;
            prefix.ids.push_back(id);
            walk(mass * p);
            prefix.ids.pop_back();
        }
    };
    walk(1.0);
    return joint;
}

JointDist empirical_joint(const std::function<TokenSeq()>& sampler, std::uint64_t samples,
                          std::uint32_t vocab) {
    if (samples == 0) throw DomainError("empirical_joint: need at least one sample");
    TokenSeq first = sampler();
    const std::uint32_t n = first.size();
    if (vocab == 0) {
        // Infer from the draws; collect first so the storage layout can
        // be sized up front.
        std::vector<TokenSeq> draws;
        draws.reserve(samples);
        draws.push_back(std::move(first));
        for (std::uint64_t i = 1; i < samples; ++i) draws.push_back(sampler());
        for (const TokenSeq& seq : draws)
            for (std::uint32_t id : seq.ids) vocab = std::max(vocab, id);
        JointDist joint(n, vocab);
        const double mass = 1.0 / static_cast<double>(samples);
        for (const TokenSeq& seq : draws) joint.add(seq.ids, mass);
        return joint;
    }
    JointDist joint(n, vocab);
    const double mass = 1.0 / static_cast<double>(samples);
    joint.add(first.ids, mass);
    for (std::uint64_t i = 1; i < samples; ++i) joint.add(sampler().ids, mass);
    return joint;
}

double tv_confidence_halfwidth(std::uint32_t seq_len, std::uint32_t vocab,
                               std::uint64_t samples) {
    double outcomes = std::pow(static_cast<double>(vocab), static_cast<double>(seq_len));
    return 0.5 * std::sqrt(outcomes / static_cast<double>(samples));
}

namespace {

void check_same_space(const JointDist& a, const JointDist& b, const char* what) {
    if (a.seq_len() != b.seq_len())
        throw DomainError(std::string(what) + ": sequence length mismatch");
}

}  // namespace

double tv_distance(const JointDist& a, const JointDist& b) {
    check_same_space(a, b, "tv_distance");
    if (a.dense() && b.dense() && a.vocab() == b.vocab()) {
        double acc = 0.0;
        a.for_each([&](const std::vector<std::uint32_t>& ids, double pa) {
            acc += std::abs(pa - b.prob(ids));
        });
        return 0.5 * acc;
    }
    // General path: signed masses over the union of supports.
    std::unordered_map<std::string, double> diff;
    auto key_of = [](const std::vector<std::uint32_t>& ids) {
        std::string key;
        key.reserve(ids.size() * 4);
        for (std::uint32_t id : ids)
            for (int byte = 0; byte < 4; ++byte)
                key.push_back(static_cast<char>((id >> (8 * byte)) & 0xFF));
        return key;
    };
    a.for_each([&](const std::vector<std::uint32_t>& ids, double pa) {
        if (pa != 0.0) diff[key_of(ids)] += pa;
    });
    b.for_each([&](const std::vector<std::uint32_t>& ids, double pb) {
        if (pb != 0.0) diff[key_of(ids)] -= pb;
    });
    double acc = 0.0;
    for (const auto& [key, d] : diff) acc += std::abs(d);
    return 0.5 * acc;
}

double mean_marginal_tv(const JointDist& a, const JointDist& b) {
    check_same_space(a, b, "mean_marginal_tv");
    auto ma = a.position_marginals();
    auto mb = b.position_marginals();
    const std::uint32_t vocab = std::max(a.vocab(), b.vocab());
    double acc = 0.0;
    for (std::uint32_t i = 0; i < a.seq_len(); ++i) {
        double tv = 0.0;
        for (std::uint32_t k = 0; k < vocab; ++k) {
            double pa = k < ma[i].size() ? ma[i][k] : 0.0;
            double pb = k < mb[i].size() ? mb[i][k] : 0.0;
            tv += std::abs(pa - pb);
        }
        acc += 0.5 * tv;
    }
    return acc / a.seq_len();
}

double mean_pairwise_mutual_information(const JointDist& dist) {
    const std::uint32_t n = dist.seq_len();
    if (n < 2) return 0.0;
    const std::uint32_t vocab = dist.vocab();
    auto marginals = dist.position_marginals();
    double acc = 0.0;
    std::uint32_t pairs = 0;
    for (std::uint32_t i = 0; i < n; ++i) {
        for (std::uint32_t j = i + 1; j < n; ++j) {
            std::vector<double> pair_p(static_cast<std::size_t>(vocab) * vocab, 0.0);
            dist.for_each([&](const std::vector<std::uint32_t>& ids, double p) {
                if (p == 0.0) return;
                pair_p[static_cast<std::size_t>(ids[i] - 1) * vocab + (ids[j] - 1)] += p;
            });
            double mi = 0.0;
            for (std::uint32_t a = 0; a < vocab; ++a) {
                for (std::uint32_t b = 0; b < vocab; ++b) {
                    double pab = pair_p[static_cast<std::size_t>(a) * vocab + b];
                    if (pab <= 0.0) continue;
                    double pa = marginals[i][a];
                    double pb = marginals[j][b];
                    mi += pab * std::log(pab / (pa * pb));
                }
            }
            acc += mi;
            ++pairs;
        }
    }
    return acc / pairs;
}

MarginalTable marginal_table_from_joint(const JointDist& dist) {
    MarginalTable table;
    table.seq_len = dist.seq_len();
    table.vocab = dist.vocab();
    table.rows = dist.position_marginals();
    table.validate();
    return table;
}

JointDist skip_n_exact_joint(const Teacher& teacher, const MarginalTable& marginals,
                             std::uint32_t n_skip, std::optional<std::uint32_t> condition) {
    const std::uint32_t n = teacher.seq_len();
    if (n_skip >= n) throw DomainError("skip_n_exact_joint: n_skip must be < n");
    if (marginals.seq_len != n || marginals.vocab != teacher.vocab())
        throw DomainError("skip_n_exact_joint: marginal table shape mismatch");
    JointDist joint(n, teacher.vocab());
    TokenSeq prefix;
    prefix.condition = condition;
    std::function<void(double)> walk = [&](double mass) {
        if (prefix.size() == n) {
            joint.add(prefix.ids, mass);
            return;
        }
        std::uint32_t pos = prefix.size();  // 0-based position being filled
        std::vector<double> probs;
        if (pos < n - n_skip) {
            probs = teacher.next_dist(prefix).probs;
        } else {
            probs = marginals.rows[pos];
        }
        for (std::uint32_t id = 1; id <= teacher.vocab(); ++id) {
            double p = probs[id - 1];
            if (p == 0.0) continue;
            prefix.ids.push_back(id);
            walk(mass * p);
            prefix.ids.pop_back();
        }
    };
    walk(1.0);
    return joint;
}

void EvalReport::write_kv(std::ostream& os) const {
    os << "n=" << seq_len << "\n";
    os << "vocab=" << vocab << "\n";
    os << "samples=" << samples << "\n";
    os << "confidence_halfwidth=" << confidence_halfwidth << "\n";
    os << "reference_mi=" << reference_mi << "\n";
    for (const SystemResult& sys : systems) {
        os << "system=" << sys.name << " steps=" << sys.steps_per_sample
           << " tv_joint=" << sys.tv_joint << " tv_marginal_mean=" << sys.tv_marginal_mean
           << " mi_gap=" << sys.mi_gap << " wall_ms=" << sys.wall_ms
           << " samples=" << sys.samples << " speedup=" << sys.speedup << "\n";
    }
}

const char* EvalReport::csv_header() {
    return "system,steps,tv_joint,tv_marginal_mean,wall_ms,samples";
}

void EvalReport::write_csv(std::ostream& os) const {
    os << csv_header() << "\n";
    for (const SystemResult& sys : systems) {
        os << sys.name << "," << sys.steps_per_sample << "," << sys.tv_joint << ","
           << sys.tv_marginal_mean << "," << sys.wall_ms << "," << sys.samples << "\n";
    }
}

EvalReport evaluate_systems(const Teacher& teacher, std::optional<std::uint32_t> condition,
                            const std::vector<SystemUnderTest>& systems,
                            std::uint64_t samples) {
    JointDist reference = exact_joint(teacher, condition);
    EvalReport report;
    report.seq_len = teacher.seq_len();
    report.vocab = teacher.vocab();
    report.samples = samples;
    report.confidence_halfwidth =
        tv_confidence_halfwidth(teacher.seq_len(), teacher.vocab(), samples);
    report.reference_mi = mean_pairwise_mutual_information(reference);

    for (const SystemUnderTest& sut : systems) {
        auto begin = std::chrono::steady_clock::now();
        JointDist estimate = empirical_joint(sut.draw, samples, teacher.vocab());
        auto end = std::chrono::steady_clock::now();

        SystemResult result;
        result.name = sut.name;
        result.steps_per_sample = sut.steps_per_sample;
        result.samples = samples;
        result.tv_joint = tv_distance(reference, estimate);
        result.tv_marginal_mean = mean_marginal_tv(reference, estimate);
        result.mi_gap =
            report.reference_mi - mean_pairwise_mutual_information(estimate);
        result.wall_ms =
            std::chrono::duration_cast<std::chrono::microseconds>(end - begin).count() /
            1000.0;
        result.speedup = sut.steps_per_sample == 0
                             ? 0.0
                             : static_cast<double>(teacher.seq_len()) /
                                   static_cast<double>(sut.steps_per_sample);
        report.systems.push_back(std::move(result));
    }
    return report;
}

}  // namespace dd
