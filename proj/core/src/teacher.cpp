#include "dd/teacher.hpp"

#include <fstream>
#include <sstream>

#include "dd/io.hpp"
#include "dd/neural_teacher.hpp"

namespace dd {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
constexpr std::uint32_t kNoCondition = 0xFFFFFFFFu;
}  // namespace

void Teacher::save_file(const std::filesystem::path& path) const {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot open for writing: " + path.string());
    save(os);
}

std::uint64_t Teacher::fingerprint() const {
    std::ostringstream os(std::ios::binary);
    save(os);
    return fnv1a64(os.str());
}

std::unique_ptr<Teacher> load_teacher(std::istream& is) {
    ByteReader r(is);
    r.expect_magic("DDTC", "checkpoint");
    std::uint32_t version = r.u32();
    if (version != kCheckpointVersion)
        throw IoError("checkpoint: unsupported version " + std::to_string(version));
    std::uint32_t kind = r.u32();
    switch (static_cast<TeacherKind>(kind)) {
        case TeacherKind::tabular:
            return std::make_unique<TabularTeacher>(TabularTeacher::load_payload(is));
        case TeacherKind::neural:
            return std::make_unique<NeuralTeacher>(NeuralTeacher::load_payload(is));
        default:
            throw IoError("checkpoint: not a teacher (kind tag " + std::to_string(kind) + ")");
    }
}

std::unique_ptr<Teacher> load_teacher_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint: " + path.string());
    return load_teacher(is);
}

TokenSeq ar_sample(const Teacher& teacher, std::optional<std::uint32_t> condition, Rng& rng) {
    TokenSeq seq;
    seq.condition = condition;
    seq.ids.reserve(teacher.seq_len());
    for (std::uint32_t i = 0; i < teacher.seq_len(); ++i) {
        NextTokenDist dist = teacher.next_dist(seq);
        seq.ids.push_back(rng.next_categorical(dist.probs));
    }
    return seq;
}

TabularTeacher::TabularTeacher(std::uint32_t seq_len, std::uint32_t vocab, double alpha)
    : seq_len_(seq_len), vocab_(vocab), alpha_(alpha) {
    if (seq_len_ == 0) throw DomainError("tabular teacher: seq_len must be >= 1");
    if (vocab_ == 0) throw DomainError("tabular teacher: vocab must be >= 1");
    if (alpha_ < 0.0) throw DomainError("tabular teacher: alpha must be >= 0");
}

std::string TabularTeacher::make_key(std::optional<std::uint32_t> condition,
                                     std::span<const std::uint32_t> prefix_ids) {
    std::string key;
    key.reserve(4 + 4 * prefix_ids.size());
    std::uint32_t cond = condition.value_or(kNoCondition);
    for (int b = 0; b < 4; ++b) key.push_back(static_cast<char>((cond >> (8 * b)) & 0xFF));
    for (std::uint32_t id : prefix_ids)
        for (int b = 0; b < 4; ++b) key.push_back(static_cast<char>((id >> (8 * b)) & 0xFF));
    return key;
}

void TabularTeacher::add_count(std::optional<std::uint32_t> condition,
                               std::span<const std::uint32_t> prefix_ids,
                               std::uint32_t next_id, double weight) {
    if (prefix_ids.size() >= seq_len_)
        throw DomainError("tabular teacher: prefix length " +
                          std::to_string(prefix_ids.size()) + " must be < n = " +
                          std::to_string(seq_len_));
    for (std::uint32_t id : prefix_ids)
        if (id < 1 || id > vocab_) throw DomainError("tabular teacher: prefix id out of range");
    if (next_id < 1 || next_id > vocab_)
        throw DomainError("tabular teacher: next id out of range");
    if (weight < 0.0) throw DomainError("tabular teacher: negative count weight");
    auto& vec = counts_[make_key(condition, prefix_ids)];
    if (vec.empty()) vec.assign(vocab_, 0.0);
    vec[next_id - 1] += weight;
}

NextTokenDist TabularTeacher::next_dist(const TokenSeq& prefix) const {
    if (prefix.size() >= seq_len_)
        throw DomainError("next_dist: prefix length " + std::to_string(prefix.size()) +
                          " must be < n = " + std::to_string(seq_len_));
    auto it = counts_.find(make_key(prefix.condition, prefix.ids));
    NextTokenDist dist;
    dist.probs.assign(vocab_, 0.0);
    double total = 0.0;
    if (it != counts_.end())
        for (std::uint32_t j = 0; j < vocab_; ++j) total += it->second[j];
    double denom = total + alpha_ * vocab_;
    if (denom <= 0.0) {
        // Unseen prefix with alpha = 0: off the support, fall back to
        // uniform so the result is still a valid distribution.
        dist.probs.assign(vocab_, 1.0 / vocab_);
        return dist;
    }
    for (std::uint32_t j = 0; j < vocab_; ++j) {
        double c = it != counts_.end() ? it->second[j] : 0.0;
        dist.probs[j] = (c + alpha_) / denom;
    }
    return dist;
}

void TabularTeacher::save(std::ostream& os) const {
    ByteWriter w(os);
    w.magic("DDTC");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(TeacherKind::tabular));
    w.u32(seq_len_);
    w.u32(vocab_);
    w.f64(alpha_);
    w.u64(counts_.size());
    for (const auto& [key, counts] : counts_) {
        w.str(key);
        for (double c : counts) w.f64(c);
    }
}

TabularTeacher TabularTeacher::load_payload(std::istream& is) {
    ByteReader r(is);
    std::uint32_t n = r.u32();
    std::uint32_t vocab = r.u32();
    double alpha = r.f64();
    TabularTeacher teacher(n, vocab, alpha);
    std::uint64_t entries = r.u64();
    for (std::uint64_t e = 0; e < entries; ++e) {
        std::string key = r.str();
        std::vector<double> counts(vocab);
        for (double& c : counts) c = r.f64();
        teacher.counts_[key] = std::move(counts);
    }
    return teacher;
}

TabularTeacher fit_tabular(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                           double alpha) {
    if (dataset.empty()) throw DomainError("fit_tabular: empty dataset");
    std::uint32_t n = dataset.front().size();
    if (n == 0) throw DomainError("fit_tabular: zero-length sequences");
    TabularTeacher teacher(n, vocab, alpha);
    for (const TokenSeq& seq : dataset) {
        if (seq.size() != n) throw DomainError("fit_tabular: sequences must share n");
        for (std::uint32_t t = 0; t < n; ++t)
            teacher.add_count(seq.condition,
                              std::span<const std::uint32_t>(seq.ids.data(), t), seq.ids[t]);
    }
    return teacher;
}

}  // namespace dd
