#pragma once

#include <cstdint>
#include <filesystem>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "dd/rng.hpp"
#include "dd/sequence.hpp"
#include "dd/teacher_dist.hpp"

namespace dd {

enum class TeacherKind : std::uint32_t { tabular = 1, neural = 2 };

// Next-token model over length-n sequences of tokens in [1, V].
// Implementations are read-only after construction; concurrent queries
// are allowed. The optional condition rides on the query prefix.
class Teacher {
public:
    virtual ~Teacher() = default;

    virtual std::uint32_t seq_len() const = 0;  // n
    virtual std::uint32_t vocab() const = 0;    // V
    virtual TeacherKind kind() const = 0;

    // Distribution of token len(prefix)+1 given the prefix. The prefix
    // must be shorter than n.
    virtual NextTokenDist next_dist(const TokenSeq& prefix) const = 0;

    // Serializes into the "DDTC" checkpoint container.
    virtual void save(std::ostream& os) const = 0;
    void save_file(const std::filesystem::path& path) const;

    // FNV-1a over the serialized checkpoint bytes; identifies the teacher
    // in artifacts derived from it.
    std::uint64_t fingerprint() const;
};

std::unique_ptr<Teacher> load_teacher(std::istream& is);
std::unique_ptr<Teacher> load_teacher_file(const std::filesystem::path& path);

// Samples a full sequence token by token; consumes exactly n categorical
// draws from rng.
TokenSeq ar_sample(const Teacher& teacher, std::optional<std::uint32_t> condition, Rng& rng);

// Exact desk-scale teacher: empirical prefix-conditional frequencies with
// additive smoothing alpha. With alpha = 0 it reproduces the dataset's
// conditionals exactly, which makes the sequence joint enumerable.
class TabularTeacher : public Teacher {
public:
    TabularTeacher(std::uint32_t seq_len, std::uint32_t vocab, double alpha);

    std::uint32_t seq_len() const override { return seq_len_; }
    std::uint32_t vocab() const override { return vocab_; }
    TeacherKind kind() const override { return TeacherKind::tabular; }
    double alpha() const { return alpha_; }

    NextTokenDist next_dist(const TokenSeq& prefix) const override;
    void save(std::ostream& os) const override;

    // Adds `weight` observations of `next_id` after `prefix_ids` under
    // `condition`. Used by fit_tabular and by hand-designed teachers.
    void add_count(std::optional<std::uint32_t> condition,
                   std::span<const std::uint32_t> prefix_ids, std::uint32_t next_id,
                   double weight = 1.0);

    static TabularTeacher load_payload(std::istream& is);

private:
    std::uint32_t seq_len_;
    std::uint32_t vocab_;
    double alpha_;
    // Key: condition sentinel (4 bytes LE, 0xFFFFFFFF = none) followed by
    // prefix ids (4 bytes LE each). std::map keeps serialization stable.
    std::map<std::string, std::vector<double>> counts_;

    static std::string make_key(std::optional<std::uint32_t> condition,
                                std::span<const std::uint32_t> prefix_ids);
};

// Fits the empirical teacher from sequences that all share n and use ids
// in [1, vocab]. Throws on an empty dataset.
TabularTeacher fit_tabular(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                           double alpha);

}  // namespace dd
