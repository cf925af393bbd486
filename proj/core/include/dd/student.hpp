#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <ostream>
#include <vector>

#include "dd/codebook.hpp"
#include "dd/neural_teacher.hpp"
#include "dd/trajgen.hpp"
#include "dd/transformer.hpp"

namespace dd {

// Trajectory positions the student is trained to jump from, with a
// positive weight per position. Strictly increasing, all in [1, n], and
// the first entry must be 1 so one-step generation stays trainable.
struct TimestepSchedule {
    std::vector<std::uint32_t> steps;
    std::vector<double> weights;  // one per step; empty means all 1

    void validate(std::uint32_t n) const;
    double weight_of(std::uint32_t t) const;
    bool contains(std::uint32_t t) const;
    std::uint32_t count() const { return static_cast<std::uint32_t>(steps.size()); }
};

struct StudentConfig {
    TransformerConfig arch;
    // Jumps from t < split_point decode with the logits head, later jumps
    // with the embedding head. 0 derives ceil((t_1 + t_L + 1) / 2).
    std::uint32_t split_point = 0;
    double loss_w_embed = 1.0;
    double loss_w_logits = 0.1;
    // Init scale for the modules that have no teacher counterpart (token
    // type embeddings, extra positional slot).
    double new_module_std = 0.1;
};

enum class LogitDecode { argmax, sample };

struct StudentOutput {
    nn::Tensor logits;  // (n, V)
    nn::Tensor embeds;  // (n, C)
};

struct DistillLossParts {
    double total = 0.0;
    double embed = 0.0;   // mean squared error, embedding head
    double logits = 0.0;  // cross entropy, logits head
};

// The few-step generator. Input slots are [class, x_1 .. x_n] where x_j
// is either a data token (embedded through the token table) or a noise
// vector (projected from dimension C); token-type embeddings tell the
// two apart. The prediction for position j is read at slot j, which can
// see the class token, all earlier positions, and its own noise.
class StudentModel {
public:
    StudentModel() = default;

    // Fresh backbone; used when the teacher has no weights to inherit.
    static StudentModel fresh(std::uint32_t n, std::uint32_t vocab, std::uint32_t dim,
                              std::uint32_t num_classes, TimestepSchedule schedule,
                              const StudentConfig& cfg, std::uint64_t seed);

    // Backbone, token/class/positional embeddings, and logits head start
    // from the teacher; the extra positional slot, type embeddings,
    // noise projection, and embedding head are new.
    static StudentModel distilled_from(const NeuralTeacher& teacher, std::uint32_t dim,
                                       TimestepSchedule schedule, const StudentConfig& cfg,
                                       std::uint64_t seed);

    std::uint32_t seq_len() const { return n_; }
    std::uint32_t vocab() const { return vocab_; }
    std::uint32_t dim() const { return dim_; }
    std::uint32_t num_classes() const { return num_classes_; }
    std::uint32_t split_point() const { return split_point_; }
    const TimestepSchedule& schedule() const { return schedule_; }
    const StudentConfig& config() const { return cfg_; }

    // One forward pass over the trajectory point; both heads for all n
    // positions.
    StudentOutput f_theta(const TrajectoryPoint& xt,
                          std::optional<std::uint32_t> condition) const;

    // AR-style next-token readout: the logits head applied at the last
    // data slot (slot t-1), i.e. the position a next-token teacher
    // predicts from. With an inherited backbone and zero training steps
    // this reproduces the teacher's prediction of token t.
    std::vector<double> ar_next_logits(const TrajectoryPoint& xt,
                                       std::optional<std::uint32_t> condition) const;

    // Copies positions < t from the data prefix verbatim and decodes
    // positions >= t from the head selected by the split point. rng is
    // consulted only for LogitDecode::sample.
    TokenSeq predict_final(const TrajectoryPoint& xt, const Codebook& cb,
                           std::optional<std::uint32_t> condition,
                           LogitDecode decode = LogitDecode::argmax,
                           Rng* rng = nullptr) const;

    // Supervised loss at trajectory position t for one stored pair;
    // accumulates gradients into the parameters.
    DistillLossParts distill_loss(const PairRecord& pair, const Codebook& cb, std::uint32_t t);

    std::vector<nn::Param*> params();

    void save(std::ostream& os) const;
    void save_file(const std::filesystem::path& path) const;
    static StudentModel load(std::istream& is);
    static StudentModel load_file(const std::filesystem::path& path);

    // Exposed for the training loop.
    nn::Param& noise_proj() { return noise_proj_; }
    const nn::Param& logits_head_w() const { return logits_w_; }

    struct BatchItem {
        const PairRecord* pair;
        std::uint32_t t;
    };
    // One graph over the whole batch (block-diagonal attention);
    // accumulates mean gradients and returns the mean weighted loss.
    DistillLossParts batch_loss(const std::vector<BatchItem>& items, const Codebook& cb,
                                bool accumulate_grads);

private:
    struct ForwardNodes {
        nn::Graph::NodeId logits;
        nn::Graph::NodeId embeds;
    };
    // Builds input rows for samples and runs the backbone; used by both
    // inference and training paths.
    ForwardNodes forward_graph(nn::Graph& g, const std::vector<const TrajectoryPoint*>& points,
                               const std::vector<std::uint32_t>& class_ids,
                               const ParamBind& bind) const;

    void init_common(std::uint32_t n, std::uint32_t vocab, std::uint32_t dim,
                     std::uint32_t num_classes, TimestepSchedule schedule,
                     const StudentConfig& cfg);

    std::uint32_t n_ = 0, vocab_ = 0, dim_ = 0, num_classes_ = 1;
    std::uint32_t split_point_ = 0;
    TimestepSchedule schedule_;
    StudentConfig cfg_;

    nn::Param class_emb_;   // (num_classes + 1, width)
    nn::Param tok_emb_;     // (vocab, width)
    nn::Param noise_proj_;  // (dim, width)
    nn::Param type_data_;   // (width)
    nn::Param type_noise_;  // (width)
    nn::Param pos_emb_;     // (n + 1, width): one more slot than the teacher
    Backbone backbone_;
    nn::Param logits_w_, logits_b_;  // (width, vocab), (vocab)
    nn::Param embed_w_, embed_b_;    // (width, dim), (dim)
};

struct StudentTrainConfig {
    std::uint32_t epochs = 20;
    std::uint32_t batch = 64;
    double lr = 1e-3;
    bool lr_scaled_by_batch = false;  // lr_effective = lr * batch / 256
    double weight_decay = 0.0;
    double ema_decay = 0.9999;
    std::uint64_t seed = 1;
    std::ostream* log = nullptr;  // line-delimited event records
};

// Distillation: sample a pair and a schedule position, build the
// trajectory point, regress both heads on the final data, update with
// AdamW, track EMA. Returns the model with EMA weights swapped in.
// Throws FingerprintError if the store was generated by a different
// teacher than `teacher`.
StudentModel train_student(const PairStore& store, const Codebook& cb, const Teacher& teacher,
                           TimestepSchedule schedule, const StudentConfig& model_cfg,
                           const StudentTrainConfig& cfg);

}  // namespace dd
