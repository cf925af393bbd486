#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <vector>

#include "dd/teacher.hpp"
#include "dd/transformer.hpp"

namespace dd {

// A small causal next-token transformer. Input slots are the class token
// followed by up to n-1 data tokens; the output at slot k predicts token
// k+1, so the positional table has n entries.
struct TeacherNet {
    std::uint32_t seq_len = 0;      // n
    std::uint32_t vocab = 0;        // V
    std::uint32_t num_classes = 1;  // class ids 0..num_classes-1; one extra null row
    TransformerConfig cfg;

    nn::Param class_emb;  // (num_classes + 1, width); last row is the null class
    nn::Param tok_emb;    // (vocab, width)
    nn::Param pos_emb;    // (n, width)
    Backbone backbone;
    nn::Param head_w;  // (width, vocab)
    nn::Param head_b;  // (vocab)

    void init(std::uint32_t n, std::uint32_t v, std::uint32_t classes,
              const TransformerConfig& config, std::uint64_t seed);

    // Logits for every slot of [class, ids...]; (len(ids)+1, vocab).
    nn::Graph::NodeId forward(nn::Graph& g, std::uint32_t class_id,
                              std::span<const std::uint32_t> ids, const ParamBind& bind) const;

    std::vector<nn::Param*> params();
    std::vector<const nn::Param*> params() const;
};

// Teacher backed by TeacherNet. Optional classifier-free guidance mixes
// conditional and null-class logits; guided distributions no longer come
// from a normalized sequence joint, so exact-evaluation flows should keep
// this off (the default).
class NeuralTeacher : public Teacher {
public:
    explicit NeuralTeacher(TeacherNet net);

    std::uint32_t seq_len() const override { return net_.seq_len; }
    std::uint32_t vocab() const override { return net_.vocab; }
    TeacherKind kind() const override { return TeacherKind::neural; }
    std::uint32_t num_classes() const { return net_.num_classes; }

    NextTokenDist next_dist(const TokenSeq& prefix) const override;
    void save(std::ostream& os) const override;

    void set_guidance(double scale, bool enabled) {
        guidance_scale_ = scale;
        guidance_enabled_ = enabled;
    }
    bool guidance_enabled() const { return guidance_enabled_; }

    const TeacherNet& net() const { return net_; }
    TeacherNet& net() { return net_; }

    static NeuralTeacher load_payload(std::istream& is);

private:
    std::vector<double> next_logits(std::uint32_t class_id,
                                    std::span<const std::uint32_t> ids) const;

    TeacherNet net_;
    double guidance_scale_ = 2.0;
    bool guidance_enabled_ = false;
};

struct TeacherTrainConfig {
    TransformerConfig arch;
    std::uint32_t num_classes = 1;
    std::uint32_t epochs = 20;
    std::uint32_t batch = 64;
    double lr = 1e-3;
    bool lr_scaled_by_batch = false;  // when set, lr_effective = lr * batch / 256
    double weight_decay = 0.0;
    double holdout_fraction = 0.1;
    std::uint64_t seed = 1;
};

struct TeacherTrainLog {
    std::vector<double> train_loss;  // per epoch
    std::vector<double> holdout_ce;  // per epoch
};

// Standard next-token cross-entropy training. Throws NumericError with
// epoch/step diagnostics if the loss goes non-finite. Sequences without a
// condition train as class 0.
NeuralTeacher train_neural_teacher(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                                   const TeacherTrainConfig& cfg,
                                   TeacherTrainLog* log = nullptr);

}  // namespace dd
