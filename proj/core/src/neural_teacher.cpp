#include "dd/neural_teacher.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "dd/io.hpp"

namespace dd {

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
}

void TeacherNet::init(std::uint32_t n, std::uint32_t v, std::uint32_t classes,
                      const TransformerConfig& config, std::uint64_t seed) {
    seq_len = n;
    vocab = v;
    num_classes = classes;
    cfg = config;
    Rng rng(seed);
    const std::int64_t w = cfg.width;
    class_emb = nn::Param("class_emb",
                          nn::Tensor::randn({static_cast<std::int64_t>(classes) + 1, w}, rng,
                                            cfg.init_std));
    tok_emb = nn::Param("tok_emb",
                        nn::Tensor::randn({static_cast<std::int64_t>(v), w}, rng, cfg.init_std));
    pos_emb = nn::Param("pos_emb",
                        nn::Tensor::randn({static_cast<std::int64_t>(n), w}, rng, cfg.init_std));
    backbone.init(cfg, rng);
    head_w =
        nn::Param("head_w", nn::Tensor::randn({w, static_cast<std::int64_t>(v)}, rng,
                                              cfg.init_std));
    head_b = nn::Param("head_b", nn::Tensor::zeros({static_cast<std::int64_t>(v)}));
}

nn::Graph::NodeId TeacherNet::forward(nn::Graph& g, std::uint32_t class_id,
                                      std::span<const std::uint32_t> ids,
                                      const ParamBind& bind) const {
    if (ids.size() + 1 > seq_len)
        throw DomainError("teacher net: prefix too long for positional table");
    if (class_id > num_classes) throw DomainError("teacher net: class id out of range");
    const std::uint32_t T = static_cast<std::uint32_t>(ids.size()) + 1;

    std::vector<nn::Graph::NodeId> rows;
    rows.push_back(g.select_rows(bind(class_emb), {static_cast<std::int64_t>(class_id)}));
    if (!ids.empty()) {
        std::vector<std::int64_t> tok_rows;
        tok_rows.reserve(ids.size());
        for (std::uint32_t id : ids) {
            if (id < 1 || id > vocab) throw DomainError("teacher net: token id out of range");
            tok_rows.push_back(static_cast<std::int64_t>(id) - 1);
        }
        rows.push_back(g.select_rows(bind(tok_emb), std::move(tok_rows)));
    }
    auto x = g.vstack(rows);
    std::vector<std::int64_t> pos_rows(T);
    std::iota(pos_rows.begin(), pos_rows.end(), 0);
    x = g.add(x, g.select_rows(bind(pos_emb), std::move(pos_rows)));
    auto h = backbone.forward(g, x, causal_mask(T), bind);
    return g.add(g.matmul(h, bind(head_w)), bind(head_b));
}

std::vector<nn::Param*> TeacherNet::params() {
    std::vector<nn::Param*> out{&class_emb, &tok_emb, &pos_emb};
    for (nn::Param* p : backbone.params()) out.push_back(p);
    out.push_back(&head_w);
    out.push_back(&head_b);
    return out;
}

std::vector<const nn::Param*> TeacherNet::params() const {
    auto mut = const_cast<TeacherNet*>(this)->params();
    return {mut.begin(), mut.end()};
}

NeuralTeacher::NeuralTeacher(TeacherNet net) : net_(std::move(net)) {}

std::vector<double> NeuralTeacher::next_logits(std::uint32_t class_id,
                                               std::span<const std::uint32_t> ids) const {
    nn::Graph g;
    auto logits = net_.forward(g, class_id, ids, bind_frozen(g));
    const nn::Tensor& L = g.value(logits);
    const std::int64_t row = L.shape[0] - 1;
    return {L.v.begin() + row * L.shape[1], L.v.begin() + (row + 1) * L.shape[1]};
}

NextTokenDist NeuralTeacher::next_dist(const TokenSeq& prefix) const {
    if (prefix.size() >= net_.seq_len)
        throw DomainError("next_dist: prefix length " + std::to_string(prefix.size()) +
                          " must be < n = " + std::to_string(net_.seq_len));
    std::uint32_t class_id = prefix.condition.value_or(0);
    if (class_id >= net_.num_classes)
        throw DomainError("next_dist: condition " + std::to_string(class_id) +
                          " out of range (num_classes = " + std::to_string(net_.num_classes) +
                          ")");
    std::vector<double> logits = next_logits(class_id, prefix.ids);
    if (guidance_enabled_) {
        std::vector<double> null_logits = next_logits(net_.num_classes, prefix.ids);
        for (std::size_t j = 0; j < logits.size(); ++j)
            logits[j] = null_logits[j] + guidance_scale_ * (logits[j] - null_logits[j]);
    }
    double maxl = *std::max_element(logits.begin(), logits.end());
    double denom = 0.0;
    NextTokenDist dist;
    dist.probs.resize(logits.size());
    for (std::size_t j = 0; j < logits.size(); ++j) {
        dist.probs[j] = std::exp(logits[j] - maxl);
        denom += dist.probs[j];
    }
    for (double& p : dist.probs) p /= denom;
    return dist;
}

void NeuralTeacher::save(std::ostream& os) const {
    ByteWriter w(os);
    w.magic("DDTC");
    w.u32(kCheckpointVersion);
    w.u32(static_cast<std::uint32_t>(TeacherKind::neural));
    w.u32(net_.seq_len);
    w.u32(net_.vocab);
    w.u32(net_.num_classes);
    w.u32(net_.cfg.width);
    w.u32(net_.cfg.layers);
    w.u32(net_.cfg.mlp_mult);
    nn::write_params(os, net_.params());
}

NeuralTeacher NeuralTeacher::load_payload(std::istream& is) {
    ByteReader r(is);
    std::uint32_t n = r.u32();
    std::uint32_t vocab = r.u32();
    std::uint32_t classes = r.u32();
    TransformerConfig cfg;
    cfg.width = r.u32();
    cfg.layers = r.u32();
    cfg.mlp_mult = r.u32();
    TeacherNet net;
    net.init(n, vocab, classes, cfg, /*seed=*/0);
    nn::read_params(is, net.params());
    return NeuralTeacher(std::move(net));
}

NeuralTeacher train_neural_teacher(const std::vector<TokenSeq>& dataset, std::uint32_t vocab,
                                   const TeacherTrainConfig& cfg, TeacherTrainLog* log) {
    if (dataset.empty()) throw DomainError("train_neural_teacher: empty dataset");
    const std::uint32_t n = dataset.front().size();
    for (const TokenSeq& seq : dataset)
        if (seq.size() != n) throw DomainError("train_neural_teacher: sequences must share n");

    TeacherNet net;
    net.init(n, vocab, cfg.num_classes, cfg.arch, split_seed(cfg.seed, 0));

    // Held-out split from a deterministic shuffle.
    Rng shuffle_rng(split_seed(cfg.seed, 1));
    std::vector<std::size_t> order(dataset.size());
    std::iota(order.begin(), order.end(), 0);
    for (std::size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[shuffle_rng.next_index(i)]);
    std::size_t holdout =
        std::max<std::size_t>(1, static_cast<std::size_t>(
                                     static_cast<double>(order.size()) * cfg.holdout_fraction));
    if (holdout >= order.size()) holdout = order.size() - 1;
    std::vector<std::size_t> train_idx(order.begin(), order.end() - holdout);
    std::vector<std::size_t> holdout_idx(order.end() - holdout, order.end());

    auto params = net.params();
    nn::AdamwConfig opt_cfg;
    opt_cfg.lr = cfg.lr_scaled_by_batch ? cfg.lr * cfg.batch / 256.0 : cfg.lr;
    opt_cfg.weight_decay = cfg.weight_decay;
    nn::AdamW opt(params, opt_cfg);

    // One graph per batch: samples are stacked into block-diagonal
    // attention blocks of T = n slots each.
    auto batch_loss = [&](const std::vector<std::size_t>& idx, bool train,
                          std::uint32_t epoch) -> double {
        nn::Graph g;
        ParamBind bind = train ? bind_trainable(g) : bind_frozen(g);
        const std::uint32_t B = static_cast<std::uint32_t>(idx.size());
        const std::uint32_t T = n;  // class + n-1 tokens

        std::vector<nn::Graph::NodeId> sample_rows;
        std::vector<std::int64_t> targets;
        std::vector<std::uint8_t> active;
        auto class_node = bind(net.class_emb);
        auto tok_node = bind(net.tok_emb);
        auto pos_node = bind(net.pos_emb);
        for (std::size_t bi : idx) {
            const TokenSeq& seq = dataset[bi];
            std::uint32_t class_id = seq.condition.value_or(0);
            if (class_id >= cfg.num_classes)
                throw DomainError("train_neural_teacher: condition out of range");
            std::vector<nn::Graph::NodeId> rows;
            rows.push_back(g.select_rows(class_node, {static_cast<std::int64_t>(class_id)}));
            if (n > 1) {
                std::vector<std::int64_t> tok_rows;
                for (std::uint32_t k = 0; k + 1 < n; ++k) {
                    std::uint32_t id = seq.ids[k];
                    if (id < 1 || id > vocab)
                        throw DomainError("train_neural_teacher: token id out of range");
                    tok_rows.push_back(static_cast<std::int64_t>(id) - 1);
                }
                rows.push_back(g.select_rows(tok_node, std::move(tok_rows)));
            }
            std::vector<std::int64_t> pos_rows(T);
            std::iota(pos_rows.begin(), pos_rows.end(), 0);
            sample_rows.push_back(
                g.add(g.vstack(rows), g.select_rows(pos_node, std::move(pos_rows))));
            for (std::uint32_t k = 0; k < T; ++k) {
                targets.push_back(static_cast<std::int64_t>(seq.ids[k]) - 1);
                active.push_back(1);
            }
        }
        auto x = sample_rows.size() == 1 ? sample_rows[0] : g.vstack(sample_rows);
        auto h = net.backbone.forward(g, x, batched_causal_mask(T, B), bind);
        auto logits = g.add(g.matmul(h, bind(net.head_w)), bind(net.head_b));
        auto loss = g.softmax_cross_entropy(logits, targets, active);
        double value = g.value(loss).v[0];
        if (!std::isfinite(value))
            throw NumericError("train_neural_teacher: loss diverged at epoch " +
                               std::to_string(epoch));
        if (train) {
            opt.zero_grad();
            g.backward(loss);
            opt.step();
        }
        return value;
    };

    Rng batch_rng(split_seed(cfg.seed, 2));
    const std::size_t steps_per_epoch =
        (train_idx.size() + cfg.batch - 1) / std::max<std::uint32_t>(1, cfg.batch);
    for (std::uint32_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        double epoch_loss = 0.0;
        for (std::size_t s = 0; s < steps_per_epoch; ++s) {
            std::vector<std::size_t> idx(std::min<std::size_t>(cfg.batch, train_idx.size()));
            for (std::size_t& i : idx) i = train_idx[batch_rng.next_index(train_idx.size())];
            epoch_loss += batch_loss(idx, /*train=*/true, epoch);
        }
        epoch_loss /= static_cast<double>(steps_per_epoch);
        double holdout_ce = batch_loss(holdout_idx, /*train=*/false, epoch);
        if (log) {
            log->train_loss.push_back(epoch_loss);
            log->holdout_ce.push_back(holdout_ce);
        }
    }
    return NeuralTeacher(std::move(net));
}

}  // namespace dd
