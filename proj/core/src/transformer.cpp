#include "dd/transformer.hpp"

namespace dd {

ParamBind bind_frozen(nn::Graph& g) {
    return [&g](const nn::Param& p) { return g.input(p); };
}

ParamBind bind_trainable(nn::Graph& g) {
    // Safe because training code paths hold the model mutably; frozen
    // inference paths use bind_frozen.
    return [&g](const nn::Param& p) { return g.param(const_cast<nn::Param&>(p)); };
}

void TransformerBlock::init(const std::string& prefix, const TransformerConfig& cfg,
                            Rng& rng) {
    const std::int64_t w = cfg.width;
    const std::int64_t h = static_cast<std::int64_t>(cfg.width) * cfg.mlp_mult;
    auto randn = [&](std::vector<std::int64_t> shape) {
        return nn::Tensor::randn(std::move(shape), rng, cfg.init_std);
    };
    ln1_g = nn::Param(prefix + ".ln1_g", nn::Tensor::full({w}, 1.0));
    ln1_b = nn::Param(prefix + ".ln1_b", nn::Tensor::zeros({w}));
    wq = nn::Param(prefix + ".wq", randn({w, w}));
    bq = nn::Param(prefix + ".bq", nn::Tensor::zeros({w}));
    wk = nn::Param(prefix + ".wk", randn({w, w}));
    bk = nn::Param(prefix + ".bk", nn::Tensor::zeros({w}));
    wv = nn::Param(prefix + ".wv", randn({w, w}));
    bv = nn::Param(prefix + ".bv", nn::Tensor::zeros({w}));
    wo = nn::Param(prefix + ".wo", randn({w, w}));
    bo = nn::Param(prefix + ".bo", nn::Tensor::zeros({w}));
    ln2_g = nn::Param(prefix + ".ln2_g", nn::Tensor::full({w}, 1.0));
    ln2_b = nn::Param(prefix + ".ln2_b", nn::Tensor::zeros({w}));
    w1 = nn::Param(prefix + ".w1", randn({w, h}));
    b1 = nn::Param(prefix + ".b1", nn::Tensor::zeros({h}));
    w2 = nn::Param(prefix + ".w2", randn({h, w}));
    b2 = nn::Param(prefix + ".b2", nn::Tensor::zeros({w}));
}

nn::Graph::NodeId TransformerBlock::forward(nn::Graph& g, nn::Graph::NodeId x,
                                            const std::vector<std::uint8_t>& mask,
                                            const ParamBind& bind) const {
    auto u = g.layer_norm(x, bind(ln1_g), bind(ln1_b));
    auto q = g.add(g.matmul(u, bind(wq)), bind(bq));
    auto k = g.add(g.matmul(u, bind(wk)), bind(bk));
    auto v = g.add(g.matmul(u, bind(wv)), bind(bv));
    auto attn = g.attention(q, k, v, mask);
    x = g.add(x, g.add(g.matmul(attn, bind(wo)), bind(bo)));
    auto u2 = g.layer_norm(x, bind(ln2_g), bind(ln2_b));
    auto h = g.gelu(g.add(g.matmul(u2, bind(w1)), bind(b1)));
    x = g.add(x, g.add(g.matmul(h, bind(w2)), bind(b2)));
    return x;
}

std::vector<nn::Param*> TransformerBlock::params() {
    return {&ln1_g, &ln1_b, &wq, &bq, &wk, &bk, &wv, &bv, &wo, &bo,
            &ln2_g, &ln2_b, &w1, &b1, &w2, &b2};
}

void Backbone::init(const TransformerConfig& config, Rng& rng) {
    cfg = config;
    blocks.resize(cfg.layers);
    for (std::uint32_t l = 0; l < cfg.layers; ++l)
        blocks[l].init("block" + std::to_string(l), cfg, rng);
    lnf_g = nn::Param("lnf_g", nn::Tensor::full({static_cast<std::int64_t>(cfg.width)}, 1.0));
    lnf_b = nn::Param("lnf_b", nn::Tensor::zeros({static_cast<std::int64_t>(cfg.width)}));
}

nn::Graph::NodeId Backbone::forward(nn::Graph& g, nn::Graph::NodeId x,
                                    const std::vector<std::uint8_t>& mask,
                                    const ParamBind& bind) const {
    for (const TransformerBlock& block : blocks) x = block.forward(g, x, mask, bind);
    return g.layer_norm(x, bind(lnf_g), bind(lnf_b));
}

std::vector<nn::Param*> Backbone::params() {
    std::vector<nn::Param*> out;
    for (TransformerBlock& block : blocks)
        for (nn::Param* p : block.params()) out.push_back(p);
    out.push_back(&lnf_g);
    out.push_back(&lnf_b);
    return out;
}

void Backbone::copy_from(const Backbone& other) {
    if (cfg.width != other.cfg.width || cfg.layers != other.cfg.layers ||
        cfg.mlp_mult != other.cfg.mlp_mult)
        throw DomainError("backbone: config mismatch in copy_from");
    Backbone& self = *this;
    auto dst = self.params();
    auto src = const_cast<Backbone&>(other).params();
    for (std::size_t i = 0; i < dst.size(); ++i) dst[i]->w = src[i]->w;
}

std::vector<std::uint8_t> causal_mask(std::uint32_t T) {
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(T) * T, 0);
    for (std::uint32_t i = 0; i < T; ++i)
        for (std::uint32_t j = 0; j <= i; ++j) mask[static_cast<std::size_t>(i) * T + j] = 1;
    return mask;
}

std::vector<std::uint8_t> batched_causal_mask(std::uint32_t T, std::uint32_t count) {
    const std::size_t full = static_cast<std::size_t>(T) * count;
    std::vector<std::uint8_t> mask(full * full, 0);
    for (std::uint32_t b = 0; b < count; ++b) {
        const std::size_t base = static_cast<std::size_t>(b) * T;
        for (std::uint32_t i = 0; i < T; ++i)
            for (std::uint32_t j = 0; j <= i; ++j)
                mask[(base + i) * full + base + j] = 1;
    }
    return mask;
}

}  // namespace dd
