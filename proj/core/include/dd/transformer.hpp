#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "dd/nn.hpp"
#include "dd/rng.hpp"

namespace dd {

struct TransformerConfig {
    std::uint32_t width = 64;
    std::uint32_t layers = 2;
    std::uint32_t mlp_mult = 4;
    double init_std = 0.02;
};

// Binds a parameter into a graph: as a trainable leaf during training, as
// a frozen input during inference.
using ParamBind = std::function<nn::Graph::NodeId(const nn::Param&)>;

ParamBind bind_frozen(nn::Graph& g);
ParamBind bind_trainable(nn::Graph& g);  // caller must own the params mutably

// Pre-norm block: x += proj(attention(LN(x))); x += mlp(LN(x)).
struct TransformerBlock {
    nn::Param ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    nn::Param ln2_g, ln2_b, w1, b1, w2, b2;

    void init(const std::string& prefix, const TransformerConfig& cfg, Rng& rng);
    nn::Graph::NodeId forward(nn::Graph& g, nn::Graph::NodeId x,
                              const std::vector<std::uint8_t>& mask,
                              const ParamBind& bind) const;
    std::vector<nn::Param*> params();
};

// Stack of blocks plus final layer norm. Operates on (T, width) row
// matrices; the caller supplies the T*T attention mask.
struct Backbone {
    TransformerConfig cfg;
    std::vector<TransformerBlock> blocks;
    nn::Param lnf_g, lnf_b;

    void init(const TransformerConfig& config, Rng& rng);
    nn::Graph::NodeId forward(nn::Graph& g, nn::Graph::NodeId x,
                              const std::vector<std::uint8_t>& mask,
                              const ParamBind& bind) const;
    std::vector<nn::Param*> params();

    // Copies all weights from another backbone with identical config.
    void copy_from(const Backbone& other);
};

// T*T mask where row i sees columns 0..i (inclusive).
std::vector<std::uint8_t> causal_mask(std::uint32_t T);

// Block-diagonal batch of `count` causal blocks of size T, used to run a
// whole batch through one graph.
std::vector<std::uint8_t> batched_causal_mask(std::uint32_t T, std::uint32_t count);

}  // namespace dd
