#include <benchmark/benchmark.h>

#include "dd/nn.hpp"
#include "dd/transformer.hpp"

namespace {

using namespace dd;
using nn::Graph;
using nn::Tensor;

void BM_Matmul(benchmark::State& state) {
    const auto dim = static_cast<std::int64_t>(state.range(0));
    Rng rng(1);
    Tensor a = Tensor::randn({dim, dim}, rng, 1.0);
    Tensor b = Tensor::randn({dim, dim}, rng, 1.0);
    for (auto _ : state) {
        Graph g;
        auto c = g.matmul(g.constant(a), g.constant(b));
        benchmark::DoNotOptimize(g.value(c).v.data());
    }
    state.SetItemsProcessed(state.iterations() * dim * dim * dim);
}
BENCHMARK(BM_Matmul)->Arg(32)->Arg(64)->Arg(128);

void BM_BackboneForwardBackward(benchmark::State& state) {
    const auto batch = static_cast<std::uint32_t>(state.range(0));
    Rng rng(2);
    TransformerConfig cfg;
    cfg.width = 48;
    cfg.layers = 2;
    Backbone bb;
    bb.init(cfg, rng);
    const std::uint32_t T = 5;
    Tensor x = Tensor::randn({static_cast<std::int64_t>(batch) * T, cfg.width}, rng, 1.0);
    auto mask = batched_causal_mask(T, batch);
    std::vector<std::uint8_t> active(batch * T, 1);
    std::vector<std::int64_t> targets(batch * T, 0);
    for (auto _ : state) {
        Graph g;
        auto h = bb.forward(g, g.constant(x), mask, bind_trainable(g));
        Tensor target = Tensor::zeros(g.value(h).shape);
        auto loss = g.mean_squared_error(h, g.constant(target), active);
        g.backward(loss);
        benchmark::DoNotOptimize(g.value(loss).v[0]);
        for (auto* p : bb.params()) p->zero_grad();
    }
}
BENCHMARK(BM_BackboneForwardBackward)->Arg(16)->Arg(64)->Arg(128);

}  // namespace
