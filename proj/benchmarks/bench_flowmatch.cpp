#include <benchmark/benchmark.h>

#include "dd/flowmatch.hpp"
#include "dd/rng.hpp"

namespace {

using namespace dd;

NextTokenDist uniform_dist(std::uint32_t vocab) {
    NextTokenDist d;
    d.probs.assign(vocab, 1.0 / vocab);
    return d;
}

void BM_Velocity(benchmark::State& state) {
    const auto vocab = static_cast<std::uint32_t>(state.range(0));
    Codebook cb = Codebook::random(vocab, 4, 1);
    NextTokenDist p = uniform_dist(vocab);
    std::vector<double> x{0.1, -0.2, 0.3, 0.05};
    for (auto _ : state) {
        auto v = velocity(x, 0.5, p, cb);
        benchmark::DoNotOptimize(v);
    }
}
BENCHMARK(BM_Velocity)->Arg(8)->Arg(64)->Arg(512);

void BM_SolveOde(benchmark::State& state) {
    const auto steps = static_cast<std::uint32_t>(state.range(0));
    Codebook cb = Codebook::random(16, 4, 2);
    NextTokenDist p = uniform_dist(16);
    SolverConfig cfg;
    cfg.steps = steps;
    Rng rng(3);
    std::vector<double> x0{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian(),
                           rng.next_gaussian()};
    for (auto _ : state) {
        auto x = solve_ode(x0, p, cb, cfg);
        benchmark::DoNotOptimize(x);
    }
}
BENCHMARK(BM_SolveOde)->Arg(4)->Arg(16)->Arg(64);

void BM_FmMap(benchmark::State& state) {
    Codebook cb = Codebook::random(16, 4, 2);
    NextTokenDist p = uniform_dist(16);
    SolverConfig cfg;
    Rng rng(7);
    for (auto _ : state) {
        std::vector<double> e{rng.next_gaussian(), rng.next_gaussian(), rng.next_gaussian(),
                              rng.next_gaussian()};
        benchmark::DoNotOptimize(fm_map(e, p, cb, cfg));
    }
}
BENCHMARK(BM_FmMap);

}  // namespace
