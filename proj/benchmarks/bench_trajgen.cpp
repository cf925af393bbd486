#include <benchmark/benchmark.h>

#include "dd/trajgen.hpp"

namespace {

using namespace dd;

void BM_GeneratePair(benchmark::State& state) {
    const auto steps = static_cast<std::uint32_t>(state.range(0));
    std::vector<TokenSeq> data{TokenSeq{{1, 1, 1}, std::nullopt},
                               TokenSeq{{2, 2, 2}, std::nullopt},
                               TokenSeq{{3, 1, 2}, std::nullopt}};
    TabularTeacher teacher = fit_tabular(data, 4, 0.5);
    Codebook cb = Codebook::random(4, 2, 9);
    SolverConfig cfg;
    cfg.steps = steps;
    std::uint64_t seed = 0;
    for (auto _ : state) {
        PairRecord pair = generate_pair(teacher, cb, std::nullopt, seed++, cfg);
        benchmark::DoNotOptimize(pair.data.ids.data());
    }
}
BENCHMARK(BM_GeneratePair)->Arg(16)->Arg(64);

}  // namespace
