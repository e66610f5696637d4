#include <benchmark/benchmark.h>

#include "east/topology.hpp"

namespace {

void bm_topology_update(benchmark::State& state) {
    const int64_t n = state.range(0);
    east::Rng rng(1);
    east::MaskedParam p("w", {n});
    auto g = p.weights.grad();
    for (int64_t i = 0; i < n; ++i) {
        if (rng.uniform() < 0.2) {
            p.set_active(i, true);
            p.weights.data()[static_cast<size_t>(i)] = static_cast<float>(rng.normal());
        }
        g[static_cast<size_t>(i)] = static_cast<float>(rng.normal());
    }
    std::vector<east::MaskedParam*> params{&p};
    east::TopologySettings s;
    s.schedule = east::ScheduleMode::Static;
    s.update_every_fixed = 1;
    s.prune_rate = 0.3;
    s.s_max = 0.9;
    s.s_min = 0.5;
    east::TopologyController ctrl(s, params);
    int64_t t = 0;
    for (auto _ : state) {
        ctrl.update(++t);
        benchmark::DoNotOptimize(p.mask.data());
    }
    state.SetItemsProcessed(state.iterations() * n);
}

}  // namespace

BENCHMARK(bm_topology_update)->RangeMultiplier(8)->Range(1 << 12, 1 << 21);

BENCHMARK_MAIN();
