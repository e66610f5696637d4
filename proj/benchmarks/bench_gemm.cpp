#include <benchmark/benchmark.h>

#include <vector>

#include "east/gemm.hpp"
#include "east/rng.hpp"

namespace {

template <void (*Kernel)(int64_t, int64_t, int64_t, const float*, const float*, float*)>
void bm_gemm(benchmark::State& state) {
    const int64_t n = state.range(0);
    east::Rng rng(1);
    std::vector<float> a(n * n), b(n * n), c(n * n, 0.0f);
    for (auto& v : a) v = static_cast<float>(rng.normal());
    for (auto& v : b) v = static_cast<float>(rng.normal());
    for (auto _ : state) {
        Kernel(n, n, n, a.data(), b.data(), c.data());
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * n * n * n);  // FLOPs
}

}  // namespace

BENCHMARK(bm_gemm<east::gemm_nn<float>>)->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(bm_gemm<east::gemm_nt<float>>)->RangeMultiplier(2)->Range(32, 512);
BENCHMARK(bm_gemm<east::gemm_tn<float>>)->RangeMultiplier(2)->Range(32, 512);

BENCHMARK_MAIN();
