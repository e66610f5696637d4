#include <benchmark/benchmark.h>

#include "east/ops.hpp"
#include "east/rng.hpp"

namespace {

void bm_conv_forward(benchmark::State& state) {
    const int64_t b = state.range(0), c = state.range(1), hw = state.range(2);
    east::Rng rng(1);
    east::Tensor x({b, c, hw, hw});
    east::Tensor w({c, c, 3, 3});
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    for (auto& v : w.data()) v = static_cast<float>(rng.normal());
    for (auto _ : state) {
        east::Tensor y = east::conv2d(x, w, 1, 1);
        benchmark::DoNotOptimize(y.data().data());
    }
    state.SetItemsProcessed(state.iterations() * 2 * b * c * c * 9 * hw * hw);
}

void bm_conv_train_step(benchmark::State& state) {
    const int64_t b = state.range(0), c = state.range(1), hw = state.range(2);
    east::Rng rng(1);
    east::Tensor x({b, c, hw, hw});
    east::Tensor w({c, c, 3, 3}, true);
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    for (auto& v : w.data()) v = static_cast<float>(rng.normal());
    for (auto _ : state) {
        w.zero_grad();
        east::Tape tape;
        east::Tensor loss = east::sum(east::conv2d(x, w, 1, 1));
        tape.backward(loss);
        benchmark::DoNotOptimize(w.grad().data());
    }
    state.SetItemsProcessed(state.iterations() * 3 * 2 * b * c * c * 9 * hw * hw);
}

}  // namespace

BENCHMARK(bm_conv_forward)->Args({16, 16, 16})->Args({64, 16, 16})->Args({128, 16, 32});
BENCHMARK(bm_conv_train_step)->Args({16, 16, 16})->Args({64, 16, 16});

BENCHMARK_MAIN();
