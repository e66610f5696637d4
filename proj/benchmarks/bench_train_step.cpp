#include <benchmark/benchmark.h>

#include "east/model.hpp"
#include "east/ops.hpp"
#include "east/optim.hpp"
#include "east/rng.hpp"

namespace {

void bm_resnet_train_step(benchmark::State& state) {
    const int64_t batch = state.range(0);
    east::ArchSpec spec;
    spec.widths = {8, 16, 32};
    spec.blocks = {3, 3, 3};
    spec.input = {3, 16, 16};
    east::Model m = east::Model::build(spec, 1);
    east::SgdMomentum opt(0.1f);
    for (auto* p : m.masked_params()) opt.add_masked(p);
    for (auto& t : m.dense_params()) opt.add_param(t);

    east::Rng rng(2);
    east::Tensor x({batch, 3, 16, 16});
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    std::vector<int> labels(static_cast<size_t>(batch));
    for (auto& l : labels) l = static_cast<int>(rng.below(10));

    for (auto _ : state) {
        opt.zero_grad();
        east::Tape tape;
        east::Tensor loss = east::softmax_cross_entropy(m.forward(x, true), labels);
        tape.backward(loss);
        opt.step();
        benchmark::DoNotOptimize(loss.item());
    }
    state.SetItemsProcessed(state.iterations() * batch);
}

}  // namespace

BENCHMARK(bm_resnet_train_step)->Arg(32)->Arg(128)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
