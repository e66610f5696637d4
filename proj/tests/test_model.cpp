#include "doctest.h"
#include "east/model.hpp"
#include "east/ops.hpp"
#include "east/topology.hpp"
#include "testutil.hpp"

using namespace east;

TEST_CASE("mlp census matches the closed form") {
    ArchSpec s = mlp_mnist();
    ModelD m = ModelD::build(s, 3);
    Census c = m.census();
    CHECK(c.theoretical == 784 * 128 + 128 * 10 + 128 + 10);
    CHECK(c.stored == c.theoretical);
    CHECK(c.masked_theoretical == 784 * 128 + 128 * 10);

    east::Rng rng(4);
    TensorD x = testutil::randn<double>(rng, {2, 1, 28, 28});
    TensorD y = m.forward(x, true);
    CHECK(y.shape() == Shape{2, 10});
}

TEST_CASE("resnet20 census equals the hand-computed closed form") {
    ModelD m = ModelD::build(resnet20_desk(), 5);
    // conv/fc weights (independent arithmetic):
    //   stem 16*3*9; s1: 3 blocks * 2 convs * 16*16*9
    //   s2: (32*16*9 + 32*32*9 + 32*16) + 2 * 2 * 32*32*9
    //   s3: (64*32*9 + 64*64*9 + 64*32) + 2 * 2 * 64*64*9
    //   fc 64*10
    const int64_t convs = 16 * 3 * 9 + 3 * 2 * (16 * 16 * 9) +
                          (32 * 16 * 9 + 32 * 32 * 9 + 32 * 16) + 2 * 2 * (32 * 32 * 9) +
                          (64 * 32 * 9 + 64 * 64 * 9 + 64 * 32) + 2 * 2 * (64 * 64 * 9) + 64 * 10;
    // BN affine: stem 2*16; per stage: first block 2*(2w)+2w(down, s2/s3), others 2*2w
    const int64_t bn = 2 * 16 + 3 * (2 * 16 + 2 * 16) + (2 * 32 * 3 + 2 * 2 * 2 * 32) +
                       (2 * 64 * 3 + 2 * 2 * 2 * 64);
    const int64_t bias = 10;
    Census c = m.census();
    CHECK(c.theoretical == convs + bn + bias);
    CHECK(c.theoretical == 272474);  // frozen from the arithmetic above
    CHECK(c.unique_active == c.masked_theoretical);  // built dense

    // registry order matches the description's owner sites
    const auto& desc = m.description();
    size_t j = 0;
    for (size_t i = 0; i < desc.sites.size(); ++i) {
        if (desc.sites[i].owner != static_cast<int>(i)) continue;
        REQUIRE(j < m.masked_params().size());
        CHECK(m.masked_params()[j]->name == desc.sites[i].name);
        CHECK(m.masked_params()[j]->dense_count() == desc.sites[i].weight_numel());
        ++j;
    }
    CHECK(j == m.masked_params().size());
}

TEST_CASE("same seed builds identical weights; different seeds differ") {
    ModelD a = ModelD::build(resnet20_desk(), 9);
    ModelD b = ModelD::build(resnet20_desk(), 9);
    ModelD c = ModelD::build(resnet20_desk(), 10);
    bool same_ab = true, same_ac = true;
    for (size_t i = 0; i < a.masked_params().size(); ++i) {
        const auto wa = a.masked_params()[i]->weights.data();
        const auto wb = b.masked_params()[i]->weights.data();
        const auto wc = c.masked_params()[i]->weights.data();
        for (size_t k = 0; k < wa.size(); ++k) {
            same_ab &= wa[k] == wb[k];
            same_ac &= wa[k] == wc[k];
        }
    }
    CHECK(same_ab);
    CHECK_FALSE(same_ac);
}

TEST_CASE("forward shapes and preact stats on a small resnet") {
    ArchSpec s;
    s.widths = {8, 16};
    s.blocks = {2, 2};
    s.input = {3, 16, 16};
    ModelD m = ModelD::build(s, 12);
    east::Rng rng(6);
    TensorD x = testutil::randn<double>(rng, {3, 3, 16, 16});
    PreactStats stats;
    TensorD y = m.forward(x, true, &stats);
    CHECK(y.shape() == Shape{3, 10});
    CHECK(stats.positive.size() == m.act_site_names().size());
    // every site saw its activations
    for (size_t i = 0; i < stats.total.size(); ++i) CHECK(stats.total[i] > 0);
    const double g = stats.global_fraction();
    CHECK(g > 0.0);
    CHECK(g < 1.0);

    // brute-force recount on a fixed toy input through one relu site
    PhasedActivationD site;
    TensorD t({1, 2, 1, 2}, {0.5, -1.0, 2.0, 0.0});
    int64_t pos = 0, tot = 0;
    site.forward(t, &pos, &tot);
    CHECK(pos == 2);
    CHECK(tot == 4);
}

TEST_CASE("dyrelu phase-out restores the relu parameter census exactly") {
    ArchSpec dy = resnet20_desk();
    dy.activation = ActivationMode::DyreluPhased;
    ModelD m = ModelD::build(dy, 15);
    ModelD baseline = ModelD::build(resnet20_desk(), 15);

    CHECK(m.census().dyrelu_extra > 0);
    CHECK(m.any_dyrelu_alive());
    auto dropped = m.set_beta(0.0);
    CHECK(!dropped.empty());
    CHECK_FALSE(m.any_dyrelu_alive());
    CHECK(m.census().dyrelu_extra == 0);
    CHECK(m.census().trainable_now() == baseline.census().trainable_now());
}

TEST_CASE("2-block residual net with dyrelu: gradients pass finite differences") {
    ArchSpec s;
    s.widths = {4, 8};
    s.blocks = {1, 1};
    s.input = {3, 8, 8};
    s.classes = 5;
    s.activation = ActivationMode::DyreluPhased;
    s.dyrelu_reduction = 4;
    ModelD m = ModelD::build(s, 19);
    east::Rng rng(20);
    TensorD x = testutil::randn<double>(rng, {2, 3, 8, 8});
    std::vector<int> labels{0, 3};
    auto build = [&] { return softmax_cross_entropy(m.forward(x, true), labels); };

    std::vector<TensorD> probes;
    for (auto* p : m.masked_params()) probes.push_back(p->weights);
    for (auto& t : m.dense_params()) probes.push_back(t);
    for (auto& t : m.dyrelu_params()) probes.push_back(t);

    SUBCASE("beta = 1") {
        m.set_beta(1.0);
        testutil::check_gradients(probes, build, 1e-4, 6);
    }
    SUBCASE("beta = 0.5") {
        m.set_beta(0.5);
        testutil::check_gradients(probes, build, 1e-4, 6);
    }
}

TEST_CASE("gradient flows to hyper-function parameters whenever beta > 0") {
    ArchSpec s = mlp_mnist();
    s.activation = ActivationMode::DyreluPhased;
    ModelD m = ModelD::build(s, 23);
    m.set_beta(0.25);
    east::Rng rng(24);
    TensorD x = testutil::randn<double>(rng, {4, 1, 28, 28});
    TapeD tape;
    TensorD loss = softmax_cross_entropy(m.forward(x, true), {0, 1, 2, 3});
    tape.backward(loss);
    for (auto& t : m.dyrelu_params()) {
        REQUIRE(t.has_grad());
        double norm = 0;
        for (double g : t.grad()) norm += g * g;
        CHECK(norm > 0.0);
    }
}

TEST_CASE("model rejects the symbolic-only imagenet stem") {
    ArchSpec s = resnet50_cifar();
    s.imagenet_stem = true;
    CHECK_THROWS_AS(ModelD::build(s, 1), std::invalid_argument);
}

TEST_CASE("float-mode full-net gradients hold at the 32-bit tolerance") {
    ArchSpec s = mlp_mnist(4);
    s.input = {1, 6, 6};
    s.widths = {12};
    s.activation = ActivationMode::DyreluPhased;
    s.dyrelu_reduction = 4;
    Model m = Model::build(s, 44);
    m.set_beta(0.5);
    east::Rng rng(45);
    Tensor x({5, 1, 6, 6});
    for (auto& v : x.data()) v = static_cast<float>(rng.normal());
    std::vector<int> labels{0, 1, 2, 3, 0};
    auto loss_value = [&] {
        return softmax_cross_entropy(m.forward(x, true), labels).item();
    };
    Tensor w = m.masked_params()[0]->weights;
    std::vector<float> analytic;
    {
        Tape tape;
        Tensor loss = softmax_cross_entropy(m.forward(x, true), labels);
        tape.backward(loss);
        analytic.assign(w.grad().begin(), w.grad().end());
    }
    east::Rng pick(46);
    int checked = 0;
    for (int trial = 0; trial < 60 && checked < 20; ++trial) {
        const auto i = static_cast<size_t>(pick.below(static_cast<uint64_t>(w.numel())));
        if (std::abs(analytic[i]) < 1e-3) continue;  // float fd noise floor
        const float v = w.data()[i];
        const float h = 1e-2f;
        w.data()[i] = v + h;
        const double lp = loss_value();
        w.data()[i] = v - h;
        const double lm = loss_value();
        w.data()[i] = v;
        const double fd = (lp - lm) / (2.0 * h);
        CHECK(testutil::rel_err(analytic[i], fd) < 1e-2);
        ++checked;
    }
    CHECK(checked >= 10);
}
