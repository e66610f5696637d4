#include <functional>

#include "doctest.h"
#include "east/ops.hpp"
#include "east/tensor.hpp"
#include "testutil.hpp"

using namespace east;
using testutil::check_gradients;
using testutil::randn;

namespace {

// Scalarizes an op output with fixed random weights so per-element gradient
// errors cannot cancel.
TensorD probe_loss(const TensorD& out, uint64_t seed = 5) {
    east::Rng rng(seed);
    TensorD w(out.shape());
    for (auto& v : w.data()) v = rng.normal();
    return sum(mul(out, w));
}

// Shifts values near a kink away from it.
void avoid_kinks(TensorD& t, double margin = 1e-3) {
    for (auto& v : t.data())
        if (std::abs(v) < margin) v = v < 0 ? v - margin : v + margin;
}

}  // namespace

TEST_CASE("matmul gradients vs finite differences") {
    east::Rng rng(42);
    TensorD a = randn<double>(rng, {3, 4}, 1.0, true);
    TensorD b = randn<double>(rng, {4, 2}, 1.0, true);
    check_gradients({a, b}, [&] { return probe_loss(matmul(a, b)); });
}

TEST_CASE("conv2d gradients vs finite differences") {
    east::Rng rng(43);
    TensorD x = randn<double>(rng, {2, 3, 8, 8}, 1.0, true);
    TensorD w = randn<double>(rng, {4, 3, 3, 3}, 0.5, true);
    SUBCASE("stride 1 pad 0") {
        check_gradients({x, w}, [&] { return probe_loss(conv2d(x, w, 1, 0)); }, 1e-4, 60);
    }
    SUBCASE("stride 2 pad 1") {
        TensorD x2 = randn<double>(rng, {2, 3, 7, 7}, 1.0, true);
        check_gradients({x2, w}, [&] { return probe_loss(conv2d(x2, w, 2, 1)); }, 1e-4, 60);
    }
}

TEST_CASE("elementwise and broadcast gradients") {
    east::Rng rng(44);
    TensorD a = randn<double>(rng, {2, 5}, 1.0, true);
    TensorD b = randn<double>(rng, {2, 5}, 1.0, true);
    check_gradients({a, b}, [&] { return probe_loss(add(a, b), 1); });
    check_gradients({a, b}, [&] { return probe_loss(sub(a, b), 2); });
    check_gradients({a, b}, [&] { return probe_loss(mul(a, b), 3); });
    check_gradients({a}, [&] { return probe_loss(scale(a, 2.5), 4); });
    check_gradients({a}, [&] { return probe_loss(add_scalar(a, -1.25), 5); });

    TensorD s = TensorD::scalar(0.8, true);
    check_gradients({a, s}, [&] { return probe_loss(scale_by(a, s), 6); });

    TensorD x = randn<double>(rng, {3, 6}, 1.0, true);
    avoid_kinks(x);
    check_gradients({x}, [&] { return probe_loss(relu(x), 7); });
    check_gradients({x}, [&] { return probe_loss(sigmoid(x), 8); });

    TensorD u = randn<double>(rng, {2, 4}, 1.0, true);
    TensorD v = randn<double>(rng, {2, 4}, 1.0, true);
    // keep branches separated so finite differences cannot cross the kink
    for (size_t i = 0; i < u.data().size(); ++i)
        if (std::abs(u.data()[i] - v.data()[i]) < 1e-3) u.data()[i] += 0.01;
    check_gradients({u, v}, [&] { return probe_loss(maximum(u, v), 9); });
}

TEST_CASE("shape-moving op gradients") {
    east::Rng rng(45);
    TensorD x = randn<double>(rng, {2, 3, 2, 2}, 1.0, true);
    check_gradients({x}, [&] { return probe_loss(reshape(x, {4, 6}), 1); });
    check_gradients({x}, [&] { return probe_loss(flatten(x), 2); });
    check_gradients({x}, [&] { return probe_loss(global_avg_pool(x), 3); });

    TensorD m = randn<double>(rng, {3, 8}, 1.0, true);
    check_gradients({m}, [&] { return probe_loss(slice_cols(m, 2, 4), 4); });

    TensorD s = randn<double>(rng, {2, 3}, 1.0, true);
    check_gradients({x, s}, [&] { return probe_loss(mul_channelwise(x, s), 5); });
    check_gradients({x, s}, [&] { return probe_loss(add_channelwise(x, s), 6); });

    TensorD flat = randn<double>(rng, {4, 3}, 1.0, true);
    TensorD sc = randn<double>(rng, {4, 3}, 1.0, true);
    check_gradients({flat, sc}, [&] { return probe_loss(mul_channelwise(flat, sc), 7); });

    TensorD bias = randn<double>(rng, {8}, 1.0, true);
    check_gradients({m, bias}, [&] { return probe_loss(linear_bias_add(m, bias), 8); });
}

TEST_CASE("softmax cross entropy gradients") {
    east::Rng rng(46);
    TensorD logits = randn<double>(rng, {4, 5}, 2.0, true);
    std::vector<int> labels{0, 3, 2, 4};
    check_gradients({logits}, [&] { return softmax_cross_entropy(logits, labels); });
}

TEST_CASE("batchnorm2d gradients, train and eval") {
    east::Rng rng(47);
    TensorD x = randn<double>(rng, {3, 4, 3, 3}, 1.5, true);
    TensorD gamma = TensorD::full({4}, 1.0, true);
    TensorD beta({4}, true);
    for (size_t c = 0; c < 4; ++c) {
        gamma.data()[c] += 0.1 * rng.normal();
        beta.data()[c] = 0.1 * rng.normal();
    }
    SUBCASE("train mode") {
        std::vector<double> rm(4, 0.0), rv(4, 1.0);
        check_gradients({x, gamma, beta}, [&] {
            return probe_loss(batchnorm2d(x, gamma, beta, rm, rv, true), 1);
        });
    }
    SUBCASE("eval mode") {
        std::vector<double> rm{0.1, -0.2, 0.3, 0.0}, rv{1.0, 0.5, 2.0, 1.5};
        check_gradients({x, gamma, beta}, [&] {
            return probe_loss(batchnorm2d(x, gamma, beta, rm, rv, false), 2);
        });
    }
}

TEST_CASE("float mode gradients hold at looser tolerance") {
    east::Rng rng(48);
    Tensor a = randn<float>(rng, {3, 4}, 1.0, true);
    Tensor b = randn<float>(rng, {4, 2}, 1.0, true);
    std::vector<float> analytic;
    {
        Tape tape;
        Tensor loss = sum(matmul(a, b));
        tape.backward(loss);
        analytic.assign(a.grad().begin(), a.grad().end());
    }
    for (int64_t i = 0; i < a.numel(); ++i) {
        const float v = a.data()[static_cast<size_t>(i)];
        const float h = 1e-2f;
        a.data()[static_cast<size_t>(i)] = v + h;
        const float lp = sum(matmul(a, b)).item();
        a.data()[static_cast<size_t>(i)] = v - h;
        const float lm = sum(matmul(a, b)).item();
        a.data()[static_cast<size_t>(i)] = v;
        const float fd = (lp - lm) / (2 * h);
        CHECK(testutil::rel_err(analytic[static_cast<size_t>(i)], fd) < 1e-2);
    }
}
