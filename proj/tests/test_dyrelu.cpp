#include "doctest.h"
#include "east/dyrelu.hpp"
#include "east/ops.hpp"
#include "testutil.hpp"

using namespace east;

TEST_CASE("pinned coefficients reduce DyReLU to ReLU exactly") {
    DyReLUBD act(8, /*seed=*/4);
    act.pin_to_relu();
    east::Rng rng(9);
    TensorD x = testutil::randn<double>(rng, {5, 8, 5, 5}, 2.0);
    TensorD y = act.forward(x);
    TensorD r = relu(x);
    REQUIRE(y.numel() == 1000);  // 5*8*5*5 random inputs
    for (int64_t i = 0; i < y.numel(); ++i)
        CHECK(y.data()[static_cast<size_t>(i)] == r.data()[static_cast<size_t>(i)]);
}

TEST_CASE("parallel-lines case: a=(1,1), b=(0,1) gives x+1") {
    // With both slopes 1 and intercepts (0,1), max(x, x+1) = x+1 everywhere.
    DyReLUBD act(4, 4);
    act.pin_to_relu();
    act.alpha = {1.0, 1.0};
    // drive the branch-2 intercept residual to +1 through a saturated bias
    act.lambda_b = 1.0;
    for (int64_t c = 0; c < 4; ++c)
        act.b2.data()[static_cast<size_t>(3 * 4 + c)] = 1e9;  // db_2 -> 2*sigmoid(1e9)-1 = 1
    east::Rng rng(10);
    TensorD x = testutil::randn<double>(rng, {3, 4, 2, 2});
    TensorD y = act.forward(x);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(y.data()[static_cast<size_t>(i)] ==
              doctest::Approx(x.data()[static_cast<size_t>(i)] + 1.0));
}

TEST_CASE("dyrelu gradients flow through input and hyper-function") {
    east::Rng rng(11);
    DyReLUBD act(6, 12);
    TensorD x = testutil::randn<double>(rng, {2, 6, 3, 3}, 1.0, true);
    auto build = [&] {
        TensorD w(Shape{2, 6, 3, 3});
        east::Rng wr(5);
        for (auto& v : w.data()) v = wr.normal();
        return sum(mul(act.forward(x), w));
    };
    testutil::check_gradients({x, act.w1, act.b1, act.w2, act.b2}, build, 1e-4, 40);
}

TEST_CASE("dyrelu accepts 2-d activations") {
    east::Rng rng(12);
    DyReLUBD act(10, 13);
    TensorD x = testutil::randn<double>(rng, {4, 10}, 1.0, true);
    TensorD y = act.forward(x);
    CHECK(y.shape() == x.shape());
    CHECK_THROWS_AS(act.forward(TensorD({4, 3}, std::vector<double>(12, 1.0))),
                    std::invalid_argument);
}

TEST_CASE("phasing schedule landmarks") {
    PhasingSchedule s{10, 50};
    CHECK(s.beta(10) == 1.0);
    CHECK(s.beta(50) == 0.0);
    CHECK(s.beta(30) == 0.5);
    CHECK(s.beta(0) == 1.0);
    CHECK(s.beta(400) == 0.0);
    CHECK(s.beta(20) == doctest::Approx(0.75));
    // monotone non-increasing
    double prev = 2.0;
    for (int t = 0; t <= 60; ++t) {
        CHECK(s.beta(t) <= prev);
        prev = s.beta(t);
    }
}

TEST_CASE("blended forward endpoints are bit-identical to the pure branches") {
    east::Rng rng(13);
    PhasedActivationD site(5, /*seed=*/21);
    TensorD x = testutil::randn<double>(rng, {3, 5, 4, 4}, 1.5);

    site.set_beta(1.0);
    TensorD via_site = site.forward(x);
    TensorD pure = site.dyrelu()->forward(x);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(via_site.data()[static_cast<size_t>(i)] == pure.data()[static_cast<size_t>(i)]);

    // midpoint example: dyrelu=2, relu=0 -> 1
    PhasedActivationD mid(1, 22);
    mid.dyrelu()->pin_to_relu();
    // f_dy(x) = max(x, 2): saturate the branch-2 intercept residual to +1
    mid.dyrelu()->b2.data()[3] = 1e9;
    mid.dyrelu()->lambda_b = 2.0;
    TensorD x0({1, 1, 1, 1}, std::vector<double>{-5.0});  // relu = 0, dyrelu = max(-5, 2) = 2
    mid.set_beta(0.5);
    CHECK(mid.forward(x0).item() == doctest::Approx(1.0));

    auto dropped = site.set_beta(0.0);
    CHECK(dropped.size() == 4);
    CHECK_FALSE(site.dyrelu_alive());
    TensorD after = site.forward(x);
    TensorD r = relu(x);
    for (int64_t i = 0; i < x.numel(); ++i)
        CHECK(after.data()[static_cast<size_t>(i)] == r.data()[static_cast<size_t>(i)]);
}

TEST_CASE("positive pre-activation counting") {
    PhasedActivationD site;  // plain relu
    TensorD x({1, 4, 1, 1}, {-1.0, 0.5, 2.0, -3.0});
    int64_t pos = 0, total = 0;
    site.forward(x, &pos, &total);
    CHECK(pos == 2);
    CHECK(total == 4);
    CHECK(static_cast<double>(pos) / total == 0.5);

    TensorD allneg({1, 4, 1, 1}, {-1.0, -0.5, -2.0, -3.0});
    pos = total = 0;
    site.forward(allneg, &pos, &total);
    CHECK(pos == 0);

    // zero entries are not strictly positive
    TensorD zeros({1, 4, 1, 1}, {0.0, 0.0, 1.0, 0.0});
    pos = total = 0;
    site.forward(zeros, &pos, &total);
    CHECK(pos == 1);
}
