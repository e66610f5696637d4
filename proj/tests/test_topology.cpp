#include <algorithm>
#include <numeric>
#include <set>

#include "doctest.h"
#include "east/erk.hpp"
#include "east/model.hpp"
#include "east/ops.hpp"
#include "east/topology.hpp"
#include "testutil.hpp"

using namespace east;

namespace {

MaskedParamD make_param(const char* name, Shape shape, east::Rng& rng, double keep_prob = 1.0) {
    MaskedParamD p(name, std::move(shape));
    for (int64_t i = 0; i < p.dense_count(); ++i) {
        if (rng.uniform() < keep_prob) {
            p.set_active(i, true);
            p.weights.data()[static_cast<size_t>(i)] = rng.normal();
        }
    }
    return p;
}

// Brute-force oracle: stable sort of active entries by |w| ascending; the
// first k flat positions are the expected prune set.
std::set<std::pair<int, int64_t>> prune_oracle(const std::vector<MaskedParamD*>& params,
                                               int64_t k) {
    std::vector<std::tuple<double, int, int64_t>> rows;
    for (size_t l = 0; l < params.size(); ++l)
        for (int64_t i = 0; i < params[l]->dense_count(); ++i)
            if (params[l]->active(i))
                rows.emplace_back(std::abs(params[l]->weights.data()[static_cast<size_t>(i)]),
                                  static_cast<int>(l), i);
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::get<0>(a) < std::get<0>(b);
    });
    std::set<std::pair<int, int64_t>> out;
    for (int64_t i = 0; i < k && i < static_cast<int64_t>(rows.size()); ++i)
        out.insert({std::get<1>(rows[static_cast<size_t>(i)]),
                    std::get<2>(rows[static_cast<size_t>(i)])});
    return out;
}

std::set<std::pair<int, int64_t>> grow_oracle(const std::vector<MaskedParamD*>& params,
                                              int64_t k) {
    std::vector<std::tuple<double, int, int64_t>> rows;
    for (size_t l = 0; l < params.size(); ++l)
        for (int64_t i = 0; i < params[l]->dense_count(); ++i)
            if (!params[l]->active(i))
                rows.emplace_back(
                    std::abs(params[l]->weights.node()->grad[static_cast<size_t>(i)]),
                    static_cast<int>(l), i);
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
        return std::get<0>(a) > std::get<0>(b);
    });
    std::set<std::pair<int, int64_t>> out;
    for (int64_t i = 0; i < k && i < static_cast<int64_t>(rows.size()); ++i)
        out.insert({std::get<1>(rows[static_cast<size_t>(i)]),
                    std::get<2>(rows[static_cast<size_t>(i)])});
    return out;
}

}  // namespace

TEST_CASE("erk plan: single layer gets the global density exactly") {
    ErkPlan plan = erk_plan({{10, 10}}, 0.25);
    CHECK(plan.density[0] == doctest::Approx(0.25));
    CHECK(plan.total_active == 25);
}

TEST_CASE("erk plan: two linear layers solve the hand-derived scaling") {
    // raw_1 = 20/100 = 0.2, raw_2 = 200/10000 = 0.02
    // eps = 0.1*10100 / (0.2*100 + 0.02*10000) = 1010/220
    ErkPlan plan = erk_plan({{10, 10}, {100, 100}}, 0.1);
    const double eps = 1010.0 / 220.0;
    CHECK(plan.density[0] == doctest::Approx(0.2 * eps).epsilon(1e-12));
    CHECK(plan.density[1] == doctest::Approx(0.02 * eps).epsilon(1e-12));
    std::vector<Shape> shapes{{10, 10}, {100, 100}};
    CHECK(std::abs(plan.weighted_mean_density(shapes) - 0.1) < 1e-9);
    CHECK(plan.active[0] + plan.active[1] == 1010);
}

TEST_CASE("erk plan: clamping redistributes and stays feasible") {
    // tiny layer clamps dense at high density
    ErkPlan plan = erk_plan({{2, 2}, {100, 100}}, 0.5);
    for (double d : plan.density) {
        CHECK(d >= 0.0);
        CHECK(d <= 1.0);
    }
    std::vector<Shape> shapes{{2, 2}, {100, 100}};
    CHECK(std::abs(plan.weighted_mean_density(shapes) - 0.5) < 1e-9);

    CHECK_THROWS_AS(erk_plan({{4, 4}}, 1.5), std::invalid_argument);
    CHECK_THROWS_AS(erk_plan({{4, 4}}, 0.0), std::invalid_argument);
}

TEST_CASE("erk init: exact global count at extreme density") {
    east::Rng rng(3);
    std::vector<MaskedParamD> storage;
    storage.reserve(6);
    std::vector<MaskedParamD*> params;
    for (int l = 0; l < 6; ++l) {
        storage.push_back(MaskedParamD(("l" + std::to_string(l)).c_str(),
                                       {8 << (l % 3), 8 << ((l + 1) % 3), 3, 3}));
        params.push_back(&storage.back());
    }
    int64_t total = 0;
    for (auto* p : params) total += p->dense_count();
    ErkPlan plan = erk_init(params, 0.0005, 777);
    CHECK(plan.total_active == std::llround(0.0005 * static_cast<double>(total)));
    int64_t recount = 0;
    for (auto* p : params) {
        recount += p->recount();
        CHECK(p->recount() == p->active_count);
        // pruned entries exactly zero
        for (int64_t i = 0; i < p->dense_count(); ++i)
            if (!p->active(i)) CHECK(p->weights.data()[static_cast<size_t>(i)] == 0.0);
    }
    CHECK(recount == plan.total_active);

    // determinism: same seed, same masks
    std::vector<MaskedParamD> storage2 = storage;
    std::vector<MaskedParamD*> params2;
    for (auto& p : storage2) params2.push_back(&p);
    erk_init(params2, 0.0005, 777);
    for (size_t l = 0; l < params.size(); ++l) CHECK(params[l]->mask == params2[l]->mask);
}

TEST_CASE("magnitude_prune matches the spec example") {
    MaskedParamD p("w", {4});
    const double vals[] = {0.5, -0.1, 0.3, -0.7};
    for (int64_t i = 0; i < 4; ++i) {
        p.set_active(i, true);
        p.weights.data()[static_cast<size_t>(i)] = vals[i];
    }
    std::vector<MaskedParamD*> params{&p};
    CHECK(magnitude_prune(params, 2) == 2);
    CHECK(!p.active(1));  // -0.1
    CHECK(!p.active(2));  // 0.3
    CHECK(p.active(0));
    CHECK(p.active(3));
    CHECK(p.weights.data()[1] == 0.0);
    CHECK(p.weights.data()[2] == 0.0);

    CHECK(magnitude_prune(params, 0) == 0);
    CHECK(p.active_count == 2);
    CHECK_THROWS_AS(magnitude_prune(params, -1), std::invalid_argument);
}

TEST_CASE("prune ties break toward the lower flat index") {
    MaskedParamD p("w", {4});
    for (int64_t i = 0; i < 4; ++i) {
        p.set_active(i, true);
        p.weights.data()[static_cast<size_t>(i)] = 0.5;  // all tied
    }
    std::vector<MaskedParamD*> params{&p};
    magnitude_prune(params, 2);
    CHECK(!p.active(0));
    CHECK(!p.active(1));
    CHECK(p.active(2));
    CHECK(p.active(3));
}

TEST_CASE("gradient_grow matches the spec example and handles edges") {
    MaskedParamD p("w", {3});
    p.weights.grad();  // allocate dense grad
    p.weights.node()->grad = {0.9, 0.05, 0.4};
    std::vector<MaskedParamD*> params{&p};

    CHECK(gradient_grow(params, 1) == 1);
    CHECK(p.active(0));
    CHECK(p.active_count == 1);
    CHECK(p.weights.data()[0] == 0.0);  // grown weights start at zero

    CHECK(gradient_grow(params, 0) == 0);
    CHECK(gradient_grow(params, 2) == 2);  // grow all remaining -> all ones
    CHECK(p.active_count == 3);

    MaskedParamD q("q", {3});
    std::vector<MaskedParamD*> qs{&q};
    CHECK_THROWS_AS(gradient_grow(qs, 1), std::runtime_error);  // no dense gradient
}

TEST_CASE("prune/grow selections equal the brute-force stable sort") {
    east::Rng rng(17);
    for (int trial = 0; trial < 60; ++trial) {
        const int64_t n = 1 + static_cast<int64_t>(rng.below(1000));
        MaskedParamD p("w", {n});
        auto g = p.weights.grad();
        for (int64_t i = 0; i < n; ++i) {
            if (rng.uniform() < 0.6) p.set_active(i, true);
            p.weights.data()[static_cast<size_t>(i)] =
                p.active(i) ? rng.normal() : 0.0;
            g[static_cast<size_t>(i)] = rng.normal();
        }
        // quantize some values to force ties
        if (trial % 3 == 0)
            for (auto& v : p.weights.data()) v = std::round(v * 4.0) / 4.0;

        std::vector<MaskedParamD*> params{&p};
        const int64_t kp = static_cast<int64_t>(rng.below(static_cast<uint64_t>(p.active_count + 1)));
        auto expect_prune = prune_oracle(params, kp);
        auto before = p.mask;
        magnitude_prune(params, kp);
        std::set<std::pair<int, int64_t>> got;
        for (int64_t i = 0; i < n; ++i)
            if (before[static_cast<size_t>(i)] && !p.active(i)) got.insert({0, i});
        REQUIRE(got == expect_prune);

        const int64_t inactive = n - p.active_count;
        const int64_t kg = static_cast<int64_t>(rng.below(static_cast<uint64_t>(inactive + 1)));
        auto expect_grow = grow_oracle(params, kg);
        auto before2 = p.mask;
        gradient_grow(params, kg);
        got.clear();
        for (int64_t i = 0; i < n; ++i)
            if (!before2[static_cast<size_t>(i)] && p.active(i)) got.insert({0, i});
        REQUIRE(got == expect_grow);
    }
}

TEST_CASE("random_grow is uniform over inactive positions") {
    east::Rng rng(23);
    int counts[4] = {0, 0, 0, 0};
    const int trials = 10000;
    for (int t = 0; t < trials; ++t) {
        MaskedParamD p("w", {4});
        std::vector<MaskedParamD*> params{&p};
        random_grow(params, 1, rng);
        for (int64_t i = 0; i < 4; ++i)
            if (p.active(i)) ++counts[i];
    }
    // binomial(10000, 1/4): sigma ~ 43.3; allow 3 sigma
    for (int i = 0; i < 4; ++i) CHECK(std::abs(counts[i] - 2500) < 130);
}

TEST_CASE("cyclic_target hits the cosine landmarks") {
    TopologySettings s;
    s.s_max = 0.99;
    s.s_min = 0.97;
    s.n_cycles = 1;
    s.cycle_iters = 1000;
    MaskedParamD p("w", {10});
    TopologyControllerD ctrl(s, {&p});
    CHECK(std::abs(ctrl.cyclic_target(0) - 0.99) < 1e-12);
    CHECK(std::abs(ctrl.cyclic_target(1000) - 0.99) < 1e-12);
    CHECK(std::abs(ctrl.cyclic_target(500) - 0.97) < 1e-12);
    CHECK(std::abs(ctrl.cyclic_target(250) - 0.98) < 1e-12);

    TopologySettings low = s;
    low.start_low = true;
    TopologyControllerD ctrl2(low, {&p});
    CHECK(std::abs(ctrl2.cyclic_target(0) - 0.97) < 1e-12);
}

TEST_CASE("sparsity_min_from_multiplier") {
    CHECK(sparsity_min_from_multiplier(0.999, 3.0) == doctest::Approx(0.997));
    CHECK(sparsity_min_from_multiplier(0.99, 3.0) == doctest::Approx(0.97));
}

TEST_CASE("topology controller: fixed phase preserves sparsity exactly") {
    east::Rng rng(31);
    std::vector<MaskedParamD> storage;
    std::vector<MaskedParamD*> params;
    storage.reserve(4);
    for (int l = 0; l < 4; ++l) {
        storage.push_back(make_param(("l" + std::to_string(l)).c_str(), {25, 10}, rng, 0.4));
        params.push_back(&storage.back());
    }
    TopologySettings s;
    s.schedule = ScheduleMode::Static;
    s.update_every_fixed = 10;
    s.prune_rate = 0.1;
    s.s_max = 0.9;
    s.s_min = 0.5;
    TopologyControllerD ctrl(s, params);
    const int64_t active0 = ctrl.active_total();
    for (int64_t t = 10; t <= 100; t += 10) {
        REQUIRE(ctrl.is_update_step(t));
        // fresh dense grads for regrowth scoring
        for (auto* p : params) {
            auto g = p->weights.grad();
            for (auto& v : g) v = rng.normal();
        }
        auto act = ctrl.update(t);
        CHECK(act.pruned == act.grown);
        CHECK(ctrl.active_total() == active0);
        CHECK(ctrl.active_total() == ctrl.target_active());
    }
}

TEST_CASE("fixed phase: pruned weights are not regrown in the same update") {
    east::Rng rng(37);
    MaskedParamD p = make_param("w", {40}, rng, 0.5);
    std::vector<MaskedParamD*> params{&p};
    TopologySettings s;
    s.schedule = ScheduleMode::Static;
    s.update_every_fixed = 1;
    s.prune_rate = 0.25;
    s.s_max = 0.99;
    s.s_min = 0.5;
    TopologyControllerD ctrl(s, params);
    const int64_t active0 = p.active_count;
    REQUIRE(active0 > 4);
    REQUIRE(active0 < 40);
    // huge gradients everywhere make just-pruned positions the most tempting
    // regrowth targets; the exclusion must still win
    auto g = p.weights.grad();
    for (auto& v : g) v = 100.0 + rng.uniform();
    auto before = p.mask;
    auto act = ctrl.update(1);
    CHECK(act.pruned == std::llround(0.25 * static_cast<double>(active0)));
    CHECK(act.grown == act.pruned);
    int64_t regrown_same_update = 0;
    for (int64_t i = 0; i < 40; ++i)
        if (before[static_cast<size_t>(i)] && p.active(i) &&
            p.weights.data()[static_cast<size_t>(i)] == 0.0) {
            // active before and after but zeroed -> would mean prune+regrow
            ++regrown_same_update;
        }
    CHECK(regrown_same_update == 0);
    CHECK(ctrl.active_total() == active0);
}

TEST_CASE("cyclic updates land on the bookkept target exactly") {
    east::Rng rng(41);
    std::vector<MaskedParamD> storage;
    std::vector<MaskedParamD*> params;
    storage.reserve(3);
    for (int l = 0; l < 3; ++l) {
        storage.push_back(MaskedParamD(("l" + std::to_string(l)).c_str(), {30, 20}));
        params.push_back(&storage.back());
    }
    TopologySettings s;
    s.s_max = 0.95;
    s.s_min = 0.80;
    s.n_cycles = 2;
    s.cycle_iters = 100;
    s.update_every_cyclic = 7;  // deliberately not dividing the period
    s.update_every_fixed = 10;
    s.seed = 5;
    TopologyControllerD ctrl(s, params);
    ctrl.init_masks();
    CHECK(ctrl.active_total() == ctrl.target_active());

    for (int64_t t = 1; t <= 300; ++t) {
        if (!ctrl.is_update_step(t)) continue;
        for (auto* p : params) {
            auto g = p->weights.grad();
            for (auto& v : g) v = rng.normal();
        }
        ctrl.update(t);
        REQUIRE(ctrl.active_total() == ctrl.target_active());
        // masked zeros invariant
        for (auto* p : params)
            for (int64_t i = 0; i < p->dense_count(); ++i)
                if (!p->active(i)) REQUIRE(p->weights.data()[static_cast<size_t>(i)] == 0.0);
        const double sp = ctrl.current_sparsity();
        CHECK(sp >= s.s_min - 1e-9);
        CHECK(sp <= s.s_max + 1e-9);
    }
}

TEST_CASE("global_sparsity with and without a denominator override") {
    MaskedParamD p("w", {100, 100});
    for (int64_t i = 0; i < 100; ++i) p.set_active(i, true);
    std::vector<MaskedParamD*> params{&p};
    CHECK(global_sparsity(params) == doctest::Approx(0.99));
    // sharing doubles the theoretical count
    CHECK(global_sparsity(params, 20000) == doctest::Approx(0.995));

    MaskedParamD full("f", {50});
    for (int64_t i = 0; i < 50; ++i) full.set_active(i, true);
    std::vector<MaskedParamD*> fp{&full};
    CHECK(global_sparsity(fp) == doctest::Approx(0.0));
}

TEST_CASE("erk property: weighted mean density equals the target on random layer sets") {
    east::Rng rng(71);
    for (int trial = 0; trial < 50; ++trial) {
        const int layers = 2 + static_cast<int>(rng.below(8));
        std::vector<Shape> shapes;
        for (int l = 0; l < layers; ++l) {
            if (rng.uniform() < 0.5)
                shapes.push_back({static_cast<int64_t>(2 + rng.below(60)),
                                  static_cast<int64_t>(2 + rng.below(60))});
            else
                shapes.push_back({static_cast<int64_t>(1 + rng.below(30)),
                                  static_cast<int64_t>(1 + rng.below(30)), 3, 3});
        }
        const double density = 0.01 + 0.6 * rng.uniform();
        ErkPlan plan = erk_plan(shapes, density);
        REQUIRE(std::abs(plan.weighted_mean_density(shapes) - density) < 1e-9);
        int64_t total = 0, capacity = 0;
        for (size_t l = 0; l < shapes.size(); ++l) {
            REQUIRE(plan.density[l] >= 0.0);
            REQUIRE(plan.density[l] <= 1.0);
            REQUIRE(plan.active[l] <= shape_numel(shapes[l]));
            REQUIRE(plan.active[l] >= 0);
            total += plan.active[l];
            capacity += shape_numel(shapes[l]);
        }
        REQUIRE(total == plan.total_active);
        REQUIRE(plan.total_active == std::llround(density * static_cast<double>(capacity)));
    }
}

TEST_CASE("erk at extreme density on the desk resnet hits the exact round target") {
    ModelD m = ModelD::build(resnet20_desk(), 5);
    auto params = m.masked_params();
    int64_t total = 0;
    for (auto* p : params) total += p->dense_count();
    ErkPlan plan = erk_init(params, 0.0001, 99);
    CHECK(plan.total_active == std::llround(0.0001 * static_cast<double>(total)));
    int64_t recount = 0;
    for (auto* p : params) {
        CHECK(p->recount() >= 0);
        recount += p->recount();
    }
    CHECK(recount == plan.total_active);
}

TEST_CASE("fixed phase with r_p 0.1 on 1000 active prunes and grows exactly 100") {
    east::Rng rng(83);
    MaskedParamD p("w", {2000});
    auto g = p.weights.grad();
    for (int64_t i = 0; i < 1000; ++i) {
        p.set_active(i, true);
        p.weights.data()[static_cast<size_t>(i)] = rng.normal();
    }
    for (auto& v : g) v = rng.normal();
    std::vector<MaskedParamD*> params{&p};
    TopologySettings s;
    s.schedule = ScheduleMode::Static;
    s.update_every_fixed = 1;
    s.prune_rate = 0.1;
    s.s_max = 0.9;
    s.s_min = 0.5;
    TopologyControllerD ctrl(s, params);
    auto act = ctrl.update(1);
    CHECK(act.pruned == 100);
    CHECK(act.grown == 100);
    CHECK(ctrl.active_total() == 1000);
}
