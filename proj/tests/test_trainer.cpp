#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "east/trainer.hpp"
#include "testutil.hpp"

using namespace east;

namespace {

std::string tmp_dir(const std::string& name) {
    auto p = std::filesystem::temp_directory_path() / name;
    std::filesystem::create_directories(p);
    return p.string();
}

RunConfig smoke_config(const std::string& out, uint64_t seed = 1) {
    RunConfig c;
    c.name = "smoke";
    c.arch.family = ArchFamily::ResnetBasic;
    c.arch.widths = {4, 8};
    c.arch.blocks = {2, 2};
    c.arch.input = {3, 8, 8};
    c.data.kind = DatasetSpec::Kind::Synthetic;
    c.data.sample_shape = {3, 8, 8};
    c.data.train_size = 200;
    c.data.test_size = 60;
    c.data.seed = 11;
    c.epochs = 2;
    c.batch_size = 20;  // 10 steps per epoch
    c.lr = 0.05;
    c.log_every = 5;
    c.s_max = 0.9;
    c.multiplier = 2.0;       // s_min = 0.8
    c.n_cycles = 1;
    c.cycle_epochs = 0.8;     // cycle of 8 iterations
    c.update_every_cyclic = 2;
    c.update_every_fixed = 5;
    c.prune_rate = 0.2;
    c.seed = seed;
    c.out_dir = out;
    c.deterministic = true;
    return c;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    REQUIRE(in);
    return std::string(std::istreambuf_iterator<char>(in), {});
}

}  // namespace

TEST_CASE("grad_norm_sum examples") {
    MaskedParam p("w", {2});
    p.set_active(0, true);
    p.set_active(1, true);
    p.weights.grad();
    p.weights.node()->grad = {3.0f, 4.0f};
    std::vector<MaskedParam*> params{&p};
    CHECK(grad_norm_sum(params) == doctest::Approx(5.0));

    p.weights.node()->grad = {0.0f, 0.0f};
    CHECK(grad_norm_sum(params) == 0.0);

    // multi-layer: sum of per-layer norms, masked entries excluded
    MaskedParam q("q", {3});
    q.set_active(0, true);  // only one active entry counts
    q.weights.grad();
    q.weights.node()->grad = {2.0f, 100.0f, 100.0f};
    std::vector<MaskedParam*> both{&p, &q};
    p.weights.node()->grad = {3.0f, 4.0f};
    double expected = 5.0 + 2.0;
    CHECK(grad_norm_sum(both) == doctest::Approx(expected));
}

TEST_CASE("2-epoch smoke run: completes and lands on the configured sparsity") {
    const std::string dir = tmp_dir("east_smoke");
    RunConfig cfg = smoke_config(dir);
    Trainer t(cfg);
    RunResult res = t.run();
    CHECK(res.steps == 20);

    auto* topo = t.topology();
    REQUIRE(topo != nullptr);
    // cycle ends inside the run and dT divides the period, so the final
    // count equals the s_max target exactly
    const int64_t target = std::llround((1.0 - cfg.s_max) *
                                        static_cast<double>(topo->denominator()));
    CHECK(topo->active_total() == target);
    CHECK(topo->active_total() == topo->target_active());
    CHECK(std::filesystem::exists(res.metrics_path));
    CHECK(std::filesystem::exists(res.checkpoint_path));

    // metric rows parse and contain both splits plus update-aligned rows
    auto rows = read_metrics(res.metrics_path);
    int train_rows = 0, test_rows = 0;
    for (const auto& r : rows) {
        if (r.split == "train") ++train_rows;
        if (r.split == "test") ++test_rows;
        CHECK(r.s_current >= 0.0);
        CHECK(r.s_current <= 1.0);
        CHECK(r.grad_norm_sum >= 0.0);
    }
    CHECK(test_rows == cfg.epochs);
    CHECK(train_rows >= 8);  // every update step logs a row
    std::filesystem::remove_all(dir);
}

TEST_CASE("identical seeds produce byte-identical metric files") {
    const std::string d1 = tmp_dir("east_det1");
    const std::string d2 = tmp_dir("east_det2");
    RunConfig c1 = smoke_config(d1, 5);
    RunConfig c2 = smoke_config(d2, 5);
    Trainer(c1).run();
    Trainer(c2).run();
    CHECK(slurp(d1 + "/metrics.csv") == slurp(d2 + "/metrics.csv"));

    const std::string d3 = tmp_dir("east_det3");
    RunConfig c3 = smoke_config(d3, 6);
    Trainer(c3).run();
    CHECK(slurp(d1 + "/metrics.csv") != slurp(d3 + "/metrics.csv"));
    std::filesystem::remove_all(d1);
    std::filesystem::remove_all(d2);
    std::filesystem::remove_all(d3);
}

TEST_CASE("static schedule with gradient regrowth and relu runs the baseline loop") {
    const std::string dir = tmp_dir("east_rigl");
    RunConfig cfg = smoke_config(dir);
    cfg.schedule = ScheduleMode::Static;
    cfg.update_every_fixed = 4;
    Trainer t(cfg);
    t.run();
    auto* topo = t.topology();
    const int64_t target = std::llround((1.0 - cfg.s_max) *
                                        static_cast<double>(topo->denominator()));
    // sparsity constant across every update
    CHECK(topo->active_total() == target);
    for (const auto& r : read_metrics(dir + "/metrics.csv"))
        CHECK(r.s_current == doctest::Approx(topo->current_sparsity()).epsilon(1e-7));
    std::filesystem::remove_all(dir);
}

TEST_CASE("learning-rate schedule drops at the configured epochs") {
    const std::string dir = tmp_dir("east_lr");
    RunConfig cfg = smoke_config(dir);
    cfg.epochs = 4;
    cfg.lr = 0.1;
    cfg.lr_drop_epochs = {2, 3};
    cfg.lr_drop_factor = 10.0;
    Trainer t(cfg);
    t.run();
    // after running, optimizer holds the last epoch's lr: 0.1/100
    CHECK(t.optimizer().lr() == doctest::Approx(0.001));
    std::filesystem::remove_all(dir);
}

TEST_CASE("dyrelu phasing follows the schedule and drops parameters") {
    const std::string dir = tmp_dir("east_phase");
    RunConfig cfg = smoke_config(dir);
    cfg.arch.activation = ActivationMode::DyreluPhased;
    cfg.arch.dyrelu_reduction = 4;
    cfg.epochs = 4;
    cfg.phasing_start = 0;
    cfg.phasing_end = 2;
    Trainer t(cfg);
    t.run();
    CHECK_FALSE(t.model().any_dyrelu_alive());
    auto rows = read_metrics(dir + "/metrics.csv");
    double beta_e0 = -1, beta_e1 = -1, beta_e3 = -1;
    for (const auto& r : rows) {
        if (r.epoch == 0 && r.split == "train") beta_e0 = r.beta;
        if (r.epoch == 1 && r.split == "train") beta_e1 = r.beta;
        if (r.epoch == 3 && r.split == "train") beta_e3 = r.beta;
    }
    CHECK(beta_e0 == 1.0);
    CHECK(beta_e1 == 0.5);
    CHECK(beta_e3 == 0.0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("config json round trips through the parser") {
    const std::string text = R"({
      "name": "json-test",
      "arch": {"preset": "resnet20", "activation": "dyrelu-phased",
               "sharing": {"enabled": true, "donor": 2}},
      "data": {"kind": "synthetic", "shape": [3, 32, 32], "train_size": 512,
               "test_size": 128, "seed": 9},
      "train": {"epochs": 3, "batch_size": 64, "lr": 0.2,
                "lr_drop_epochs": [2], "weight_decay": 0.0001},
      "topology": {"s_max": 0.99, "multiplier": 3, "schedule": "cyclic",
                   "regrowth": "random", "n_cycles": 2, "cycle_epochs": 0.5,
                   "dt_cyclic": 2, "dt_fixed": 8, "prune_rate": 0.3},
      "phasing": {"start_epoch": 0, "end_epoch": 1},
      "seed": 42,
      "out_dir": "runs/json-test"
    })";
    RunConfig c = parse_config_json(text);
    CHECK(c.name == "json-test");
    CHECK(c.arch.family == ArchFamily::ResnetBasic);
    CHECK(c.arch.widths == std::vector<int64_t>{16, 32, 64});
    CHECK(c.arch.activation == ActivationMode::DyreluPhased);
    CHECK(c.arch.sharing.enabled);
    CHECK(c.data.train_size == 512);
    CHECK(c.epochs == 3);
    CHECK(c.regrowth == RegrowthMode::Random);
    CHECK(c.resolved_s_min() == doctest::Approx(0.97));
    CHECK(c.resolved_phasing_end() == 1.0);
    CHECK(c.seed == 42);
    CHECK(config_hash(c) == config_hash(parse_config_json(text)));

    // invariant violations are rejected
    CHECK_THROWS_AS(parse_config_json(R"({"train": {"epochs": 0}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_json(R"({"topology": {"s_max": 1.5}})"), std::invalid_argument);
    CHECK_THROWS_AS(parse_config_json(
                        R"({"arch": {"preset": "mlp", "activation": "dyrelu-phased"},
                            "train": {"lr_drop_epochs": [3]},
                            "phasing": {"end_epoch": 9}})"),
                    std::invalid_argument);
}

TEST_CASE("compare digests and summary outputs") {
    const std::string dir = tmp_dir("east_compare");
    std::vector<RunDigest> digests;
    for (uint64_t seed : {1, 2, 3}) {
        RunConfig cfg = smoke_config(dir + "/a_" + std::to_string(seed), seed);
        cfg.name = "method-a";
        RunResult r = Trainer(cfg).run();
        digests.push_back(digest_run("method-a", seed, r.metrics_path));
    }
    for (uint64_t seed : {1, 2, 3}) {
        RunConfig cfg = smoke_config(dir + "/b_" + std::to_string(seed), seed);
        cfg.name = "method-b";
        cfg.schedule = ScheduleMode::Static;
        RunResult r = Trainer(cfg).run();
        digests.push_back(digest_run("method-b", seed, r.metrics_path));
    }
    auto rows = write_compare_outputs(digests, dir);
    REQUIRE(rows.size() == 2);
    CHECK(rows[0].config == "method-a");
    CHECK(rows[0].runs == 3);
    CHECK(rows[0].acc_min <= rows[0].acc_median);
    CHECK(rows[0].acc_median <= rows[0].acc_max);
    CHECK(std::filesystem::exists(dir + "/summary.csv"));
    CHECK(std::filesystem::exists(dir + "/curves.csv"));

    // identical configs under two names give identical medians
    std::vector<RunDigest> twin;
    for (const auto& d : digests)
        if (d.config == "method-a") {
            twin.push_back(d);
            RunDigest copy = d;
            copy.config = "method-a-again";
            twin.push_back(copy);
        }
    auto rows2 = write_compare_outputs(twin, dir);
    REQUIRE(rows2.size() == 2);
    CHECK(rows2[0].acc_median == rows2[1].acc_median);
    std::filesystem::remove_all(dir);
}

TEST_CASE("global gradient clipping preserves direction and bounds the norm") {
    SgdMomentumD opt(0.1, 0.0, 0.0);
    TensorD p({3}, {1.0, 2.0, 3.0}, true);
    MaskedParamD mp("w", {2});
    mp.set_active(0, true);  // entry 1 stays masked
    opt.add_param(p);
    opt.add_masked(&mp);
    p.grad();
    p.node()->grad = {3.0, 0.0, 4.0};  // norm 5 from the dense part
    mp.weights.grad();
    mp.weights.node()->grad = {0.0, 100.0};  // masked-out grad must not count

    opt.clip_gradients(2.5);  // norm 5 -> scale 0.5
    CHECK(p.node()->grad[0] == doctest::Approx(1.5));
    CHECK(p.node()->grad[2] == doctest::Approx(2.0));
    CHECK(mp.weights.node()->grad[1] == doctest::Approx(50.0));  // scaled uniformly

    // under the limit: untouched
    opt.clip_gradients(100.0);
    CHECK(p.node()->grad[0] == doctest::Approx(1.5));
    // disabled: untouched
    opt.clip_gradients(0.0);
    CHECK(p.node()->grad[0] == doctest::Approx(1.5));
}

TEST_CASE("topology updates land exactly on dT-divisible steps") {
    const std::string dir = tmp_dir("east_dt_align");
    RunConfig cfg = smoke_config(dir);
    cfg.schedule = ScheduleMode::Static;
    cfg.update_every_fixed = 7;
    Trainer t(cfg);
    t.run();
    // active_count in the metric rows only moves at multiples of dT; with a
    // static schedule it never moves at all, so probe the cyclic run instead
    RunConfig cyc = smoke_config(dir + "/cyc");
    cyc.update_every_cyclic = 3;
    Trainer t2(cyc);
    t2.run();
    int64_t prev_active = -1;
    for (const auto& r : read_metrics(dir + "/cyc/metrics.csv")) {
        if (r.split != "train") continue;
        if (prev_active >= 0 && r.active_count != prev_active) {
            // a change became visible at this logged row: the row is either
            // an update step itself or later than one; update rows are logged,
            // so the first row showing the change must be the update step
            const bool cyclic_phase = r.step <= 8;  // n=1 cycle of 8 iters
            const int64_t dt = cyclic_phase ? 3 : cyc.update_every_fixed;
            CHECK(r.step % dt == 0);
        }
        prev_active = r.active_count;
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("per-site preactivation rows are written alongside the metrics") {
    const std::string dir = tmp_dir("east_preact");
    RunConfig cfg = smoke_config(dir);
    Trainer t(cfg);
    t.run();
    std::ifstream in(dir + "/preact.csv");
    REQUIRE(in);
    std::string header;
    std::getline(in, header);
    CHECK(header == "step,layer_id,positive_fraction,beta");
    size_t rows = 0;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ++rows;
    }
    // one row per activation site per logged train step
    CHECK(rows % t.model().act_site_names().size() == 0);
    CHECK(rows > 0);
    std::filesystem::remove_all(dir);
}

TEST_CASE("topology updates freeze at stop_updates_epoch") {
    const std::string dir = tmp_dir("east_stop");
    RunConfig cfg = smoke_config(dir);
    cfg.schedule = ScheduleMode::Static;
    cfg.update_every_fixed = 3;
    cfg.epochs = 4;
    cfg.stop_updates_epoch = 2;  // epochs 2 and 3 must not touch the masks
    Trainer t(cfg);
    t.run();
    std::vector<uint8_t> mask_after = t.model().masked_params()[0]->mask;

    // rows beyond epoch 1 never change the active count
    int64_t frozen_active = -1;
    for (const auto& r : read_metrics(dir + "/metrics.csv")) {
        if (r.epoch < 2) continue;
        if (frozen_active < 0) frozen_active = r.active_count;
        CHECK(r.active_count == frozen_active);
    }
    std::filesystem::remove_all(dir);
}
