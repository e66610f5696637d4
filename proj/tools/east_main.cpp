#include <sys/wait.h>
#include <unistd.h>

#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "east/flops.hpp"
#include "east/trainer.hpp"

namespace {

using namespace east;

std::vector<std::string> split_list(const std::string& csv) {
    std::vector<std::string> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int cmd_train(const std::string& config_path, int64_t seed_override,
              const std::string& out_override, bool deterministic) {
    RunConfig cfg = load_config_file(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (!out_override.empty()) cfg.out_dir = out_override;
    if (deterministic) cfg.deterministic = true;

    Trainer trainer(cfg);
    RunResult res = trainer.run();
    Census census = trainer.model().census();
    std::cout << "run '" << cfg.name << "' finished\n"
              << "  steps:            " << res.steps << "\n"
              << "  final test acc:   " << res.final_test_accuracy << "\n"
              << "  final test loss:  " << res.final_test_loss << "\n"
              << "  final sparsity:   " << res.final_sparsity << "\n"
              << "  unique active:    " << census.unique_active << " / "
              << census.masked_theoretical << "\n"
              << "  trainable params: " << census.trainable_now() << "\n"
              << "  metrics:          " << res.metrics_path << "\n"
              << "  checkpoint:       " << res.checkpoint_path << "\n";
    return 0;
}

struct CompareJob {
    std::string config_path;
    std::string name;
    uint64_t seed;
    std::string out_dir;
};

// Each run in its own process (the run is single-threaded; parallelism
// comes from running several configs at once).
int run_jobs_forked(const std::vector<CompareJob>& jobs, int max_parallel) {
    char self[4096];
    const ssize_t n = readlink("/proc/self/exe", self, sizeof(self) - 1);
    if (n <= 0) {
        std::cerr << "compare: cannot resolve own binary for --jobs > 1\n";
        return 1;
    }
    self[n] = '\0';

    size_t next = 0;
    int running = 0, failures = 0;
    while (next < jobs.size() || running > 0) {
        while (next < jobs.size() && running < max_parallel) {
            const auto& job = jobs[next++];
            const pid_t pid = fork();
            if (pid == 0) {
                const std::string seed = std::to_string(job.seed);
                execl(self, self, "train", "--config", job.config_path.c_str(), "--seed",
                      seed.c_str(), "--out", job.out_dir.c_str(), "--deterministic",
                      static_cast<char*>(nullptr));
                std::perror("execl");
                _exit(127);
            }
            if (pid < 0) {
                std::perror("fork");
                return 1;
            }
            ++running;
        }
        int status = 0;
        if (waitpid(-1, &status, 0) > 0) {
            --running;
            if (!WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
        }
    }
    return failures;
}

int cmd_compare(const std::string& configs_csv, const std::string& seeds_csv,
                const std::string& out_dir, int jobs) {
    const auto config_paths = split_list(configs_csv);
    std::vector<uint64_t> seeds;
    for (const auto& s : split_list(seeds_csv)) seeds.push_back(std::stoull(s));
    if (config_paths.empty() || seeds.empty()) {
        std::cerr << "compare: need at least one config and one seed\n";
        return 1;
    }
    std::filesystem::create_directories(out_dir);

    std::vector<CompareJob> all;
    for (const auto& path : config_paths) {
        RunConfig cfg = load_config_file(path);  // validates early
        for (uint64_t seed : seeds)
            all.push_back({path, cfg.name, seed,
                           out_dir + "/" + cfg.name + "-s" + std::to_string(seed)});
    }

    if (jobs > 1) {
        if (int failures = run_jobs_forked(all, jobs)) {
            std::cerr << "compare: " << failures << " run(s) failed\n";
            return 1;
        }
    } else {
        for (const auto& job : all) {
            RunConfig cfg = load_config_file(job.config_path);
            cfg.seed = job.seed;
            cfg.out_dir = job.out_dir;
            cfg.deterministic = true;
            std::cout << "running " << job.name << " seed " << job.seed << "...\n";
            Trainer(cfg).run();
        }
    }

    std::vector<RunDigest> digests;
    for (const auto& job : all)
        digests.push_back(digest_run(job.name, job.seed, job.out_dir + "/metrics.csv"));
    const auto rows = write_compare_outputs(digests, out_dir);

    std::cout << "\n" << std::left << std::setw(28) << "config" << std::right << std::setw(6)
              << "runs" << std::setw(12) << "acc med" << std::setw(12) << "acc min"
              << std::setw(12) << "acc max" << std::setw(14) << "grad5 med" << "\n";
    for (const auto& r : rows)
        std::cout << std::left << std::setw(28) << r.config << std::right << std::setw(6)
                  << r.runs << std::setw(12) << r.acc_median << std::setw(12) << r.acc_min
                  << std::setw(12) << r.acc_max << std::setw(14) << r.grad5_median << "\n";
    std::cout << "\nsummary: " << out_dir << "/summary.csv\ncurves:  " << out_dir
              << "/curves.csv\n";
    return 0;
}

int cmd_flops(const std::string& arch_arg, double density, bool sharing, int64_t input,
              int64_t classes, bool uniform) {
    ArchSpec spec;
    if (arch_arg.size() > 5 && arch_arg.substr(arch_arg.size() - 5) == ".json") {
        spec = load_config_file(arch_arg).arch;
    } else {
        spec = arch_preset(arch_arg, classes);
        if (input > 0) spec.input = {spec.input[0], input, input};
    }
    if (sharing) spec.sharing.enabled = true;

    const FlopsReport rep = density >= 1.0 ? flops_report_dense(spec)
                                           : flops_report(spec, density, !uniform);
    std::cout << std::left << std::setw(16) << "site" << std::right << std::setw(14)
              << "dense MACs" << std::setw(10) << "density" << std::setw(16) << "sparse MACs"
              << "  shared\n";
    for (const auto& row : rep.rows)
        std::cout << std::left << std::setw(16) << row.name << std::right << std::setw(14)
                  << row.macs_dense << std::setw(10) << std::setprecision(4) << row.density
                  << std::setw(16) << std::setprecision(8) << row.macs_sparse << "  "
                  << (row.shared_reuse ? "yes" : "") << "\n";
    std::cout << "\ntotal dense MACs:   " << rep.total_macs_dense << "  ("
              << static_cast<double>(rep.total_macs_dense) / 1e6 << "M, "
              << rep.flops_dense() / 1e6 << "M FLOPs at 2 per MAC)\n"
              << "total sparse MACs:  " << rep.total_macs_sparse << "  ("
              << rep.total_macs_sparse / 1e6 << "M, " << rep.ratio_vs_dense() << "x dense)\n"
              << "params theoretical: " << rep.census.theoretical << "\n"
              << "params stored:      " << rep.census.stored << "  (N_s = "
              << rep.census.n_shared << ", scaling scalars = " << rep.census.gamma_count
              << ")\n"
              << "unique active:      " << rep.census.unique_active << "\n";
    return 0;
}

int cmd_inspect(const std::string& path) {
    const CheckpointInfo info = checkpoint_inspect(path);
    std::cout << "checkpoint " << path << "\n  version:     " << info.version
              << "\n  config hash: " << std::hex << info.meta.config_hash << std::dec
              << "\n  step/epoch:  " << info.meta.step << "/" << info.meta.epoch
              << "\n  beta:        " << info.meta.beta << "\n  layers:\n";
    int64_t active = 0, dense = 0;
    for (const auto& l : info.layers) {
        const int64_t n = shape_numel(l.shape);
        active += l.active;
        dense += n;
        std::cout << "    " << std::left << std::setw(16) << l.name << std::right
                  << std::setw(14) << shape_str(l.shape) << std::setw(10) << l.active << "/"
                  << n << "  (" << std::setprecision(4)
                  << static_cast<double>(l.active) / static_cast<double>(n) << ")\n";
    }
    std::cout << "  stored active/total: " << active << "/" << dense << "\n";
    if (!info.stage_donors.empty()) {
        std::cout << "  stage donors:";
        for (int r : info.stage_donors) std::cout << " " << r;
        std::cout << "\n";
    }
    for (const auto& [recipient, donor] : info.shared_refs)
        std::cout << "  shared: " << recipient << " -> " << donor << "\n";
    if (info.has_controller)
        std::cout << "  controller: sparsity " << info.s_current << ", target active "
                  << info.target_active << ", remainder " << info.remainder << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"EAST sparse-training experiments"};
    app.require_subcommand(1);

    std::string config_path, out_dir, configs_csv, seeds_csv = "1", arch_arg = "resnet50",
                               ckpt_path;
    int64_t seed_override = -1, input = 0, classes = 10;
    bool deterministic = false, sharing = false, uniform = false;
    double density = 1.0;
    int jobs = 1;

    auto* train = app.add_subcommand("train", "train one configuration");
    train->add_option("--config", config_path, "JSON run configuration")->required();
    train->add_option("--seed", seed_override, "override the config seed");
    train->add_option("--out", out_dir, "override the output directory");
    train->add_flag("--deterministic", deterministic,
                    "single-threaded run with zeroed wallclock column");

    auto* compare = app.add_subcommand("compare", "run configs over shared seeds and summarize");
    compare->add_option("--configs", configs_csv, "comma-separated config files")->required();
    compare->add_option("--seeds", seeds_csv, "comma-separated seeds (default 1)");
    compare->add_option("--out", out_dir, "output directory")->required();
    compare->add_option("--jobs", jobs, "parallel training processes (default 1)");

    auto* flops = app.add_subcommand("flops", "symbolic FLOP and parameter accounting");
    flops->add_option("--arch", arch_arg, "preset (resnet20/resnet34/resnet50/mlp) or config.json");
    flops->add_option("--density", density, "global density (1 = dense)");
    flops->add_flag("--sharing", sharing, "enable the default weight-sharing plan");
    flops->add_flag("--uniform", uniform, "uniform per-layer density instead of ERK");
    flops->add_option("--input", input, "square input resolution override");
    flops->add_option("--classes", classes, "output classes");

    auto* inspect = app.add_subcommand("inspect", "describe a checkpoint file");
    inspect->add_option("--checkpoint", ckpt_path, "checkpoint path")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (train->parsed()) return cmd_train(config_path, seed_override, out_dir, deterministic);
        if (compare->parsed()) return cmd_compare(configs_csv, seeds_csv, out_dir, jobs);
        if (flops->parsed())
            return cmd_flops(arch_arg, density, sharing, input, classes, uniform);
        if (inspect->parsed()) return cmd_inspect(ckpt_path);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
