#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

namespace east {

struct MetricRow {
    int64_t step = 0;
    int64_t epoch = 0;
    std::string split;  // "train" or "test"
    double loss = 0;
    double accuracy = 0;
    double s_current = 0;
    int64_t active_count = 0;
    double beta = 0;
    double grad_norm_sum = 0;
    double positive_preact_fraction = 0;
    double wallclock = 0;
};

inline constexpr const char* kMetricHeader =
    "step,epoch,split,loss,accuracy,s_current,active_count,beta,grad_norm_sum,"
    "positive_preact_fraction,wallclock";

/// Append-only CSV writer with a fixed header and stable float formatting.
class MetricSink {
public:
    explicit MetricSink(const std::string& path);
    void write(const MetricRow& row);
    void flush() { out_.flush(); }
    const std::string& path() const { return path_; }

private:
    std::string path_;
    std::ofstream out_;
};

std::vector<MetricRow> read_metrics(const std::string& path);

/// Per-run digest used by the compare tool.
struct RunDigest {
    std::string config;
    uint64_t seed = 0;
    double final_test_accuracy = 0;
    double final_test_loss = 0;
    double final_sparsity = 0;
    double grad_norm_first5_median = 0;  // median logged train grad_norm_sum, epochs 0-4
    std::string metrics_path;
};

RunDigest digest_run(const std::string& config_name, uint64_t seed,
                     const std::string& metrics_path);

/// Writes summary.csv (per config: median/min/max final accuracy, gradient
/// flow) and curves.csv (long form, per config/seed/epoch) under out_dir.
/// Returns the summary rows keyed by config name.
struct CompareSummaryRow {
    std::string config;
    int runs = 0;
    double acc_median = 0, acc_min = 0, acc_max = 0;
    double grad5_median = 0;
    double final_sparsity = 0;
};

std::vector<CompareSummaryRow> write_compare_outputs(const std::vector<RunDigest>& digests,
                                                     const std::string& out_dir);

}  // namespace east
