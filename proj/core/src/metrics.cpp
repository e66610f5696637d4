#include "east/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <stdexcept>

namespace east {

namespace {

std::string fmt(double v) {
    std::ostringstream os;
    os.precision(9);
    os << v;
    return os.str();
}

double median(std::vector<double> v) {
    if (v.empty()) return 0;
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<std::string> split_csv(const std::string& line) {
    std::vector<std::string> out;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) out.push_back(field);
    return out;
}

}  // namespace

MetricSink::MetricSink(const std::string& path) : path_(path), out_(path, std::ios::trunc) {
    if (!out_) throw std::runtime_error("metrics: cannot open " + path);
    out_ << kMetricHeader << "\n";
}

void MetricSink::write(const MetricRow& r) {
    out_ << r.step << ',' << r.epoch << ',' << r.split << ',' << fmt(r.loss) << ','
         << fmt(r.accuracy) << ',' << fmt(r.s_current) << ',' << r.active_count << ','
         << fmt(r.beta) << ',' << fmt(r.grad_norm_sum) << ','
         << fmt(r.positive_preact_fraction) << ',' << fmt(r.wallclock) << "\n";
}

std::vector<MetricRow> read_metrics(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("metrics: cannot open " + path);
    std::string line;
    if (!std::getline(in, line) || line != kMetricHeader)
        throw std::runtime_error("metrics: unexpected header in " + path);
    std::vector<MetricRow> rows;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto f = split_csv(line);
        if (f.size() != 11) throw std::runtime_error("metrics: malformed row in " + path);
        MetricRow r;
        r.step = std::stoll(f[0]);
        r.epoch = std::stoll(f[1]);
        r.split = f[2];
        r.loss = std::stod(f[3]);
        r.accuracy = std::stod(f[4]);
        r.s_current = std::stod(f[5]);
        r.active_count = std::stoll(f[6]);
        r.beta = std::stod(f[7]);
        r.grad_norm_sum = std::stod(f[8]);
        r.positive_preact_fraction = std::stod(f[9]);
        r.wallclock = std::stod(f[10]);
        rows.push_back(std::move(r));
    }
    return rows;
}

RunDigest digest_run(const std::string& config_name, uint64_t seed,
                     const std::string& metrics_path) {
    RunDigest d;
    d.config = config_name;
    d.seed = seed;
    d.metrics_path = metrics_path;
    std::vector<double> grad5;
    for (const auto& r : read_metrics(metrics_path)) {
        if (r.split == "test") {
            d.final_test_accuracy = r.accuracy;
            d.final_test_loss = r.loss;
            d.final_sparsity = r.s_current;
        } else if (r.epoch < 5) {
            grad5.push_back(r.grad_norm_sum);
        }
    }
    d.grad_norm_first5_median = median(std::move(grad5));
    return d;
}

std::vector<CompareSummaryRow> write_compare_outputs(const std::vector<RunDigest>& digests,
                                                     const std::string& out_dir) {
    std::map<std::string, std::vector<const RunDigest*>> by_config;
    std::vector<std::string> order;
    for (const auto& d : digests) {
        if (!by_config.count(d.config)) order.push_back(d.config);
        by_config[d.config].push_back(&d);
    }

    std::ofstream summary(out_dir + "/summary.csv", std::ios::trunc);
    if (!summary) throw std::runtime_error("compare: cannot write to " + out_dir);
    summary << "config,runs,final_acc_median,final_acc_min,final_acc_max,"
               "grad_norm_first5_median,final_sparsity\n";

    std::vector<CompareSummaryRow> rows;
    for (const auto& name : order) {
        const auto& runs = by_config[name];
        std::vector<double> accs, grads;
        for (const auto* d : runs) {
            accs.push_back(d->final_test_accuracy);
            grads.push_back(d->grad_norm_first5_median);
        }
        CompareSummaryRow row;
        row.config = name;
        row.runs = static_cast<int>(runs.size());
        row.acc_median = median(accs);
        row.acc_min = *std::min_element(accs.begin(), accs.end());
        row.acc_max = *std::max_element(accs.begin(), accs.end());
        row.grad5_median = median(grads);
        row.final_sparsity = runs.front()->final_sparsity;
        summary << row.config << ',' << row.runs << ',' << fmt(row.acc_median) << ','
                << fmt(row.acc_min) << ',' << fmt(row.acc_max) << ',' << fmt(row.grad5_median)
                << ',' << fmt(row.final_sparsity) << "\n";
        rows.push_back(row);
    }

    // long-form per-epoch curves: accuracy, gradient flow, density
    std::ofstream curves(out_dir + "/curves.csv", std::ios::trunc);
    curves << "config,seed,epoch,test_accuracy,test_loss,mean_grad_norm,density,beta\n";
    for (const auto& d : digests) {
        std::map<int64_t, std::pair<double, int>> grad_by_epoch;
        std::map<int64_t, MetricRow> test_by_epoch;
        for (const auto& r : read_metrics(d.metrics_path)) {
            if (r.split == "test") {
                test_by_epoch[r.epoch] = r;
            } else {
                auto& acc = grad_by_epoch[r.epoch];
                acc.first += r.grad_norm_sum;
                acc.second += 1;
            }
        }
        for (const auto& [epoch, row] : test_by_epoch) {
            const auto it = grad_by_epoch.find(epoch);
            const double mean_grad =
                it != grad_by_epoch.end() && it->second.second
                    ? it->second.first / it->second.second
                    : 0.0;
            curves << d.config << ',' << d.seed << ',' << epoch << ',' << fmt(row.accuracy)
                   << ',' << fmt(row.loss) << ',' << fmt(mean_grad) << ','
                   << fmt(1.0 - row.s_current) << ',' << fmt(row.beta) << "\n";
        }
    }
    return rows;
}

}  // namespace east
