#pragma once

#include <memory>
#include <string>

#include "east/checkpoint.hpp"
#include "east/config.hpp"
#include "east/dataset.hpp"
#include "east/metrics.hpp"
#include "east/model.hpp"
#include "east/optim.hpp"
#include "east/topology.hpp"

namespace east {

struct RunResult {
    double final_test_accuracy = 0;
    double final_test_loss = 0;
    double final_sparsity = 0;
    int64_t steps = 0;
    std::string metrics_path;
    std::string checkpoint_path;
};

/// Sum over masked weight tensors of the L2 norm of the masked gradient.
double grad_norm_sum(const std::vector<MaskedParam*>& params);

/// One experiment: data, model, optimizer, topology controller, phasing,
/// metric logging and the final checkpoint.
class Trainer {
public:
    explicit Trainer(RunConfig cfg);

    RunResult run();

    /// Mean loss and accuracy over the test split (eval mode).
    std::pair<double, double> evaluate();

    Model& model() { return *model_; }
    SgdMomentum& optimizer() { return *opt_; }
    TopologyController* topology() { return topo_.get(); }
    const RunConfig& config() const { return cfg_; }
    const DataPair& data() const { return data_; }
    int64_t steps_per_epoch() const;

    void save_checkpoint(const std::string& path);
    void load_checkpoint(const std::string& path);

private:
    RunConfig cfg_;
    DataPair data_;
    std::unique_ptr<Model> model_;
    std::unique_ptr<SgdMomentum> opt_;
    std::unique_ptr<TopologyController> topo_;
    int64_t step_ = 0;
    int64_t epoch_ = 0;
    double beta_ = 0;

    void apply_phasing(int64_t epoch);
    double lr_at(int64_t epoch) const;
};

}  // namespace east
