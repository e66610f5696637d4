#pragma once

#include <cstdint>
#include <string>

#include "east/arch.hpp"
#include "east/dataset.hpp"
#include "east/topology.hpp"

namespace east {

/// One experiment, fully described. ΔT and the cycle length are given in the
/// natural units of the paper's tables (iterations and epochs); the trainer
/// converts epochs to iterations once the dataset size is known.
struct RunConfig {
    std::string name = "run";
    ArchSpec arch;
    DatasetSpec data;

    int64_t epochs = 20;
    int64_t batch_size = 128;
    double lr = 0.1;
    std::vector<int64_t> lr_drop_epochs;  // divide lr by the factor at each
    double lr_drop_factor = 10.0;
    double momentum = 0.9;
    double weight_decay = 1e-4;
    double grad_clip = 0;  // global L2 clip over all gradients, 0 = off
    int64_t log_every = 50;

    bool topology_enabled = true;
    double s_max = 0.99;
    double multiplier = 3.0;    // m: density_min = m * density_max
    double s_min_override = 0;  // > 0 replaces the multiplier rule
    ScheduleMode schedule = ScheduleMode::Cyclic;
    RegrowthMode regrowth = RegrowthMode::Gradient;
    int n_cycles = 2;
    double cycle_epochs = 4.0;       // l, per cycle
    int64_t update_every_cyclic = 100;  // dT_cs in iterations
    int64_t update_every_fixed = 800;   // dT_dst in iterations
    double prune_rate = 0.3;  // r_p
    int64_t stop_updates_epoch = 0;  // no topology updates from this epoch on; 0 = never stop
    bool per_layer = false;
    bool start_low = false;

    double phasing_start = 0;  // T_s, epochs
    double phasing_end = -1;   // T_e; < 0 defaults to the epoch before the first lr drop

    uint64_t seed = 1;
    std::string out_dir = "runs/out";
    bool deterministic = false;

    double resolved_s_min() const {
        return s_min_override > 0 ? s_min_override
                                  : sparsity_min_from_multiplier(s_max, multiplier);
    }
    double resolved_phasing_end() const {
        if (phasing_end >= 0) return phasing_end;
        if (!lr_drop_epochs.empty())
            return static_cast<double>(lr_drop_epochs.front() > 1 ? lr_drop_epochs.front() - 1
                                                                  : 1);
        return static_cast<double>(epochs) / 2.0;
    }

    /// Throws std::invalid_argument when any field violates its contract.
    void validate() const;
};

RunConfig parse_config_json(const std::string& text);
RunConfig load_config_file(const std::string& path);

/// Canonical textual form used for hashing (stable field order).
std::string canonical_config(const RunConfig& cfg);
uint64_t config_hash(const RunConfig& cfg);

}  // namespace east
