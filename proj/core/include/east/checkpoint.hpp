#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "east/model.hpp"
#include "east/optim.hpp"
#include "east/topology.hpp"

namespace east {

// Binary checkpoint, little-endian throughout:
//   magic "EAST", version u16, config hash u64,
//   masked layers (name, shape, f32 weights, packed LSB-first mask bitset),
//   sharing plan (per-stage donor + recipient->donor name references),
//   dense params and BN running buffers (f32, canonical model order),
//   optimizer velocities, controller state (t, s_current, remainder, rng),
//   activation state (beta, epoch).

struct CheckpointMeta {
    uint64_t config_hash = 0;
    int64_t step = 0;
    int64_t epoch = 0;
    double beta = 0;
};

/// Canonical dense parameter order shared by the optimizer registration and
/// the checkpoint codec: bn affine + biases, sharing gammas, live DyReLU.
std::vector<Tensor> collect_dense_params(Model& model);

void checkpoint_save(const std::string& path, Model& model, SgdMomentum* opt,
                     TopologyController* topo, const CheckpointMeta& meta);

/// Restores into a model freshly built from the same config (the hash is
/// verified). Returns the stored meta. Drops DyReLU branches first when the
/// checkpoint was taken after phase-out.
CheckpointMeta checkpoint_load(const std::string& path, Model& model, SgdMomentum* opt,
                               TopologyController* topo, uint64_t expected_hash);

struct CheckpointLayerInfo {
    std::string name;
    Shape shape;
    int64_t active = 0;
};

struct CheckpointInfo {
    uint16_t version = 0;
    CheckpointMeta meta;
    std::vector<CheckpointLayerInfo> layers;
    std::vector<int> stage_donors;
    std::vector<std::pair<std::string, std::string>> shared_refs;  // recipient -> donor
    int64_t dense_tensors = 0;
    int64_t velocity_tensors = 0;
    bool has_controller = false;
    double s_current = 0;
    double remainder = 0;
    int64_t target_active = 0;
};

CheckpointInfo checkpoint_inspect(const std::string& path);

}  // namespace east
