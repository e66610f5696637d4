#pragma once

#include <string>
#include <vector>

#include "east/arch.hpp"

namespace east {

/// Inference cost accounting over the symbolic architecture description.
/// MACs count multiply-accumulates of conv/linear sites only (BN, activation
/// and pooling costs excluded, downsample convs included), the convention of
/// the sparse-training literature this reproduces; reported "FLOPs" follow
/// that same convention, with 2*MACs also available.
struct FlopsRow {
    std::string name;
    int64_t macs_dense = 0;
    double density = 1.0;      // density of the tensor evaluated at this site
    double macs_sparse = 0.0;  // density * macs_dense
    bool shared_reuse = false;
};

struct FlopsReport {
    std::vector<FlopsRow> rows;
    int64_t total_macs_dense = 0;
    double total_macs_sparse = 0;
    Census census;

    double flops_dense() const { return 2.0 * static_cast<double>(total_macs_dense); }
    double flops_sparse() const { return 2.0 * total_macs_sparse; }
    double ratio_vs_dense() const {
        return total_macs_sparse / static_cast<double>(total_macs_dense);
    }
};

/// Report at uniform density 1 (dense network).
FlopsReport flops_report_dense(const ArchSpec& spec);

/// Report at the given shared-parameter density (unique active count =
/// round(density * theoretical masked size)). `erk` distributes the active
/// weights by the ERK rule; otherwise the density is uniform across tensors.
FlopsReport flops_report(const ArchSpec& spec, double global_density, bool erk = true);

/// Report from realized per-owner-tensor densities (index-aligned with the
/// owner sites of describe_arch, e.g. measured from live masks).
FlopsReport flops_report(const ArchSpec& spec, const std::vector<double>& owner_density);

}  // namespace east
