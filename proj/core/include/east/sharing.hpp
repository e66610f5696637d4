#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace east {

/// Intra-stage residual-block weight sharing: in a stage of L blocks, the
/// donor block R (1 < R <= L) lends its main conv tensors (and masks) to
/// every later block; each reuse is scaled by its own learnable scalar.
struct SharingSpec {
    bool enabled = false;
    int default_donor = 2;            // R used where a stage has L >= 3
    std::vector<int> per_stage_r;     // optional per-stage override, 0 = disabled
    bool per_block_gamma = false;     // one scalar per recipient block instead of per conv site
};

/// Donor block for stage `stage_idx` with `blocks` blocks, 0 when sharing is
/// off for that stage. Throws on an explicitly requested donor that violates
/// 1 < R <= L, or on any explicit request for a stage with L < 2.
int resolve_stage_donor(const SharingSpec& spec, int stage_idx, int blocks);

/// Storage lookup of the sharing scheme: block i <= R owns its tensors,
/// later blocks reference block R's.
inline int donor_block(int r, int i) { return (r > 0 && i > r) ? r : i; }

/// Parameter bookkeeping under sharing. `theoretical` counts the unmodified
/// architecture (every block's tensors, shared or not); `stored` is what is
/// physically kept: theoretical - n_shared plus the scaling scalars.
struct Census {
    int64_t theoretical = 0;        // weights + biases + BN affine, no sharing applied
    int64_t n_shared = 0;           // N_s: dense sizes of the replaced tensors
    int64_t gamma_count = 0;        // learnable scaling scalars
    int64_t stored = 0;             // theoretical - n_shared + gamma_count
    int64_t masked_theoretical = 0; // dense size of all prunable tensors incl. replaced ones
    int64_t masked_stored = 0;      // dense size of the unique prunable tensors
    int64_t unique_active = 0;      // live mask bits over unique tensors
    int64_t dyrelu_extra = 0;       // hyper-function params still alive (training-time only)

    /// Trainable parameters right now (sparsity-agnostic).
    int64_t trainable_now() const { return stored + dyrelu_extra; }
    /// Shared-parameter sparsity: 1 - unique_active / masked_theoretical.
    double sparsity() const {
        return 1.0 - static_cast<double>(unique_active) /
                         static_cast<double>(masked_theoretical);
    }
};

}  // namespace east
