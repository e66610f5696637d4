#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "east/erk.hpp"
#include "east/masked.hpp"
#include "east/optim.hpp"
#include "east/rng.hpp"

namespace east {

enum class RegrowthMode { Gradient, Random };
enum class ScheduleMode { Cyclic, Static };

struct TopologySettings {
    double s_max = 0.99;
    double s_min = 0.97;          // see sparsity_min_from_multiplier
    int n_cycles = 2;             // cosine periods run back-to-back
    int64_t cycle_iters = 1000;   // period of one cosine cycle, in iterations
    int64_t update_every_cyclic = 100;  // dT while t <= cyclic_end
    int64_t update_every_fixed = 1000;  // dT in the fixed-update phase
    double prune_rate = 0.3;            // r_p for the fixed phase
    RegrowthMode regrowth = RegrowthMode::Gradient;
    ScheduleMode schedule = ScheduleMode::Cyclic;
    bool per_layer = false;  // select prune/grow candidates per layer instead of globally
    bool start_low = false;  // half-period phase offset: cycle starts at s_min
    uint64_t seed = 1;

    int64_t cyclic_end() const { return static_cast<int64_t>(n_cycles) * cycle_iters; }
};

/// s_min derived from the maximum parameter multiplier m:
/// density_min = m * density_max.
inline double sparsity_min_from_multiplier(double s_max, double m) {
    return 1.0 - m * (1.0 - s_max);
}

struct TopologyAction {
    int64_t step = 0;
    int64_t pruned = 0;
    int64_t grown = 0;
    double target_sparsity = 0;
    double sparsity_after = 0;
    bool cyclic_phase = false;
};

/// Deactivates the `count` smallest-magnitude active weights across the
/// param set (ties broken by lower flat index, layers in registry order).
/// Pruned weights are zeroed, as are their momentum entries when an
/// optimizer is attached. Returns the number actually pruned.
template <class Real>
int64_t magnitude_prune(const std::vector<MaskedParamT<Real>*>& params, int64_t count,
                        SgdMomentumT<Real>* opt = nullptr);

/// Activates the `count` inactive positions with the largest dense-gradient
/// magnitude. New weights start at zero with zeroed momentum. `exclude`
/// marks positions barred from regrowth (used for prune/grow disjointness
/// within one update).
template <class Real>
int64_t gradient_grow(const std::vector<MaskedParamT<Real>*>& params, int64_t count,
                      SgdMomentumT<Real>* opt = nullptr,
                      const std::vector<std::vector<uint8_t>>* exclude = nullptr);

/// As gradient_grow but uniform over the inactive positions.
template <class Real>
int64_t random_grow(const std::vector<MaskedParamT<Real>*>& params, int64_t count, Rng& rng,
                    SgdMomentumT<Real>* opt = nullptr,
                    const std::vector<std::vector<uint8_t>>* exclude = nullptr);

/// Shared-parameter sparsity: 1 - (active bits of unique learnable tensors) /
/// (theoretical dense count). The denominator defaults to the params' own
/// dense sizes; pass the architecture total when weight sharing replaces
/// tensors that must still be counted.
template <class Real>
double global_sparsity(const std::vector<MaskedParamT<Real>*>& params,
                       int64_t denominator_override = 0);

/// Owns the sparsity state machine: the cosine schedule while t <= T_c and
/// the constant-sparsity prune/regrow regime afterwards. Counts are rounded
/// to nearest with a carried remainder so long-run totals are exact.
template <class Real>
class TopologyControllerT {
public:
    TopologyControllerT(TopologySettings settings, std::vector<MaskedParamT<Real>*> params,
                        int64_t denominator_override = 0);

    /// ERK mask + weight init at density 1 - s_max (measured against the
    /// denominator).
    ErkPlan init_masks();

    bool is_update_step(int64_t t) const;

    /// Runs one topology update at iteration t (caller gates on
    /// is_update_step). Dense gradients are read from the params' grad
    /// buffers; a zero-count update is a no-op, never an error.
    TopologyAction update(int64_t t, SgdMomentumT<Real>* opt = nullptr);

    double cyclic_target(int64_t t) const;

    double current_sparsity() const;
    int64_t target_active() const { return target_active_; }
    int64_t active_total() const;   // fresh recount
    int64_t dense_total() const { return physical_total_; }
    int64_t denominator() const { return denominator_; }
    const TopologySettings& settings() const { return settings_; }
    const std::vector<MaskedParamT<Real>*>& params() const { return params_; }

    // Schedule state, exposed for checkpointing.
    double remainder() const { return remainder_; }
    void restore_state(int64_t target_active, double remainder, const std::string& rng_state);
    std::string rng_state() const;

private:
    TopologySettings settings_;
    std::vector<MaskedParamT<Real>*> params_;
    int64_t physical_total_ = 0;
    int64_t denominator_ = 0;
    int64_t target_active_ = 0;
    double remainder_ = 0;
    Rng rng_;
};

using TopologyController = TopologyControllerT<float>;
using TopologyControllerD = TopologyControllerT<double>;

}  // namespace east
