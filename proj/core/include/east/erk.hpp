#pragma once

#include <cstdint>
#include <vector>

#include "east/masked.hpp"
#include "east/rng.hpp"
#include "east/tensor.hpp"

namespace east {

/// Per-layer density allocation under the Erdos-Renyi-Kernel rule:
/// density_l proportional to sum(dims)/prod(dims), scaled to hit the global
/// density, with layers clamping at 1 and their excess redistributed until
/// the allocation is feasible.
struct ErkPlan {
    std::vector<double> density;   // per layer, in [0,1]
    std::vector<int64_t> active;   // integer allocation, sums to total_active
    double global_density = 0;
    int64_t total_active = 0;      // round(global_density * sum(dense sizes))

    double weighted_mean_density(const std::vector<Shape>& shapes) const;
};

/// Real-valued ERK allocation plus a largest-remainder integer rounding so
/// that the total active count is exact. Throws when the requested density
/// cannot be met (every layer clamps dense). `total_override`, when >= 0,
/// pins the integer total instead of round(density * N).
ErkPlan erk_plan(const std::vector<Shape>& layer_shapes, double global_density,
                 int64_t total_override = -1);

/// Plans densities for `params`, places mask bits uniformly at random
/// without replacement, and re-initializes kept weights with Kaiming fan-in
/// scaling (pruned entries are exactly zero).
template <class Real>
ErkPlan erk_init(const std::vector<MaskedParamT<Real>*>& params, double global_density,
                 uint64_t seed, int64_t total_override = -1);

}  // namespace east
