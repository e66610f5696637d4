#include "east/erk.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace east {

double ErkPlan::weighted_mean_density(const std::vector<Shape>& shapes) const {
    double num = 0, den = 0;
    for (size_t l = 0; l < shapes.size(); ++l) {
        const double n = static_cast<double>(shape_numel(shapes[l]));
        num += density[l] * n;
        den += n;
    }
    return num / den;
}

ErkPlan erk_plan(const std::vector<Shape>& layer_shapes, double global_density,
                 int64_t total_override) {
    if (layer_shapes.empty()) throw std::invalid_argument("erk_plan: no layers");
    if (!(global_density > 0.0 && global_density < 1.0))
        throw std::invalid_argument("erk_plan: global density must be in (0,1), got " +
                                    std::to_string(global_density));

    const size_t L = layer_shapes.size();
    std::vector<double> raw(L), n(L);
    double n_total = 0;
    for (size_t l = 0; l < L; ++l) {
        double dim_sum = 0;
        for (int64_t d : layer_shapes[l]) dim_sum += static_cast<double>(d);
        n[l] = static_cast<double>(shape_numel(layer_shapes[l]));
        raw[l] = dim_sum / n[l];
        n_total += n[l];
    }

    std::vector<bool> dense(L, false);
    std::vector<double> density(L, 0.0);
    while (true) {
        double rhs = global_density * n_total;
        double divisor = 0;
        size_t free_layers = 0;
        for (size_t l = 0; l < L; ++l) {
            if (dense[l]) {
                rhs -= n[l];
            } else {
                divisor += raw[l] * n[l];
                ++free_layers;
            }
        }
        if (free_layers == 0 || rhs <= 0)
            throw std::invalid_argument("erk_plan: density " + std::to_string(global_density) +
                                        " infeasible, every layer clamps dense");
        const double eps = rhs / divisor;
        double max_prob = 0;
        for (size_t l = 0; l < L; ++l)
            if (!dense[l]) max_prob = std::max(max_prob, raw[l]);
        if (max_prob * eps > 1.0) {
            for (size_t l = 0; l < L; ++l)
                if (!dense[l] && raw[l] == max_prob) dense[l] = true;
            continue;
        }
        for (size_t l = 0; l < L; ++l) density[l] = dense[l] ? 1.0 : raw[l] * eps;
        break;
    }

    ErkPlan plan;
    plan.density = std::move(density);
    plan.global_density = global_density;
    plan.total_active =
        total_override >= 0 ? total_override : std::llround(global_density * n_total);

    // Largest-remainder rounding to hit the exact global count.
    std::vector<int64_t> active(L);
    std::vector<std::pair<double, size_t>> rema(L);
    int64_t allocated = 0;
    for (size_t l = 0; l < L; ++l) {
        const double exact = plan.density[l] * n[l];
        active[l] = static_cast<int64_t>(std::floor(exact));
        allocated += active[l];
        rema[l] = {exact - std::floor(exact), l};
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    int64_t deficit = plan.total_active - allocated;
    for (size_t pass = 0; deficit > 0; pass = (pass + 1) % L) {
        const size_t l = rema[pass].second;
        if (active[l] < static_cast<int64_t>(n[l])) {
            ++active[l];
            --deficit;
        }
    }
    for (size_t pass = 0; deficit < 0; pass = (pass + 1) % L) {
        const size_t l = rema[L - 1 - pass].second;
        if (active[l] > 0) {
            --active[l];
            ++deficit;
        }
    }
    plan.active = std::move(active);
    return plan;
}

template <class Real>
ErkPlan erk_init(const std::vector<MaskedParamT<Real>*>& params, double global_density,
                 uint64_t seed, int64_t total_override) {
    std::vector<Shape> shapes;
    shapes.reserve(params.size());
    for (const auto* p : params) shapes.push_back(p->weights.shape());
    ErkPlan plan = erk_plan(shapes, global_density, total_override);

    Rng rng(seed);
    for (size_t l = 0; l < params.size(); ++l) {
        MaskedParamT<Real>& p = *params[l];
        const int64_t n = p.dense_count();
        std::fill(p.mask.begin(), p.mask.end(), 0);
        p.active_count = 0;

        // Uniform sample without replacement: partial Fisher-Yates.
        std::vector<int64_t> idx(static_cast<size_t>(n));
        std::iota(idx.begin(), idx.end(), 0);
        for (int64_t k = 0; k < plan.active[l]; ++k) {
            const int64_t j = k + static_cast<int64_t>(rng.below(static_cast<uint64_t>(n - k)));
            std::swap(idx[static_cast<size_t>(k)], idx[static_cast<size_t>(j)]);
            p.set_active(idx[static_cast<size_t>(k)], true);
        }

        const int64_t fan_in =
            p.fan_in > 0 ? p.fan_in : p.dense_count() / p.weights.dim(0);
        const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
        auto w = p.weights.data();
        for (int64_t i = 0; i < n; ++i)
            w[static_cast<size_t>(i)] =
                p.active(i) ? static_cast<Real>(rng.normal(0.0, stddev)) : Real(0);
    }
    return plan;
}

template ErkPlan erk_init(const std::vector<MaskedParamT<float>*>&, double, uint64_t,
                          int64_t);
template ErkPlan erk_init(const std::vector<MaskedParamT<double>*>&, double, uint64_t,
                          int64_t);

}  // namespace east
