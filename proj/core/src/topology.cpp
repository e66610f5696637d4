#include "east/topology.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace east {

namespace {

struct Candidate {
    double key;     // |weight| or |grad|
    int64_t gidx;   // global flat index for tie-breaking
    int32_t layer;
    int64_t idx;
};

template <class Real>
std::vector<int64_t> layer_offsets(const std::vector<MaskedParamT<Real>*>& params) {
    std::vector<int64_t> off(params.size() + 1, 0);
    for (size_t l = 0; l < params.size(); ++l) off[l + 1] = off[l] + params[l]->dense_count();
    return off;
}

/// Rounds real-valued shares of `total` to integers summing to `total`,
/// largest fractional remainder first, respecting per-entry caps.
std::vector<int64_t> distribute_counts(int64_t total, const std::vector<double>& weight,
                                       const std::vector<int64_t>& cap) {
    const size_t L = weight.size();
    double wsum = 0;
    for (double w : weight) wsum += w;
    std::vector<int64_t> out(L, 0);
    if (total <= 0 || wsum <= 0) return out;
    std::vector<std::pair<double, size_t>> rema(L);
    int64_t allocated = 0;
    for (size_t l = 0; l < L; ++l) {
        const double exact = static_cast<double>(total) * weight[l] / wsum;
        out[l] = std::min(static_cast<int64_t>(std::floor(exact)), cap[l]);
        allocated += out[l];
        rema[l] = {exact - std::floor(exact), l};
    }
    std::stable_sort(rema.begin(), rema.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    int64_t deficit = total - allocated;
    for (size_t pass = 0; deficit > 0; pass = (pass + 1) % L) {
        const size_t l = rema[pass].second;
        if (out[l] < cap[l]) {
            ++out[l];
            --deficit;
        }
        bool any_room = false;
        for (size_t j = 0; j < L; ++j) any_room |= out[j] < cap[j];
        if (!any_room) break;
    }
    return out;
}

template <class Real>
void apply_prune(MaskedParamT<Real>& p, int64_t idx, SgdMomentumT<Real>* opt) {
    p.set_active(idx, false);
    p.weights.data()[static_cast<size_t>(idx)] = Real(0);
    if (opt)
        if (auto* v = opt->velocity_for(p.weights.raw())) (*v)[static_cast<size_t>(idx)] = Real(0);
}

template <class Real>
void apply_grow(MaskedParamT<Real>& p, int64_t idx, SgdMomentumT<Real>* opt) {
    p.set_active(idx, true);
    p.weights.data()[static_cast<size_t>(idx)] = Real(0);
    if (opt)
        if (auto* v = opt->velocity_for(p.weights.raw())) (*v)[static_cast<size_t>(idx)] = Real(0);
}

}  // namespace

template <class Real>
int64_t magnitude_prune(const std::vector<MaskedParamT<Real>*>& params, int64_t count,
                        SgdMomentumT<Real>* opt) {
    if (count < 0)
        throw std::invalid_argument("magnitude_prune: negative count " + std::to_string(count));
    if (count == 0) return 0;
    const auto off = layer_offsets(params);

    std::vector<Candidate> cand;
    for (size_t l = 0; l < params.size(); ++l) {
        const auto& p = *params[l];
        const auto w = p.weights.data();
        for (int64_t i = 0; i < p.dense_count(); ++i)
            if (p.active(i))
                cand.push_back({std::abs(static_cast<double>(w[static_cast<size_t>(i)])),
                                off[l] + i, static_cast<int32_t>(l), i});
    }
    const int64_t k = std::min<int64_t>(count, static_cast<int64_t>(cand.size()));
    // total order (|w| asc, flat index asc) makes the selection identical to
    // a stable full sort by magnitude
    auto cmp = [](const Candidate& a, const Candidate& b) {
        return a.key != b.key ? a.key < b.key : a.gidx < b.gidx;
    };
    if (k < static_cast<int64_t>(cand.size()))
        std::nth_element(cand.begin(), cand.begin() + k, cand.end(), cmp);
    for (int64_t i = 0; i < k; ++i)
        apply_prune(*params[static_cast<size_t>(cand[static_cast<size_t>(i)].layer)],
                    cand[static_cast<size_t>(i)].idx, opt);
    return k;
}

template <class Real>
int64_t gradient_grow(const std::vector<MaskedParamT<Real>*>& params, int64_t count,
                      SgdMomentumT<Real>* opt, const std::vector<std::vector<uint8_t>>* exclude) {
    if (count < 0)
        throw std::invalid_argument("gradient_grow: negative count " + std::to_string(count));
    if (count == 0) return 0;
    const auto off = layer_offsets(params);

    std::vector<Candidate> cand;
    for (size_t l = 0; l < params.size(); ++l) {
        const auto& p = *params[l];
        if (!p.weights.has_grad())
            throw std::runtime_error("gradient_grow: no dense gradient for layer '" + p.name +
                                     "'");
        const auto g = p.weights.node()->grad;
        for (int64_t i = 0; i < p.dense_count(); ++i) {
            if (p.active(i)) continue;
            if (exclude && (*exclude)[l][static_cast<size_t>(i)]) continue;
            cand.push_back({std::abs(static_cast<double>(g[static_cast<size_t>(i)])), off[l] + i,
                            static_cast<int32_t>(l), i});
        }
    }
    const int64_t k = std::min<int64_t>(count, static_cast<int64_t>(cand.size()));
    auto cmp = [](const Candidate& a, const Candidate& b) {
        return a.key != b.key ? a.key > b.key : a.gidx < b.gidx;
    };
    if (k < static_cast<int64_t>(cand.size()))
        std::nth_element(cand.begin(), cand.begin() + k, cand.end(), cmp);
    for (int64_t i = 0; i < k; ++i)
        apply_grow(*params[static_cast<size_t>(cand[static_cast<size_t>(i)].layer)],
                   cand[static_cast<size_t>(i)].idx, opt);
    return k;
}

template <class Real>
int64_t random_grow(const std::vector<MaskedParamT<Real>*>& params, int64_t count, Rng& rng,
                    SgdMomentumT<Real>* opt, const std::vector<std::vector<uint8_t>>* exclude) {
    if (count < 0)
        throw std::invalid_argument("random_grow: negative count " + std::to_string(count));
    if (count == 0) return 0;

    std::vector<std::pair<int32_t, int64_t>> cand;
    for (size_t l = 0; l < params.size(); ++l) {
        const auto& p = *params[l];
        for (int64_t i = 0; i < p.dense_count(); ++i) {
            if (p.active(i)) continue;
            if (exclude && (*exclude)[l][static_cast<size_t>(i)]) continue;
            cand.push_back({static_cast<int32_t>(l), i});
        }
    }
    const int64_t k = std::min<int64_t>(count, static_cast<int64_t>(cand.size()));
    for (int64_t i = 0; i < k; ++i) {
        const int64_t j =
            i + static_cast<int64_t>(rng.below(static_cast<uint64_t>(cand.size() - i)));
        std::swap(cand[static_cast<size_t>(i)], cand[static_cast<size_t>(j)]);
        apply_grow(*params[static_cast<size_t>(cand[static_cast<size_t>(i)].first)],
                   cand[static_cast<size_t>(i)].second, opt);
    }
    return k;
}

template <class Real>
double global_sparsity(const std::vector<MaskedParamT<Real>*>& params,
                       int64_t denominator_override) {
    int64_t active = 0, dense = 0;
    for (const auto* p : params) {
        active += p->active_count;
        dense += p->dense_count();
    }
    const int64_t denom = denominator_override > 0 ? denominator_override : dense;
    return 1.0 - static_cast<double>(active) / static_cast<double>(denom);
}

template <class Real>
TopologyControllerT<Real>::TopologyControllerT(TopologySettings settings,
                                               std::vector<MaskedParamT<Real>*> params,
                                               int64_t denominator_override)
    : settings_(settings), params_(std::move(params)), rng_(settings.seed) {
    if (!(settings_.s_max > 0 && settings_.s_max < 1) ||
        !(settings_.s_min > 0 && settings_.s_min < 1) || settings_.s_min > settings_.s_max)
        throw std::invalid_argument("topology: require 0 < s_min <= s_max < 1, got s_min=" +
                                    std::to_string(settings_.s_min) +
                                    " s_max=" + std::to_string(settings_.s_max));
    for (const auto* p : params_) physical_total_ += p->dense_count();
    denominator_ = denominator_override > 0 ? denominator_override : physical_total_;
    for (const auto* p : params_) target_active_ += p->active_count;
}

template <class Real>
ErkPlan TopologyControllerT<Real>::init_masks() {
    const int64_t target =
        std::llround((1.0 - settings_.s_max) * static_cast<double>(denominator_));
    const double physical_density =
        static_cast<double>(target) / static_cast<double>(physical_total_);
    if (physical_density >= 1.0)
        throw std::invalid_argument(
            "topology: sparsity " + std::to_string(settings_.s_max) +
            " requires more active weights than the stored tensors can hold");
    ErkPlan plan = erk_init(params_, physical_density, settings_.seed, target);
    target_active_ = plan.total_active;
    remainder_ = 0;
    return plan;
}

template <class Real>
bool TopologyControllerT<Real>::is_update_step(int64_t t) const {
    if (t <= 0) return false;
    const bool cyclic =
        settings_.schedule == ScheduleMode::Cyclic && t <= settings_.cyclic_end();
    const int64_t dt = cyclic ? settings_.update_every_cyclic : settings_.update_every_fixed;
    return dt > 0 && t % dt == 0;
}

template <class Real>
double TopologyControllerT<Real>::cyclic_target(int64_t t) const {
    const double two_pi = 6.283185307179586476925286766559;
    const int64_t period = settings_.cycle_iters;
    const int64_t tm = period > 0 ? t % period : 0;
    double phase = two_pi * (static_cast<double>(tm) / static_cast<double>(period));
    if (settings_.start_low) phase += two_pi / 2.0;
    return settings_.s_min +
           (settings_.s_max - settings_.s_min) / 2.0 * (1.0 + std::cos(phase));
}

template <class Real>
double TopologyControllerT<Real>::current_sparsity() const {
    return 1.0 - static_cast<double>(target_active_) / static_cast<double>(denominator_);
}

template <class Real>
int64_t TopologyControllerT<Real>::active_total() const {
    int64_t n = 0;
    for (const auto* p : params_) n += p->recount();
    return n;
}

template <class Real>
TopologyAction TopologyControllerT<Real>::update(int64_t t, SgdMomentumT<Real>* opt) {
    TopologyAction act;
    act.step = t;
    act.cyclic_phase =
        settings_.schedule == ScheduleMode::Cyclic && t <= settings_.cyclic_end();

    auto grow = [&](int64_t k, const std::vector<std::vector<uint8_t>>* exclude) {
        if (settings_.regrowth == RegrowthMode::Random)
            return random_grow(params_, k, rng_, opt, exclude);
        return gradient_grow(params_, k, opt, exclude);
    };

    if (act.cyclic_phase) {
        const double s_target = cyclic_target(t);
        act.target_sparsity = s_target;
        const double delta =
            (s_target - current_sparsity()) * static_cast<double>(denominator_) + remainder_;
        int64_t k = std::llround(delta);
        if (k > 0) {
            k = std::min(k, target_active_);
            act.pruned = magnitude_prune(params_, k, opt);
            target_active_ -= act.pruned;
            remainder_ = delta - static_cast<double>(act.pruned);
        } else if (k < 0) {
            k = std::min(-k, physical_total_ - target_active_);
            act.grown = grow(k, nullptr);
            target_active_ += act.grown;
            remainder_ = delta + static_cast<double>(act.grown);
        } else {
            remainder_ = delta;
        }
    } else {
        act.target_sparsity = current_sparsity();
        int64_t k = std::llround(settings_.prune_rate * static_cast<double>(target_active_));
        if (settings_.per_layer) {
            std::vector<double> w(params_.size());
            std::vector<int64_t> cap(params_.size());
            for (size_t l = 0; l < params_.size(); ++l) {
                w[l] = static_cast<double>(params_[l]->active_count);
                cap[l] = params_[l]->active_count;
            }
            const auto counts = distribute_counts(k, w, cap);
            for (size_t l = 0; l < params_.size(); ++l) {
                if (counts[l] == 0) continue;
                std::vector<MaskedParamT<Real>*> one{params_[l]};
                const auto before = params_[l]->mask;
                const int64_t pr = magnitude_prune(one, counts[l], opt);
                std::vector<std::vector<uint8_t>> excl(1);
                excl[0].assign(static_cast<size_t>(params_[l]->dense_count()), 0);
                for (size_t i = 0; i < before.size(); ++i)
                    excl[0][i] = before[i] && !params_[l]->mask[i];
                const int64_t gr = settings_.regrowth == RegrowthMode::Random
                                       ? random_grow(one, pr, rng_, opt, &excl)
                                       : gradient_grow(one, pr, opt, &excl);
                act.pruned += pr;
                act.grown += gr;
            }
        } else {
            std::vector<std::vector<uint8_t>> before(params_.size());
            for (size_t l = 0; l < params_.size(); ++l)
                before[l].assign(params_[l]->mask.begin(), params_[l]->mask.end());
            act.pruned = magnitude_prune(params_, k, opt);
            std::vector<std::vector<uint8_t>> pruned_now(params_.size());
            for (size_t l = 0; l < params_.size(); ++l) {
                pruned_now[l].assign(static_cast<size_t>(params_[l]->dense_count()), 0);
                for (size_t i = 0; i < before[l].size(); ++i)
                    pruned_now[l][i] = before[l][i] && !params_[l]->mask[i];
            }
            act.grown = grow(act.pruned, &pruned_now);
        }
        target_active_ += act.grown - act.pruned;
    }
    act.sparsity_after = current_sparsity();
    return act;
}

template <class Real>
void TopologyControllerT<Real>::restore_state(int64_t target_active, double remainder,
                                              const std::string& rng_state) {
    target_active_ = target_active;
    remainder_ = remainder;
    if (!rng_state.empty()) {
        std::istringstream is(rng_state);
        is >> rng_.engine();
    }
}

template <class Real>
std::string TopologyControllerT<Real>::rng_state() const {
    std::ostringstream os;
    os << const_cast<Rng&>(rng_).engine();
    return os.str();
}

#define EAST_INSTANTIATE_TOPOLOGY(R)                                                          \
    template int64_t magnitude_prune(const std::vector<MaskedParamT<R>*>&, int64_t,          \
                                     SgdMomentumT<R>*);                                       \
    template int64_t gradient_grow(const std::vector<MaskedParamT<R>*>&, int64_t,            \
                                   SgdMomentumT<R>*, const std::vector<std::vector<uint8_t>>*); \
    template int64_t random_grow(const std::vector<MaskedParamT<R>*>&, int64_t, Rng&,        \
                                 SgdMomentumT<R>*, const std::vector<std::vector<uint8_t>>*); \
    template double global_sparsity(const std::vector<MaskedParamT<R>*>&, int64_t);          \
    template class TopologyControllerT<R>;

EAST_INSTANTIATE_TOPOLOGY(float)
EAST_INSTANTIATE_TOPOLOGY(double)

#undef EAST_INSTANTIATE_TOPOLOGY

}  // namespace east
