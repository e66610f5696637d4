#include "east/optim.hpp"

#include <algorithm>
#include <cmath>

namespace east {

template <class Real>
SgdMomentumT<Real>::SgdMomentumT(Real lr, Real momentum, Real weight_decay)
    : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

template <class Real>
void SgdMomentumT<Real>::add_param(const TensorT<Real>& p, bool apply_weight_decay) {
    dense_.push_back(
        {p, std::vector<Real>(static_cast<size_t>(p.numel()), Real(0)), apply_weight_decay});
}

template <class Real>
void SgdMomentumT<Real>::add_masked(MaskedParamT<Real>* p) {
    masked_.push_back({p, std::vector<Real>(static_cast<size_t>(p->dense_count()), Real(0))});
}

template <class Real>
void SgdMomentumT<Real>::remove_param(const TensorT<Real>& p) {
    std::erase_if(dense_, [&](const DenseEntry& e) { return e.param.raw() == p.raw(); });
}

template <class Real>
void SgdMomentumT<Real>::step() {
    for (auto& e : dense_) {
        auto w = e.param.data();
        if (!e.param.has_grad()) continue;
        auto g = e.param.grad();
        const Real wd = e.decay ? weight_decay_ : Real(0);
        for (size_t i = 0; i < w.size(); ++i) {
            e.velocity[i] = momentum_ * e.velocity[i] + g[i] + wd * w[i];
            w[i] -= lr_ * e.velocity[i];
        }
    }
    for (auto& e : masked_) {
        auto w = e.param->weights.data();
        if (!e.param->weights.has_grad()) continue;
        auto g = e.param->weights.grad();
        const auto& m = e.param->mask;
        for (size_t i = 0; i < w.size(); ++i) {
            if (!m[i]) continue;  // masked grad: inactive velocity stays zero
            e.velocity[i] = momentum_ * e.velocity[i] + g[i] + weight_decay_ * w[i];
            w[i] -= lr_ * e.velocity[i];
        }
        e.param->apply_mask();
    }
}

template <class Real>
void SgdMomentumT<Real>::clip_gradients(Real max_norm) {
    if (max_norm <= Real(0)) return;
    double sq = 0;
    for (auto& e : dense_) {
        if (!e.param.has_grad()) continue;
        for (Real g : e.param.grad()) sq += static_cast<double>(g) * g;
    }
    for (auto& e : masked_) {
        if (!e.param->weights.has_grad()) continue;
        const auto g = e.param->weights.grad();
        for (size_t i = 0; i < g.size(); ++i)
            if (e.param->mask[i]) sq += static_cast<double>(g[i]) * g[i];
    }
    const double norm = std::sqrt(sq);
    if (norm <= static_cast<double>(max_norm)) return;
    const Real scale = static_cast<Real>(static_cast<double>(max_norm) / norm);
    for (auto& e : dense_) {
        if (!e.param.has_grad()) continue;
        for (auto& g : e.param.grad()) g *= scale;
    }
    for (auto& e : masked_) {
        if (!e.param->weights.has_grad()) continue;
        for (auto& g : e.param->weights.grad()) g *= scale;
    }
}

template <class Real>
void SgdMomentumT<Real>::zero_grad() {
    for (auto& e : dense_) e.param.zero_grad();
    for (auto& e : masked_) e.param->weights.zero_grad();
}

template <class Real>
std::vector<Real>* SgdMomentumT<Real>::velocity_for(const TensorNodeT<Real>* node) {
    for (auto& e : dense_)
        if (e.param.raw() == node) return &e.velocity;
    for (auto& e : masked_)
        if (e.param->weights.raw() == node) return &e.velocity;
    return nullptr;
}

template class SgdMomentumT<float>;
template class SgdMomentumT<double>;

}  // namespace east
