#pragma once

#include <unordered_map>
#include <vector>

#include "east/masked.hpp"
#include "east/tensor.hpp"

namespace east {

/// SGD with momentum and L2 weight decay:
///   v <- momentum * v + grad + weight_decay * param
///   param <- param - lr * v
/// Masked parameters contribute only their masked gradient to the velocity
/// and are re-masked after the update, so inactive weights stay exactly zero.
template <class Real>
class SgdMomentumT {
public:
    explicit SgdMomentumT(Real lr, Real momentum = Real(0.9), Real weight_decay = Real(1e-4));

    void add_param(const TensorT<Real>& p, bool apply_weight_decay = true);
    void add_masked(MaskedParamT<Real>* p);
    /// Drops a dense parameter (and its velocity), e.g. on activation phase-out.
    void remove_param(const TensorT<Real>& p);

    void set_lr(Real lr) { lr_ = lr; }
    Real lr() const { return lr_; }

    void step();
    void zero_grad();

    /// Scales every registered gradient so the global L2 norm is at most
    /// `max_norm` (no-op when already within, or max_norm <= 0).
    void clip_gradients(Real max_norm);

    /// Velocity buffer of a registered parameter, nullptr if unknown.
    std::vector<Real>* velocity_for(const TensorNodeT<Real>* node);

    size_t param_count() const { return dense_.size() + masked_.size(); }
    size_t dense_param_count() const { return dense_.size(); }
    const TensorT<Real>& dense_param(size_t i) const { return dense_[i].param; }
    std::vector<Real>& dense_velocity(size_t i) { return dense_[i].velocity; }

private:
    struct DenseEntry {
        TensorT<Real> param;
        std::vector<Real> velocity;
        bool decay = true;
    };
    struct MaskedEntry {
        MaskedParamT<Real>* param;
        std::vector<Real> velocity;
    };

    Real lr_, momentum_, weight_decay_;
    std::vector<DenseEntry> dense_;
    std::vector<MaskedEntry> masked_;
};

using SgdMomentum = SgdMomentumT<float>;
using SgdMomentumD = SgdMomentumT<double>;

}  // namespace east
