#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "east/tensor.hpp"

namespace east {

/// DyReLU-B: per-channel piecewise-linear activation whose K slope/intercept
/// pairs are generated from the input by a small hyper-function
/// (GAP -> FC -> ReLU -> FC -> 2*sigmoid-1 residuals):
///   y_c = max_k { a_k^c(x) * x_c + b_k^c(x) }
///   a_k^c = alpha_k + lambda_a * da_k^c,  b_k^c = lambda_b * db_k^c
/// Base coefficients alpha = (1, 0), so zero residuals reduce it exactly to
/// ReLU.
template <class Real>
struct DyReLUBT {
    int K = 2;
    int64_t channels = 0;
    int64_t hidden = 0;  // channels / reduction, at least 1
    Real lambda_a = Real(1.0);
    Real lambda_b = Real(0.5);
    std::vector<Real> alpha;  // size K

    TensorT<Real> w1, b1;  // [C, hidden], [hidden]
    TensorT<Real> w2, b2;  // [hidden, 2KC], [2KC]

    DyReLUBT(int64_t channels, uint64_t seed, int64_t reduction = 8, int k = 2);

    /// x: [B,C,H,W] or [B,C]; output has the input's shape and is
    /// differentiable through x and the hyper-function parameters.
    TensorT<Real> forward(const TensorT<Real>& x) const;

    std::vector<TensorT<Real>> parameters() const { return {w1, b1, w2, b2}; }
    int64_t param_count() const {
        return w1.numel() + b1.numel() + w2.numel() + b2.numel();
    }

    /// Zeroes the residual stage so the activation equals ReLU exactly.
    void pin_to_relu();
};

/// Linear decay of the DyReLU contribution over [start, end] epochs.
struct PhasingSchedule {
    double start_epoch = 0;  // T_s
    double end_epoch = 1;    // T_e

    double beta(double t) const {
        if (end_epoch <= start_epoch)
            return t >= end_epoch ? 0.0 : 1.0;
        if (t <= start_epoch) return 1.0;
        if (t >= end_epoch) return 0.0;
        return 1.0 - (t - start_epoch) / (end_epoch - start_epoch);
    }
};

/// One activation site: plain ReLU, or DyReLU blended with ReLU by the
/// current beta. At beta = 0 the DyReLU branch is deleted outright so later
/// forwards run as plain ReLU with no extra parameters.
template <class Real>
class PhasedActivationT {
public:
    /// Plain ReLU site.
    PhasedActivationT() = default;
    /// DyReLU-phased site starting at beta = 1.
    PhasedActivationT(int64_t channels, uint64_t seed, int64_t reduction = 8);

    /// When `positive`/`total` are given, counts strictly positive
    /// pre-activation entries into them.
    TensorT<Real> forward(const TensorT<Real>& x, int64_t* positive = nullptr,
                          int64_t* total = nullptr) const;

    /// Updates beta; crossing zero structurally drops the DyReLU branch and
    /// returns its parameter tensors so the caller can deregister them.
    std::vector<TensorT<Real>> set_beta(double beta);

    double beta() const { return beta_; }
    bool dyrelu_alive() const { return dyrelu_ != nullptr; }
    DyReLUBT<Real>* dyrelu() { return dyrelu_.get(); }
    const DyReLUBT<Real>* dyrelu() const { return dyrelu_.get(); }

private:
    std::shared_ptr<DyReLUBT<Real>> dyrelu_;
    double beta_ = 0.0;
};

using DyReLUB = DyReLUBT<float>;
using DyReLUBD = DyReLUBT<double>;
using PhasedActivation = PhasedActivationT<float>;
using PhasedActivationD = PhasedActivationT<double>;

}  // namespace east
