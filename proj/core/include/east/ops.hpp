#pragma once

#include <vector>

#include "east/tensor.hpp"

namespace east {

// Primitive differentiable operations. Every op has an exact backward; when a
// tape is active and an input requires a gradient, the output is recorded and
// requires a gradient as well. Shapes are validated eagerly and mismatches
// throw std::invalid_argument naming the offending shapes.

/// [M,K] x [K,N] -> [M,N]
template <class Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b);

/// x: [B,Cin,H,W], w: [Cout,Cin,kh,kw], cross-correlation with uniform
/// stride/padding. Output spatial size must divide exactly.
template <class Real>
TensorT<Real> conv2d(const TensorT<Real>& x, const TensorT<Real>& w, int stride, int padding);

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b);
template <class Real>
TensorT<Real> sub(const TensorT<Real>& a, const TensorT<Real>& b);
template <class Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b);

/// x * c for a plain constant.
template <class Real>
TensorT<Real> scale(const TensorT<Real>& x, Real c);
template <class Real>
TensorT<Real> add_scalar(const TensorT<Real>& x, Real c);

/// x * s where s is a one-element (possibly learnable) tensor.
template <class Real>
TensorT<Real> scale_by(const TensorT<Real>& x, const TensorT<Real>& s);

template <class Real>
TensorT<Real> relu(const TensorT<Real>& x);

/// Elementwise max; on ties the gradient is routed to `a` (the first branch).
template <class Real>
TensorT<Real> maximum(const TensorT<Real>& a, const TensorT<Real>& b);

template <class Real>
TensorT<Real> sigmoid(const TensorT<Real>& x);

template <class Real>
TensorT<Real> reshape(const TensorT<Real>& x, Shape target);

/// [B,...] -> [B, prod(rest)]
template <class Real>
TensorT<Real> flatten(const TensorT<Real>& x);

/// Columns [start, start+len) of a [B,N] tensor.
template <class Real>
TensorT<Real> slice_cols(const TensorT<Real>& x, int64_t start, int64_t len);

/// x: [B,C,H,W] (or [B,C]), s: [B,C]; multiplies/adds per sample and channel,
/// broadcasting over the spatial dims.
template <class Real>
TensorT<Real> mul_channelwise(const TensorT<Real>& x, const TensorT<Real>& s);
template <class Real>
TensorT<Real> add_channelwise(const TensorT<Real>& x, const TensorT<Real>& b);

/// [B,C,H,W] -> [B,C]
template <class Real>
TensorT<Real> global_avg_pool(const TensorT<Real>& x);

/// x: [B,N] + bias [N]
template <class Real>
TensorT<Real> linear_bias_add(const TensorT<Real>& x, const TensorT<Real>& bias);

template <class Real>
TensorT<Real> sum(const TensorT<Real>& x);

/// Mean cross-entropy over the batch, stabilized by max subtraction.
/// logits: [B,C], labels in [0, C).
template <class Real>
TensorT<Real> softmax_cross_entropy(const TensorT<Real>& logits, const std::vector<int>& labels);

/// Batch normalization over [B,C,H,W] with per-channel affine parameters.
/// Training mode normalizes by batch statistics and updates the running
/// buffers in place (momentum 0.1 convention, unbiased variance in the
/// running estimate); eval mode uses the running buffers.
template <class Real>
TensorT<Real> batchnorm2d(const TensorT<Real>& x, const TensorT<Real>& gamma,
                          const TensorT<Real>& beta, std::vector<Real>& running_mean,
                          std::vector<Real>& running_var, bool training,
                          Real momentum = Real(0.1), Real eps = Real(1e-5));

}  // namespace east
