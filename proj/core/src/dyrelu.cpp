#include "east/dyrelu.hpp"

#include <cmath>
#include <stdexcept>

#include "east/ops.hpp"
#include "east/rng.hpp"

namespace east {

template <class Real>
DyReLUBT<Real>::DyReLUBT(int64_t C, uint64_t seed, int64_t reduction, int k)
    : K(k), channels(C), hidden(std::max<int64_t>(C / reduction, 1)) {
    alpha.assign(static_cast<size_t>(K), Real(0));
    alpha[0] = Real(1);  // base coefficients (1, 0, ...): identity slope first

    Rng rng(seed);
    w1 = TensorT<Real>({C, hidden}, true);
    b1 = TensorT<Real>({hidden}, true);
    w2 = TensorT<Real>({hidden, 2 * K * C}, true);
    b2 = TensorT<Real>({2 * K * C}, true);
    const double s1 = std::sqrt(2.0 / static_cast<double>(C));
    for (auto& v : w1.data()) v = static_cast<Real>(rng.normal(0.0, s1));
    const double s2 = std::sqrt(2.0 / static_cast<double>(hidden));
    for (auto& v : w2.data()) v = static_cast<Real>(rng.normal(0.0, s2));
}

template <class Real>
void DyReLUBT<Real>::pin_to_relu() {
    std::fill(w2.data().begin(), w2.data().end(), Real(0));
    std::fill(b2.data().begin(), b2.data().end(), Real(0));
}

template <class Real>
TensorT<Real> DyReLUBT<Real>::forward(const TensorT<Real>& x) const {
    const auto& xs = x.shape();
    if (xs.size() != 4 && xs.size() != 2)
        throw std::invalid_argument("dyrelu: expected [B,C,H,W] or [B,C], got " + shape_str(xs));
    if (xs[1] != channels)
        throw std::invalid_argument("dyrelu: configured for " + std::to_string(channels) +
                                    " channels, input is " + shape_str(xs));

    TensorT<Real> ctx = xs.size() == 4 ? global_avg_pool(x) : x;
    TensorT<Real> h = relu(linear_bias_add(matmul(ctx, w1), b1));
    // residuals normalized to (-1, 1)
    TensorT<Real> res =
        add_scalar(scale(sigmoid(linear_bias_add(matmul(h, w2), b2)), Real(2)), Real(-1));

    TensorT<Real> out;
    for (int k = 0; k < K; ++k) {
        TensorT<Real> da = slice_cols(res, static_cast<int64_t>(k) * channels, channels);
        TensorT<Real> db =
            slice_cols(res, static_cast<int64_t>(K + k) * channels, channels);
        TensorT<Real> a = add_scalar(scale(da, lambda_a), alpha[static_cast<size_t>(k)]);
        TensorT<Real> b = scale(db, lambda_b);
        TensorT<Real> branch = add_channelwise(mul_channelwise(x, a), b);
        out = k == 0 ? branch : maximum(out, branch);
    }
    return out;
}

template <class Real>
PhasedActivationT<Real>::PhasedActivationT(int64_t channels, uint64_t seed, int64_t reduction)
    : dyrelu_(std::make_shared<DyReLUBT<Real>>(channels, seed, reduction)), beta_(1.0) {}

template <class Real>
TensorT<Real> PhasedActivationT<Real>::forward(const TensorT<Real>& x, int64_t* positive,
                                               int64_t* total) const {
    if (positive && total) {
        int64_t pos = 0;
        for (Real v : x.data())
            if (v > Real(0)) ++pos;
        *positive += pos;
        *total += x.numel();
    }
    if (!dyrelu_ || beta_ <= 0.0) return relu(x);
    if (beta_ >= 1.0) return dyrelu_->forward(x);
    return add(scale(dyrelu_->forward(x), static_cast<Real>(beta_)),
               scale(relu(x), static_cast<Real>(1.0 - beta_)));
}

template <class Real>
std::vector<TensorT<Real>> PhasedActivationT<Real>::set_beta(double beta) {
    beta_ = beta;
    if (beta_ <= 0.0 && dyrelu_) {
        auto dropped = dyrelu_->parameters();
        dyrelu_.reset();
        return dropped;
    }
    return {};
}

template struct DyReLUBT<float>;
template struct DyReLUBT<double>;
template class PhasedActivationT<float>;
template class PhasedActivationT<double>;

}  // namespace east
