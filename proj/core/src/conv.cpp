#include <stdexcept>
#include <string>

#include "east/gemm.hpp"
#include "east/ops.hpp"

namespace east {

namespace {

// col layout: [Cin*kh*kw, OH*OW], one sample at a time.
template <class Real>
void im2col(const Real* x, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t stride,
            int64_t pad, int64_t OH, int64_t OW, Real* col) {
    const int64_t rows = C * kh * kw;
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t c = r / (kh * kw);
        const int64_t ki = (r / kw) % kh;
        const int64_t kj = r % kw;
        const Real* xc = x + c * H * W;
        Real* out = col + r * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
            const int64_t ih = oh * stride + ki - pad;
            for (int64_t ow = 0; ow < OW; ++ow) {
                const int64_t iw = ow * stride + kj - pad;
                out[oh * OW + ow] = (ih >= 0 && ih < H && iw >= 0 && iw < W)
                                        ? xc[ih * W + iw]
                                        : Real(0);
            }
        }
    }
}

// Scatter-add of a col buffer back into the input gradient.
template <class Real>
void col2im_add(const Real* col, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw,
                int64_t stride, int64_t pad, int64_t OH, int64_t OW, Real* gx) {
    const int64_t rows = C * kh * kw;
    for (int64_t r = 0; r < rows; ++r) {
        const int64_t c = r / (kh * kw);
        const int64_t ki = (r / kw) % kh;
        const int64_t kj = r % kw;
        Real* gc = gx + c * H * W;
        const Real* in = col + r * OH * OW;
        for (int64_t oh = 0; oh < OH; ++oh) {
            const int64_t ih = oh * stride + ki - pad;
            if (ih < 0 || ih >= H) continue;
            for (int64_t ow = 0; ow < OW; ++ow) {
                const int64_t iw = ow * stride + kj - pad;
                if (iw >= 0 && iw < W) gc[ih * W + iw] += in[oh * OW + ow];
            }
        }
    }
}

}  // namespace

template <class Real>
TensorT<Real> conv2d(const TensorT<Real>& x, const TensorT<Real>& w, int stride, int padding) {
    if (x.shape().size() != 4 || w.shape().size() != 4)
        throw std::invalid_argument("conv2d: expected 4-d input and weight, got " +
                                    shape_str(x.shape()) + " and " + shape_str(w.shape()));
    const int64_t B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Cin)
        throw std::invalid_argument("conv2d: weight expects " + std::to_string(w.dim(1)) +
                                    " input channels, input " + shape_str(x.shape()) + " has " +
                                    std::to_string(Cin));
    if (stride < 1) throw std::invalid_argument("conv2d: stride must be >= 1");
    const int64_t p = padding, s = stride;
    if (kh > H + 2 * p || kw > W + 2 * p)
        throw std::invalid_argument("conv2d: kernel " + shape_str(w.shape()) +
                                    " does not fit padded input " + shape_str(x.shape()) +
                                    " (padding " + std::to_string(padding) + ")");
    // floor convention: a trailing partial window is dropped
    const int64_t OH = (H + 2 * p - kh) / s + 1;
    const int64_t OW = (W + 2 * p - kw) / s + 1;
    const int64_t K = Cin * kh * kw;

    std::vector<Real> out(static_cast<size_t>(B * Cout * OH * OW), Real(0));
    std::vector<Real> col(static_cast<size_t>(K * OH * OW));
    for (int64_t b = 0; b < B; ++b) {
        im2col(x.data().data() + b * Cin * H * W, Cin, H, W, kh, kw, s, p, OH, OW, col.data());
        // out_b [Cout, OH*OW] = w_flat [Cout, K] * col [K, OH*OW]
        gemm_nn(Cout, K, OH * OW, w.data().data(), col.data(),
                out.data() + b * Cout * OH * OW);
    }

    auto node = std::make_shared<TensorNodeT<Real>>();
    node->shape = {B, Cout, OH, OW};
    node->value = std::move(out);
    const bool needs_grad = x.requires_grad() || w.requires_grad();
    auto* tape = TapeT<Real>::active();
    if (needs_grad && tape) {
        node->requires_grad = true;
        node->parents = {x.node(), w.node()};
        // The col buffer is recomputed in backward rather than cached; at
        // batch sizes used for training the cache would dominate memory.
        node->backward_fn = [B, Cin, H, W, Cout, kh, kw, s, p, OH, OW, K](TensorNodeT<Real>& n) {
            const auto& px = n.parents[0];
            const auto& pw = n.parents[1];
            std::vector<Real> col(static_cast<size_t>(K * OH * OW));
            std::vector<Real> dcol;
            if (px->requires_grad) dcol.resize(static_cast<size_t>(K * OH * OW));
            for (int64_t b = 0; b < B; ++b) {
                const Real* dout = n.grad.data() + b * Cout * OH * OW;
                if (pw->requires_grad) {
                    im2col(px->value.data() + b * Cin * H * W, Cin, H, W, kh, kw, s, p, OH, OW,
                           col.data());
                    // dW [Cout, K] += dout [Cout, OHW] * col^T
                    gemm_nt(Cout, OH * OW, K, dout, col.data(), pw->ensure_grad().data());
                }
                if (px->requires_grad) {
                    std::fill(dcol.begin(), dcol.end(), Real(0));
                    // dcol [K, OHW] += w^T [K, Cout] * dout [Cout, OHW]
                    gemm_tn(K, Cout, OH * OW, pw->value.data(), dout, dcol.data());
                    col2im_add(dcol.data(), Cin, H, W, kh, kw, s, p, OH, OW,
                               px->ensure_grad().data() + b * Cin * H * W);
                }
            }
        };
        tape->record(node);
    }
    return TensorT<Real>(node);
}

template TensorT<float> conv2d(const TensorT<float>&, const TensorT<float>&, int, int);
template TensorT<double> conv2d(const TensorT<double>&, const TensorT<double>&, int, int);

}  // namespace east
