#include "east/ops.hpp"

#include <cmath>
#include <cstdint>
#include <stdexcept>

#include "east/gemm.hpp"

namespace east {

namespace {

template <class Real>
using NodePtr = std::shared_ptr<TensorNodeT<Real>>;

/// Builds the output node of an op, wiring parents/backward and recording on
/// the active tape only when a gradient will actually be needed.
template <class Real>
TensorT<Real> op_output(Shape shape, std::vector<Real> value, std::vector<NodePtr<Real>> parents,
                        std::function<void(TensorNodeT<Real>&)> backward) {
    auto node = std::make_shared<TensorNodeT<Real>>();
    node->shape = std::move(shape);
    node->value = std::move(value);
    bool needs_grad = false;
    for (const auto& p : parents)
        if (p->requires_grad) needs_grad = true;
    auto* tape = TapeT<Real>::active();
    if (needs_grad && tape) {
        node->requires_grad = true;
        node->parents = std::move(parents);
        node->backward_fn = std::move(backward);
        tape->record(node);
    }
    return TensorT<Real>(node);
}

template <class Real>
void accumulate(const NodePtr<Real>& parent, const Real* src, size_t n) {
    if (!parent->requires_grad) return;
    auto& g = parent->ensure_grad();
    for (size_t i = 0; i < n; ++i) g[i] += src[i];
}

template <class Real>
void check_same_shape(const char* op, const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
}

}  // namespace

template <class Real>
TensorT<Real> matmul(const TensorT<Real>& a, const TensorT<Real>& b) {
    if (a.shape().size() != 2 || b.shape().size() != 2 || a.dim(1) != b.dim(0))
        throw std::invalid_argument("matmul: incompatible shapes " + shape_str(a.shape()) +
                                    " and " + shape_str(b.shape()));
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<Real> out(static_cast<size_t>(M * N), Real(0));
    gemm_nn(M, K, N, a.data().data(), b.data().data(), out.data());

    return op_output<Real>({M, N}, std::move(out), {a.node(), b.node()},
                           [M, K, N](TensorNodeT<Real>& n) {
                               const auto& pa = n.parents[0];
                               const auto& pb = n.parents[1];
                               if (pa->requires_grad)
                                   gemm_nt(M, N, K, n.grad.data(), pb->value.data(),
                                           pa->ensure_grad().data());
                               if (pb->requires_grad)
                                   gemm_tn(K, M, N, pa->value.data(), n.grad.data(),
                                           pb->ensure_grad().data());
                           });
}

template <class Real>
TensorT<Real> add(const TensorT<Real>& a, const TensorT<Real>& b) {
    check_same_shape("add", a, b);
    std::vector<Real> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] += b.data()[i];
    return op_output<Real>(a.shape(), std::move(out), {a.node(), b.node()},
                           [](TensorNodeT<Real>& n) {
                               accumulate(n.parents[0], n.grad.data(), n.grad.size());
                               accumulate(n.parents[1], n.grad.data(), n.grad.size());
                           });
}

template <class Real>
TensorT<Real> sub(const TensorT<Real>& a, const TensorT<Real>& b) {
    check_same_shape("sub", a, b);
    std::vector<Real> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] -= b.data()[i];
    return op_output<Real>(a.shape(), std::move(out), {a.node(), b.node()},
                           [](TensorNodeT<Real>& n) {
                               accumulate(n.parents[0], n.grad.data(), n.grad.size());
                               if (n.parents[1]->requires_grad) {
                                   auto& g = n.parents[1]->ensure_grad();
                                   for (size_t i = 0; i < n.grad.size(); ++i) g[i] -= n.grad[i];
                               }
                           });
}

template <class Real>
TensorT<Real> mul(const TensorT<Real>& a, const TensorT<Real>& b) {
    check_same_shape("mul", a, b);
    std::vector<Real> out(a.data().begin(), a.data().end());
    for (size_t i = 0; i < out.size(); ++i) out[i] *= b.data()[i];
    return op_output<Real>(a.shape(), std::move(out), {a.node(), b.node()},
                           [](TensorNodeT<Real>& n) {
                               const auto& pa = n.parents[0];
                               const auto& pb = n.parents[1];
                               if (pa->requires_grad) {
                                   auto& g = pa->ensure_grad();
                                   for (size_t i = 0; i < n.grad.size(); ++i)
                                       g[i] += n.grad[i] * pb->value[i];
                               }
                               if (pb->requires_grad) {
                                   auto& g = pb->ensure_grad();
                                   for (size_t i = 0; i < n.grad.size(); ++i)
                                       g[i] += n.grad[i] * pa->value[i];
                               }
                           });
}

template <class Real>
TensorT<Real> scale(const TensorT<Real>& x, Real c) {
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= c;
    return op_output<Real>(x.shape(), std::move(out), {x.node()}, [c](TensorNodeT<Real>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) g[i] += c * n.grad[i];
    });
}

template <class Real>
TensorT<Real> add_scalar(const TensorT<Real>& x, Real c) {
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v += c;
    return op_output<Real>(x.shape(), std::move(out), {x.node()}, [](TensorNodeT<Real>& n) {
        accumulate(n.parents[0], n.grad.data(), n.grad.size());
    });
}

template <class Real>
TensorT<Real> scale_by(const TensorT<Real>& x, const TensorT<Real>& s) {
    if (s.numel() != 1)
        throw std::invalid_argument("scale_by: scale must be one element, got " +
                                    shape_str(s.shape()));
    const Real c = s.data()[0];
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out) v *= c;
    return op_output<Real>(x.shape(), std::move(out), {x.node(), s.node()},
                           [c](TensorNodeT<Real>& n) {
                               const auto& px = n.parents[0];
                               const auto& ps = n.parents[1];
                               if (px->requires_grad) {
                                   auto& g = px->ensure_grad();
                                   for (size_t i = 0; i < n.grad.size(); ++i)
                                       g[i] += c * n.grad[i];
                               }
                               if (ps->requires_grad) {
                                   double acc = 0;
                                   for (size_t i = 0; i < n.grad.size(); ++i)
                                       acc += static_cast<double>(n.grad[i]) * px->value[i];
                                   ps->ensure_grad()[0] += static_cast<Real>(acc);
                               }
                           });
}

template <class Real>
TensorT<Real> relu(const TensorT<Real>& x) {
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (auto& v : out)
        if (v < Real(0)) v = Real(0);
    return op_output<Real>(x.shape(), std::move(out), {x.node()}, [](TensorNodeT<Real>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        const auto& xv = n.parents[0]->value;
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (xv[i] > Real(0)) g[i] += n.grad[i];
    });
}

template <class Real>
TensorT<Real> maximum(const TensorT<Real>& a, const TensorT<Real>& b) {
    check_same_shape("maximum", a, b);
    std::vector<Real> out(a.numel());
    std::vector<uint8_t> take_a(out.size());
    for (size_t i = 0; i < out.size(); ++i) {
        // ties route to the first branch
        take_a[i] = a.data()[i] >= b.data()[i];
        out[i] = take_a[i] ? a.data()[i] : b.data()[i];
    }
    return op_output<Real>(a.shape(), std::move(out), {a.node(), b.node()},
                           [take_a = std::move(take_a)](TensorNodeT<Real>& n) {
                               const auto& pa = n.parents[0];
                               const auto& pb = n.parents[1];
                               if (pa->requires_grad) {
                                   auto& g = pa->ensure_grad();
                                   for (size_t i = 0; i < n.grad.size(); ++i)
                                       if (take_a[i]) g[i] += n.grad[i];
                               }
                               if (pb->requires_grad) {
                                   auto& g = pb->ensure_grad();
                                   for (size_t i = 0; i < n.grad.size(); ++i)
                                       if (!take_a[i]) g[i] += n.grad[i];
                               }
                           });
}

template <class Real>
TensorT<Real> sigmoid(const TensorT<Real>& x) {
    std::vector<Real> out(x.numel());
    for (size_t i = 0; i < out.size(); ++i) {
        const Real v = x.data()[i];
        if (v >= Real(0)) {
            out[i] = Real(1) / (Real(1) + std::exp(-v));
        } else {
            const Real e = std::exp(v);
            out[i] = e / (Real(1) + e);
        }
    }
    return op_output<Real>(x.shape(), std::move(out), {x.node()}, [](TensorNodeT<Real>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            const Real s = n.value[i];
            g[i] += n.grad[i] * s * (Real(1) - s);
        }
    });
}

template <class Real>
TensorT<Real> reshape(const TensorT<Real>& x, Shape target) {
    if (shape_numel(target) != x.numel())
        throw std::invalid_argument("reshape: cannot view " + shape_str(x.shape()) + " as " +
                                    shape_str(target));
    std::vector<Real> out(x.data().begin(), x.data().end());
    return op_output<Real>(std::move(target), std::move(out), {x.node()},
                           [](TensorNodeT<Real>& n) {
                               accumulate(n.parents[0], n.grad.data(), n.grad.size());
                           });
}

template <class Real>
TensorT<Real> flatten(const TensorT<Real>& x) {
    if (x.shape().empty()) throw std::invalid_argument("flatten: scalar input");
    return reshape(x, {x.dim(0), x.numel() / x.dim(0)});
}

template <class Real>
TensorT<Real> slice_cols(const TensorT<Real>& x, int64_t start, int64_t len) {
    if (x.shape().size() != 2)
        throw std::invalid_argument("slice_cols: expected 2-d input, got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), N = x.dim(1);
    if (start < 0 || len < 0 || start + len > N)
        throw std::invalid_argument("slice_cols: range [" + std::to_string(start) + "," +
                                    std::to_string(start + len) + ") out of " + shape_str(x.shape()));
    std::vector<Real> out(static_cast<size_t>(B * len));
    for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < len; ++j) out[b * len + j] = x.data()[b * N + start + j];
    return op_output<Real>({B, len}, std::move(out), {x.node()},
                           [B, N, start, len](TensorNodeT<Real>& n) {
                               if (!n.parents[0]->requires_grad) return;
                               auto& g = n.parents[0]->ensure_grad();
                               for (int64_t b = 0; b < B; ++b)
                                   for (int64_t j = 0; j < len; ++j)
                                       g[b * N + start + j] += n.grad[b * len + j];
                           });
}

namespace {

// Shared shape logic for the channelwise broadcast ops: x is [B,C,H,W] or
// [B,C], s is [B,C]; returns the spatial extent per (b,c).
template <class Real>
int64_t channelwise_spatial(const char* op, const TensorT<Real>& x, const TensorT<Real>& s) {
    const auto& xs = x.shape();
    if (xs.size() != 4 && xs.size() != 2)
        throw std::invalid_argument(std::string(op) + ": expected [B,C,H,W] or [B,C], got " +
                                    shape_str(xs));
    if (s.shape().size() != 2 || s.dim(0) != xs[0] || s.dim(1) != xs[1])
        throw std::invalid_argument(std::string(op) + ": coefficients " + shape_str(s.shape()) +
                                    " do not match input " + shape_str(xs));
    return xs.size() == 4 ? xs[2] * xs[3] : 1;
}

}  // namespace

template <class Real>
TensorT<Real> mul_channelwise(const TensorT<Real>& x, const TensorT<Real>& s) {
    const int64_t HW = channelwise_spatial("mul_channelwise", x, s);
    const int64_t BC = s.numel();
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (int64_t bc = 0; bc < BC; ++bc) {
        const Real c = s.data()[bc];
        for (int64_t i = 0; i < HW; ++i) out[bc * HW + i] *= c;
    }
    return op_output<Real>(x.shape(), std::move(out), {x.node(), s.node()},
                           [HW, BC](TensorNodeT<Real>& n) {
                               const auto& px = n.parents[0];
                               const auto& ps = n.parents[1];
                               if (px->requires_grad) {
                                   auto& g = px->ensure_grad();
                                   for (int64_t bc = 0; bc < BC; ++bc) {
                                       const Real c = ps->value[bc];
                                       for (int64_t i = 0; i < HW; ++i)
                                           g[bc * HW + i] += c * n.grad[bc * HW + i];
                                   }
                               }
                               if (ps->requires_grad) {
                                   auto& g = ps->ensure_grad();
                                   for (int64_t bc = 0; bc < BC; ++bc) {
                                       double acc = 0;
                                       for (int64_t i = 0; i < HW; ++i)
                                           acc += static_cast<double>(n.grad[bc * HW + i]) *
                                                  px->value[bc * HW + i];
                                       g[bc] += static_cast<Real>(acc);
                                   }
                               }
                           });
}

template <class Real>
TensorT<Real> add_channelwise(const TensorT<Real>& x, const TensorT<Real>& b) {
    const int64_t HW = channelwise_spatial("add_channelwise", x, b);
    const int64_t BC = b.numel();
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (int64_t bc = 0; bc < BC; ++bc) {
        const Real c = b.data()[bc];
        for (int64_t i = 0; i < HW; ++i) out[bc * HW + i] += c;
    }
    return op_output<Real>(x.shape(), std::move(out), {x.node(), b.node()},
                           [HW, BC](TensorNodeT<Real>& n) {
                               const auto& px = n.parents[0];
                               const auto& pb = n.parents[1];
                               if (px->requires_grad)
                                   accumulate(px, n.grad.data(), n.grad.size());
                               if (pb->requires_grad) {
                                   auto& g = pb->ensure_grad();
                                   for (int64_t bc = 0; bc < BC; ++bc) {
                                       double acc = 0;
                                       for (int64_t i = 0; i < HW; ++i)
                                           acc += n.grad[bc * HW + i];
                                       g[bc] += static_cast<Real>(acc);
                                   }
                               }
                           });
}

template <class Real>
TensorT<Real> global_avg_pool(const TensorT<Real>& x) {
    if (x.shape().size() != 4)
        throw std::invalid_argument("global_avg_pool: expected [B,C,H,W], got " +
                                    shape_str(x.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<Real> out(static_cast<size_t>(B * C));
    for (int64_t bc = 0; bc < B * C; ++bc) {
        double acc = 0;
        for (int64_t i = 0; i < HW; ++i) acc += x.data()[bc * HW + i];
        out[bc] = static_cast<Real>(acc / static_cast<double>(HW));
    }
    return op_output<Real>({B, C}, std::move(out), {x.node()}, [HW](TensorNodeT<Real>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        const Real inv = Real(1) / static_cast<Real>(HW);
        for (size_t bc = 0; bc < n.grad.size(); ++bc) {
            const Real v = n.grad[bc] * inv;
            for (int64_t i = 0; i < HW; ++i) g[bc * HW + i] += v;
        }
    });
}

template <class Real>
TensorT<Real> linear_bias_add(const TensorT<Real>& x, const TensorT<Real>& bias) {
    if (x.shape().size() != 2 || bias.shape().size() != 1 || bias.dim(0) != x.dim(1))
        throw std::invalid_argument("linear_bias_add: bias " + shape_str(bias.shape()) +
                                    " does not match " + shape_str(x.shape()));
    const int64_t B = x.dim(0), N = x.dim(1);
    std::vector<Real> out(x.data().begin(), x.data().end());
    for (int64_t b = 0; b < B; ++b)
        for (int64_t j = 0; j < N; ++j) out[b * N + j] += bias.data()[j];
    return op_output<Real>(x.shape(), std::move(out), {x.node(), bias.node()},
                           [B, N](TensorNodeT<Real>& n) {
                               accumulate(n.parents[0], n.grad.data(), n.grad.size());
                               if (n.parents[1]->requires_grad) {
                                   auto& g = n.parents[1]->ensure_grad();
                                   for (int64_t j = 0; j < N; ++j) {
                                       double acc = 0;
                                       for (int64_t b = 0; b < B; ++b) acc += n.grad[b * N + j];
                                       g[j] += static_cast<Real>(acc);
                                   }
                               }
                           });
}

template <class Real>
TensorT<Real> sum(const TensorT<Real>& x) {
    double acc = 0;
    for (Real v : x.data()) acc += v;
    return op_output<Real>({1}, {static_cast<Real>(acc)}, {x.node()}, [](TensorNodeT<Real>& n) {
        if (!n.parents[0]->requires_grad) return;
        auto& g = n.parents[0]->ensure_grad();
        for (auto& v : g) v += n.grad[0];
    });
}

template <class Real>
TensorT<Real> softmax_cross_entropy(const TensorT<Real>& logits, const std::vector<int>& labels) {
    if (logits.shape().size() != 2)
        throw std::invalid_argument("softmax_cross_entropy: expected [B,C] logits, got " +
                                    shape_str(logits.shape()));
    const int64_t B = logits.dim(0), C = logits.dim(1);
    if (static_cast<int64_t>(labels.size()) != B)
        throw std::invalid_argument("softmax_cross_entropy: " + std::to_string(labels.size()) +
                                    " labels for batch of " + std::to_string(B));
    for (int y : labels)
        if (y < 0 || y >= C)
            throw std::invalid_argument("softmax_cross_entropy: label " + std::to_string(y) +
                                        " outside [0," + std::to_string(C) + ")");

    std::vector<Real> probs(static_cast<size_t>(B * C));
    double loss = 0;
    for (int64_t b = 0; b < B; ++b) {
        const Real* row = logits.data().data() + b * C;
        Real mx = row[0];
        for (int64_t c = 1; c < C; ++c) mx = std::max(mx, row[c]);
        double denom = 0;
        for (int64_t c = 0; c < C; ++c) denom += std::exp(static_cast<double>(row[c] - mx));
        const double log_denom = std::log(denom);
        for (int64_t c = 0; c < C; ++c)
            probs[b * C + c] =
                static_cast<Real>(std::exp(static_cast<double>(row[c] - mx)) / denom);
        loss += log_denom - static_cast<double>(row[labels[b]] - mx);
    }
    loss /= static_cast<double>(B);

    return op_output<Real>({1}, {static_cast<Real>(loss)}, {logits.node()},
                           [B, C, probs = std::move(probs), labels](TensorNodeT<Real>& n) {
                               if (!n.parents[0]->requires_grad) return;
                               auto& g = n.parents[0]->ensure_grad();
                               const Real d = n.grad[0] / static_cast<Real>(B);
                               for (int64_t b = 0; b < B; ++b)
                                   for (int64_t c = 0; c < C; ++c) {
                                       Real p = probs[b * C + c];
                                       if (c == labels[b]) p -= Real(1);
                                       g[b * C + c] += d * p;
                                   }
                           });
}

template <class Real>
TensorT<Real> batchnorm2d(const TensorT<Real>& x, const TensorT<Real>& gamma,
                          const TensorT<Real>& beta, std::vector<Real>& running_mean,
                          std::vector<Real>& running_var, bool training, Real momentum, Real eps) {
    if (x.shape().size() != 4)
        throw std::invalid_argument("batchnorm2d: expected [B,C,H,W], got " + shape_str(x.shape()));
    const int64_t B = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (gamma.numel() != C || beta.numel() != C || static_cast<int64_t>(running_mean.size()) != C ||
        static_cast<int64_t>(running_var.size()) != C)
        throw std::invalid_argument("batchnorm2d: parameter size mismatch for C=" +
                                    std::to_string(C));

    const int64_t N = B * HW;  // reduction size per channel
    std::vector<Real> out(x.numel());
    const Real* xv = x.data().data();

    if (!training) {
        for (int64_t c = 0; c < C; ++c) {
            const Real inv_std = Real(1) / std::sqrt(running_var[c] + eps);
            const Real g = gamma.data()[c], bshift = beta.data()[c], mu = running_mean[c];
            for (int64_t b = 0; b < B; ++b) {
                const int64_t base = (b * C + c) * HW;
                for (int64_t i = 0; i < HW; ++i)
                    out[base + i] = g * (xv[base + i] - mu) * inv_std + bshift;
            }
        }
        return op_output<Real>(x.shape(), std::move(out),
                               {x.node(), gamma.node(), beta.node()},
                               [B, C, HW, rm = running_mean, rv = running_var,
                                eps](TensorNodeT<Real>& n) {
                                   const auto& px = n.parents[0];
                                   const auto& pg = n.parents[1];
                                   const auto& pb = n.parents[2];
                                   for (int64_t c = 0; c < C; ++c) {
                                       const Real inv_std = Real(1) / std::sqrt(rv[c] + eps);
                                       const Real gm = pg->value[c];
                                       double dg = 0, db = 0;
                                       for (int64_t b = 0; b < B; ++b) {
                                           const int64_t base = (b * C + c) * HW;
                                           for (int64_t i = 0; i < HW; ++i) {
                                               const Real dy = n.grad[base + i];
                                               if (px->requires_grad)
                                                   px->ensure_grad()[base + i] +=
                                                       dy * gm * inv_std;
                                               dg += static_cast<double>(dy) *
                                                     (px->value[base + i] - rm[c]) * inv_std;
                                               db += dy;
                                           }
                                       }
                                       if (pg->requires_grad)
                                           pg->ensure_grad()[c] += static_cast<Real>(dg);
                                       if (pb->requires_grad)
                                           pb->ensure_grad()[c] += static_cast<Real>(db);
                                   }
                               });
    }

    std::vector<Real> mean(C), inv_std(C), xhat(x.numel());
    for (int64_t c = 0; c < C; ++c) {
        double acc = 0;
        for (int64_t b = 0; b < B; ++b) {
            const int64_t base = (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) acc += xv[base + i];
        }
        const double mu = acc / static_cast<double>(N);
        double var_acc = 0;
        for (int64_t b = 0; b < B; ++b) {
            const int64_t base = (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const double d = xv[base + i] - mu;
                var_acc += d * d;
            }
        }
        const double var = var_acc / static_cast<double>(N);  // biased, used for normalization
        mean[c] = static_cast<Real>(mu);
        inv_std[c] = static_cast<Real>(1.0 / std::sqrt(var + static_cast<double>(eps)));

        const double unbiased =
            N > 1 ? var_acc / static_cast<double>(N - 1) : var;
        running_mean[c] = (Real(1) - momentum) * running_mean[c] + momentum * static_cast<Real>(mu);
        running_var[c] =
            (Real(1) - momentum) * running_var[c] + momentum * static_cast<Real>(unbiased);

        const Real g = gamma.data()[c], bshift = beta.data()[c];
        for (int64_t b = 0; b < B; ++b) {
            const int64_t base = (b * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
                const Real xh = (xv[base + i] - mean[c]) * inv_std[c];
                xhat[base + i] = xh;
                out[base + i] = g * xh + bshift;
            }
        }
    }

    return op_output<Real>(
        x.shape(), std::move(out), {x.node(), gamma.node(), beta.node()},
        [B, C, HW, N, mean = std::move(mean), inv_std = std::move(inv_std),
         xhat = std::move(xhat)](TensorNodeT<Real>& n) {
            const auto& px = n.parents[0];
            const auto& pg = n.parents[1];
            const auto& pb = n.parents[2];
            for (int64_t c = 0; c < C; ++c) {
                const Real gm = pg->value[c];
                double dg = 0, db = 0, sum_dxhat = 0, sum_dxhat_xhat = 0;
                for (int64_t b = 0; b < B; ++b) {
                    const int64_t base = (b * C + c) * HW;
                    for (int64_t i = 0; i < HW; ++i) {
                        const Real dy = n.grad[base + i];
                        const Real xh = xhat[base + i];
                        dg += static_cast<double>(dy) * xh;
                        db += dy;
                        const double dxh = static_cast<double>(dy) * gm;
                        sum_dxhat += dxh;
                        sum_dxhat_xhat += dxh * xh;
                    }
                }
                if (pg->requires_grad) pg->ensure_grad()[c] += static_cast<Real>(dg);
                if (pb->requires_grad) pb->ensure_grad()[c] += static_cast<Real>(db);
                if (px->requires_grad) {
                    auto& gx = px->ensure_grad();
                    const double invN = 1.0 / static_cast<double>(N);
                    for (int64_t b = 0; b < B; ++b) {
                        const int64_t base = (b * C + c) * HW;
                        for (int64_t i = 0; i < HW; ++i) {
                            const double dxh = static_cast<double>(n.grad[base + i]) * gm;
                            const double xh = xhat[base + i];
                            gx[base + i] += static_cast<Real>(
                                inv_std[c] *
                                (dxh - invN * sum_dxhat - xh * invN * sum_dxhat_xhat));
                        }
                    }
                }
            }
        });
}

#define EAST_INSTANTIATE_OPS(R)                                                                  \
    template TensorT<R> matmul(const TensorT<R>&, const TensorT<R>&);                            \
    template TensorT<R> add(const TensorT<R>&, const TensorT<R>&);                               \
    template TensorT<R> sub(const TensorT<R>&, const TensorT<R>&);                               \
    template TensorT<R> mul(const TensorT<R>&, const TensorT<R>&);                               \
    template TensorT<R> scale(const TensorT<R>&, R);                                             \
    template TensorT<R> add_scalar(const TensorT<R>&, R);                                        \
    template TensorT<R> scale_by(const TensorT<R>&, const TensorT<R>&);                          \
    template TensorT<R> relu(const TensorT<R>&);                                                 \
    template TensorT<R> maximum(const TensorT<R>&, const TensorT<R>&);                           \
    template TensorT<R> sigmoid(const TensorT<R>&);                                              \
    template TensorT<R> reshape(const TensorT<R>&, Shape);                                       \
    template TensorT<R> flatten(const TensorT<R>&);                                              \
    template TensorT<R> slice_cols(const TensorT<R>&, int64_t, int64_t);                         \
    template TensorT<R> mul_channelwise(const TensorT<R>&, const TensorT<R>&);                   \
    template TensorT<R> add_channelwise(const TensorT<R>&, const TensorT<R>&);                   \
    template TensorT<R> global_avg_pool(const TensorT<R>&);                                      \
    template TensorT<R> linear_bias_add(const TensorT<R>&, const TensorT<R>&);                   \
    template TensorT<R> sum(const TensorT<R>&);                                                  \
    template TensorT<R> softmax_cross_entropy(const TensorT<R>&, const std::vector<int>&);       \
    template TensorT<R> batchnorm2d(const TensorT<R>&, const TensorT<R>&, const TensorT<R>&,    \
                                    std::vector<R>&, std::vector<R>&, bool, R, R);

EAST_INSTANTIATE_OPS(float)
EAST_INSTANTIATE_OPS(double)

#undef EAST_INSTANTIATE_OPS

}  // namespace east
