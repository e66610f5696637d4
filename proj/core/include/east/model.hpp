#pragma once

#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "east/arch.hpp"
#include "east/dyrelu.hpp"
#include "east/masked.hpp"
#include "east/tensor.hpp"

namespace east {

template <class Real>
struct BatchNormLayerT {
    TensorT<Real> gamma, beta;
    std::vector<Real> running_mean, running_var;

    BatchNormLayerT() = default;
    explicit BatchNormLayerT(int64_t channels);
    TensorT<Real> forward(const TensorT<Real>& x, bool training);
    int64_t channels() const { return gamma.defined() ? gamma.numel() : 0; }
};

/// Conv site. Owners hold their MaskedParam; shared reuse sites alias the
/// donor's tensor and scale it by a learnable scalar gamma.
template <class Real>
struct ConvLayerT {
    std::shared_ptr<MaskedParamT<Real>> param;
    bool owns = true;
    TensorT<Real> gamma;  // defined only on reuse sites
    int stride = 1, pad = 0;

    TensorT<Real> forward(const TensorT<Real>& x) const;
};

template <class Real>
struct LinearLayerT {
    std::shared_ptr<MaskedParamT<Real>> param;  // [in, out]
    TensorT<Real> bias;

    TensorT<Real> forward(const TensorT<Real>& x) const;
};

/// Pre-activation positivity counters, one slot per activation site in
/// forward order.
struct PreactStats {
    std::vector<int64_t> positive, total;

    void reset(size_t sites) {
        positive.assign(sites, 0);
        total.assign(sites, 0);
    }
    double site_fraction(size_t i) const {
        return total[i] ? static_cast<double>(positive[i]) / static_cast<double>(total[i]) : 0.0;
    }
    double global_fraction() const {
        int64_t p = 0, t = 0;
        for (size_t i = 0; i < positive.size(); ++i) {
            p += positive[i];
            t += total[i];
        }
        return t ? static_cast<double>(p) / static_cast<double>(t) : 0.0;
    }
};

template <class Real>
struct ResBlockT {
    std::vector<ConvLayerT<Real>> convs;  // 2 (basic) or 3 (bottleneck)
    std::vector<BatchNormLayerT<Real>> bns;
    std::vector<PhasedActivationT<Real>> acts;  // last one applies after the residual add
    std::optional<ConvLayerT<Real>> down;
    std::optional<BatchNormLayerT<Real>> down_bn;

    TensorT<Real> forward(const TensorT<Real>& x, bool training, PreactStats* stats,
                          size_t& act_cursor);
};

/// Desk-scale instantiable networks (MLP and CIFAR-style ResNets) wired with
/// MaskedParams, phased activations and the stage sharing plan.
template <class Real>
class ModelT {
public:
    static ModelT build(const ArchSpec& spec, uint64_t seed);

    TensorT<Real> forward(const TensorT<Real>& x, bool training, PreactStats* stats = nullptr);

    /// Unique (storage-owning) masked tensors, forward order.
    const std::vector<MaskedParamT<Real>*>& masked_params() { return masked_; }
    /// BN affine, biases and sharing scalars. DyReLU tensors are separate.
    std::vector<TensorT<Real>> dense_params();
    std::vector<TensorT<Real>> gamma_params();
    std::vector<TensorT<Real>> dyrelu_params();

    /// Sets beta on every phased site; returns tensors dropped by phase-out.
    std::vector<TensorT<Real>> set_beta(double beta);
    double beta() const { return beta_; }
    bool any_dyrelu_alive() const;

    Census census();
    int64_t masked_theoretical() const { return desc_.masked_theoretical(); }

    const ArchSpec& spec() const { return spec_; }
    const ArchDescription& description() const { return desc_; }
    const std::vector<std::string>& act_site_names() const { return act_names_; }

    /// BatchNorm layers in forward order (for buffer serialization).
    std::vector<BatchNormLayerT<Real>*> bn_layers();

    /// stage/block are 1-based, mirroring the site naming.
    ResBlockT<Real>& block(int stage, int blk) {
        return stages_[static_cast<size_t>(stage - 1)][static_cast<size_t>(blk - 1)];
    }

private:
    ArchSpec spec_;
    ArchDescription desc_;

    ConvLayerT<Real> stem_;
    BatchNormLayerT<Real> stem_bn_;
    PhasedActivationT<Real> stem_act_;
    std::vector<std::vector<ResBlockT<Real>>> stages_;
    LinearLayerT<Real> head_;

    std::vector<LinearLayerT<Real>> mlp_hidden_;
    std::vector<PhasedActivationT<Real>> mlp_acts_;

    std::vector<MaskedParamT<Real>*> masked_;
    std::vector<std::string> act_names_;
    double beta_ = 0.0;

    bool is_mlp() const { return spec_.family == ArchFamily::Mlp; }
    template <class Fn>
    void for_each_act(Fn&& fn);
};

using Model = ModelT<float>;
using ModelD = ModelT<double>;

}  // namespace east
