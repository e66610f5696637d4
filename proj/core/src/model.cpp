#include "east/model.hpp"

#include <cmath>
#include <stdexcept>

#include "east/ops.hpp"
#include "east/rng.hpp"

namespace east {

template <class Real>
BatchNormLayerT<Real>::BatchNormLayerT(int64_t channels)
    : gamma(TensorT<Real>::full({channels}, Real(1), true)),
      beta(TensorT<Real>({channels}, true)),
      running_mean(static_cast<size_t>(channels), Real(0)),
      running_var(static_cast<size_t>(channels), Real(1)) {}

template <class Real>
TensorT<Real> BatchNormLayerT<Real>::forward(const TensorT<Real>& x, bool training) {
    return batchnorm2d(x, gamma, beta, running_mean, running_var, training);
}

template <class Real>
TensorT<Real> ConvLayerT<Real>::forward(const TensorT<Real>& x) const {
    if (owns) return conv2d(x, param->weights, stride, pad);
    return conv2d(x, scale_by(param->weights, gamma), stride, pad);
}

template <class Real>
TensorT<Real> LinearLayerT<Real>::forward(const TensorT<Real>& x) const {
    return linear_bias_add(matmul(x, param->weights), bias);
}

template <class Real>
TensorT<Real> ResBlockT<Real>::forward(const TensorT<Real>& x, bool training, PreactStats* stats,
                                       size_t& cursor) {
    auto tap = [&](const PhasedActivationT<Real>& act, const TensorT<Real>& v) {
        TensorT<Real> out = stats ? act.forward(v, &stats->positive[cursor], &stats->total[cursor])
                                  : act.forward(v);
        ++cursor;
        return out;
    };
    TensorT<Real> h = x;
    for (size_t c = 0; c + 1 < convs.size(); ++c)
        h = tap(acts[c], bns[c].forward(convs[c].forward(h), training));
    h = bns.back().forward(convs.back().forward(h), training);
    TensorT<Real> shortcut =
        down ? down_bn->forward(down->forward(x), training) : x;
    return tap(acts.back(), add(h, shortcut));
}

namespace {

template <class Real>
std::shared_ptr<MaskedParamT<Real>> make_masked(const std::string& name, Shape shape,
                                                int64_t fan_in, Rng& rng) {
    auto p = std::make_shared<MaskedParamT<Real>>(name, std::move(shape));
    p->fan_in = fan_in;
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    auto w = p->weights.data();
    for (size_t i = 0; i < w.size(); ++i) {
        w[i] = static_cast<Real>(rng.normal(0.0, stddev));
        p->set_active(static_cast<int64_t>(i), true);  // dense until a topology init runs
    }
    return p;
}

}  // namespace

template <class Real>
ModelT<Real> ModelT<Real>::build(const ArchSpec& spec, uint64_t seed) {
    if (spec.imagenet_stem)
        throw std::invalid_argument("model: the 7x7 stem exists for symbolic accounting only");
    ModelT<Real> m;
    m.spec_ = spec;
    m.desc_ = describe_arch(spec);
    for (const auto& a : m.desc_.act_sites) m.act_names_.push_back(a.name);
    m.beta_ = spec.activation == ActivationMode::DyreluPhased ? 1.0 : 0.0;

    Rng rng(seed);
    uint64_t act_seed = seed * 0x9e3779b97f4a7c15ull + 1;
    size_t act_idx = 0;
    auto make_act = [&](int64_t channels) {
        ++act_idx;
        if (spec.activation == ActivationMode::DyreluPhased)
            return PhasedActivationT<Real>(channels, act_seed + act_idx, spec.dyrelu_reduction);
        return PhasedActivationT<Real>();
    };

    if (spec.family == ArchFamily::Mlp) {
        int64_t in = shape_numel(spec.input);
        for (size_t i = 0; i < spec.widths.size(); ++i) {
            LinearLayerT<Real> l;
            l.param = make_masked<Real>("fc" + std::to_string(i + 1), {in, spec.widths[i]}, in,
                                        rng);
            l.bias = TensorT<Real>({spec.widths[i]}, true);
            m.masked_.push_back(l.param.get());
            m.mlp_hidden_.push_back(std::move(l));
            m.mlp_acts_.push_back(make_act(spec.widths[i]));
            in = spec.widths[i];
        }
        m.head_.param = make_masked<Real>("head", {in, spec.classes}, in, rng);
        m.head_.bias = TensorT<Real>({spec.classes}, true);
        m.masked_.push_back(m.head_.param.get());
        return m;
    }

    const bool bottleneck = spec.family == ArchFamily::ResnetBottleneck;
    const int64_t expansion = bottleneck ? 4 : 1;
    const int ncv = bottleneck ? 3 : 2;

    m.stem_.param = make_masked<Real>("stem", {spec.widths[0], spec.input[0], 3, 3},
                                      spec.input[0] * 9, rng);
    m.stem_.stride = 1;
    m.stem_.pad = 1;
    m.stem_bn_ = BatchNormLayerT<Real>(spec.widths[0]);
    m.stem_act_ = make_act(spec.widths[0]);
    m.masked_.push_back(m.stem_.param.get());

    int64_t in_ch = spec.widths[0];
    for (size_t si = 0; si < spec.widths.size(); ++si) {
        const int64_t width = spec.widths[si];
        const int L = spec.blocks[si];
        const int64_t out_ch = width * expansion;
        const int r = resolve_stage_donor(spec.sharing, static_cast<int>(si), L);
        std::vector<ResBlockT<Real>> stage;

        for (int b = 1; b <= L; ++b) {
            const int stride = (b == 1 && si > 0) ? 2 : 1;
            const std::string prefix =
                "s" + std::to_string(si + 1) + ".b" + std::to_string(b) + ".";
            ResBlockT<Real> blk;
            const bool reuse = r > 0 && b > r;
            ResBlockT<Real>* donor = reuse ? &stage[static_cast<size_t>(r - 1)] : nullptr;
            TensorT<Real> block_gamma;
            if (reuse && spec.sharing.per_block_gamma)
                block_gamma = TensorT<Real>::scalar(Real(1), true);

            for (int c = 0; c < ncv; ++c) {
                ConvLayerT<Real> conv;
                int64_t ci, co, k, st, pd;
                if (bottleneck) {
                    if (c == 0) { ci = in_ch; co = width; k = 1; st = 1; pd = 0; }
                    else if (c == 1) { ci = width; co = width; k = 3; st = stride; pd = 1; }
                    else { ci = width; co = out_ch; k = 1; st = 1; pd = 0; }
                } else {
                    if (c == 0) { ci = in_ch; co = width; k = 3; st = stride; pd = 1; }
                    else { ci = width; co = width; k = 3; st = 1; pd = 1; }
                }
                conv.stride = static_cast<int>(st);
                conv.pad = static_cast<int>(pd);
                if (reuse) {
                    conv.param = donor->convs[static_cast<size_t>(c)].param;
                    conv.owns = false;
                    conv.gamma = spec.sharing.per_block_gamma
                                     ? block_gamma
                                     : TensorT<Real>::scalar(Real(1), true);
                } else {
                    conv.param = make_masked<Real>(
                        prefix + "conv" + std::to_string(c + 1), {co, ci, k, k}, ci * k * k, rng);
                    m.masked_.push_back(conv.param.get());
                }
                blk.convs.push_back(std::move(conv));
                blk.bns.push_back(BatchNormLayerT<Real>(co));
                blk.acts.push_back(make_act(c + 1 == ncv ? out_ch : width));
            }
            if (b == 1 && (stride != 1 || in_ch != out_ch)) {
                ConvLayerT<Real> ds;
                ds.param = make_masked<Real>(prefix + "down", {out_ch, in_ch, 1, 1}, in_ch, rng);
                ds.stride = stride;
                ds.pad = 0;
                m.masked_.push_back(ds.param.get());
                blk.down = std::move(ds);
                blk.down_bn = BatchNormLayerT<Real>(out_ch);
            }
            stage.push_back(std::move(blk));
            in_ch = out_ch;
        }
        m.stages_.push_back(std::move(stage));
    }

    m.head_.param = make_masked<Real>("fc", {in_ch, spec.classes}, in_ch, rng);
    m.head_.bias = TensorT<Real>({spec.classes}, true);
    m.masked_.push_back(m.head_.param.get());
    return m;
}

template <class Real>
TensorT<Real> ModelT<Real>::forward(const TensorT<Real>& x, bool training, PreactStats* stats) {
    if (stats) stats->reset(act_names_.size());
    size_t cursor = 0;
    auto tap = [&](const PhasedActivationT<Real>& act, const TensorT<Real>& v) {
        TensorT<Real> out = stats ? act.forward(v, &stats->positive[cursor], &stats->total[cursor])
                                  : act.forward(v);
        ++cursor;
        return out;
    };

    if (is_mlp()) {
        TensorT<Real> h = flatten(x);
        for (size_t i = 0; i < mlp_hidden_.size(); ++i)
            h = tap(mlp_acts_[i], mlp_hidden_[i].forward(h));
        return head_.forward(h);
    }

    TensorT<Real> h = tap(stem_act_, stem_bn_.forward(stem_.forward(x), training));
    for (auto& stage : stages_)
        for (auto& blk : stage) h = blk.forward(h, training, stats, cursor);
    return head_.forward(global_avg_pool(h));
}

template <class Real>
template <class Fn>
void ModelT<Real>::for_each_act(Fn&& fn) {
    if (is_mlp()) {
        for (auto& a : mlp_acts_) fn(a);
        return;
    }
    fn(stem_act_);
    for (auto& stage : stages_)
        for (auto& blk : stage)
            for (auto& a : blk.acts) fn(a);
}

template <class Real>
std::vector<TensorT<Real>> ModelT<Real>::dense_params() {
    std::vector<TensorT<Real>> out;
    if (is_mlp()) {
        for (auto& l : mlp_hidden_) out.push_back(l.bias);
        out.push_back(head_.bias);
        return out;
    }
    out.push_back(stem_bn_.gamma);
    out.push_back(stem_bn_.beta);
    for (auto& stage : stages_)
        for (auto& blk : stage) {
            for (auto& bn : blk.bns) {
                out.push_back(bn.gamma);
                out.push_back(bn.beta);
            }
            if (blk.down_bn) {
                out.push_back(blk.down_bn->gamma);
                out.push_back(blk.down_bn->beta);
            }
        }
    out.push_back(head_.bias);
    return out;
}

template <class Real>
std::vector<BatchNormLayerT<Real>*> ModelT<Real>::bn_layers() {
    std::vector<BatchNormLayerT<Real>*> out;
    if (is_mlp()) return out;
    out.push_back(&stem_bn_);
    for (auto& stage : stages_)
        for (auto& blk : stage) {
            for (auto& bn : blk.bns) out.push_back(&bn);
            if (blk.down_bn) out.push_back(&*blk.down_bn);
        }
    return out;
}

template <class Real>
std::vector<TensorT<Real>> ModelT<Real>::gamma_params() {
    std::vector<TensorT<Real>> out;
    for (auto& stage : stages_)
        for (auto& blk : stage)
            for (auto& conv : blk.convs)
                if (!conv.owns) {
                    bool seen = false;
                    for (const auto& g : out)
                        if (g.raw() == conv.gamma.raw()) seen = true;
                    if (!seen) out.push_back(conv.gamma);
                }
    return out;
}

template <class Real>
std::vector<TensorT<Real>> ModelT<Real>::dyrelu_params() {
    std::vector<TensorT<Real>> out;
    for_each_act([&](PhasedActivationT<Real>& a) {
        if (a.dyrelu_alive())
            for (auto& t : a.dyrelu()->parameters()) out.push_back(t);
    });
    return out;
}

template <class Real>
std::vector<TensorT<Real>> ModelT<Real>::set_beta(double beta) {
    beta_ = beta;
    std::vector<TensorT<Real>> dropped;
    for_each_act([&](PhasedActivationT<Real>& a) {
        for (auto& t : a.set_beta(beta)) dropped.push_back(t);
    });
    return dropped;
}

template <class Real>
bool ModelT<Real>::any_dyrelu_alive() const {
    bool alive = false;
    const_cast<ModelT*>(this)->for_each_act(
        [&](PhasedActivationT<Real>& a) { alive |= a.dyrelu_alive(); });
    return alive;
}

template <class Real>
Census ModelT<Real>::census() {
    Census c = desc_.census();
    for (const auto* p : masked_) c.unique_active += p->active_count;
    for (const auto& t : dyrelu_params()) c.dyrelu_extra += t.numel();
    return c;
}

template class BatchNormLayerT<float>;
template class BatchNormLayerT<double>;
template struct ConvLayerT<float>;
template struct ConvLayerT<double>;
template struct LinearLayerT<float>;
template struct LinearLayerT<double>;
template struct ResBlockT<float>;
template struct ResBlockT<double>;
template class ModelT<float>;
template class ModelT<double>;

}  // namespace east
