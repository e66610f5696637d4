#include "east/arch.hpp"

#include <stdexcept>

namespace east {

namespace {

int64_t conv_out(int64_t in, int64_t k, int64_t stride, int64_t pad) {
    if (k > in + 2 * pad)
        throw std::invalid_argument("arch: kernel " + std::to_string(k) +
                                    " exceeds padded extent " + std::to_string(in + 2 * pad));
    return (in + 2 * pad - k) / stride + 1;
}

struct Walker {
    ArchDescription d;
    int64_t h = 0, w = 0;

    int add_conv(std::string name, int64_t cin, int64_t cout, int64_t k, int64_t stride,
                 int64_t pad, int stage, int block) {
        ConvSiteDesc s;
        s.name = std::move(name);
        s.cin = cin;
        s.cout = cout;
        s.k = k;
        s.stride = stride;
        s.pad = pad;
        s.stage = stage;
        s.block = block;
        h = conv_out(h, k, stride, pad);
        w = conv_out(w, k, stride, pad);
        s.out_h = h;
        s.out_w = w;
        s.owner = static_cast<int>(d.sites.size());
        d.sites.push_back(s);
        return s.owner;
    }
};

}  // namespace

int64_t ArchDescription::theoretical_params() const {
    int64_t n = 0;
    for (const auto& s : sites) n += s.weight_numel();
    return n + bn_affine_params + bias_params;
}

int64_t ArchDescription::shared_params() const {
    int64_t n = 0;
    for (size_t i = 0; i < sites.size(); ++i)
        if (sites[i].owner != static_cast<int>(i)) n += sites[i].weight_numel();
    return n;
}

int64_t ArchDescription::masked_theoretical() const {
    int64_t n = 0;
    for (const auto& s : sites) n += s.weight_numel();
    return n;
}

int64_t ArchDescription::masked_stored() const {
    int64_t n = 0;
    for (size_t i = 0; i < sites.size(); ++i)
        if (sites[i].owner == static_cast<int>(i)) n += sites[i].weight_numel();
    return n;
}

Census ArchDescription::census() const {
    Census c;
    c.theoretical = theoretical_params();
    c.n_shared = shared_params();
    c.gamma_count = gamma_count;
    c.stored = c.theoretical - c.n_shared + c.gamma_count;
    c.masked_theoretical = masked_theoretical();
    c.masked_stored = masked_stored();
    return c;
}

ArchDescription describe_arch(const ArchSpec& spec) {
    if (spec.input.size() != 3)
        throw std::invalid_argument("arch: input must be [C,H,W], got " + shape_str(spec.input));
    Walker wk;
    wk.h = spec.input[1];
    wk.w = spec.input[2];

    if (spec.family == ArchFamily::Mlp) {
        if (spec.sharing.enabled)
            throw std::invalid_argument("arch: weight sharing requires residual stages");
        int64_t in = shape_numel(spec.input);
        for (size_t i = 0; i < spec.widths.size(); ++i) {
            ConvSiteDesc s;
            s.name = "fc" + std::to_string(i + 1);
            s.is_linear = true;
            s.cin = in;
            s.cout = spec.widths[i];
            s.owner = static_cast<int>(wk.d.sites.size());
            wk.d.sites.push_back(s);
            wk.d.bias_params += spec.widths[i];
            wk.d.act_sites.push_back({"fc" + std::to_string(i + 1) + ".act", spec.widths[i]});
            in = spec.widths[i];
        }
        ConvSiteDesc head;
        head.name = "head";
        head.is_linear = true;
        head.cin = in;
        head.cout = spec.classes;
        head.owner = static_cast<int>(wk.d.sites.size());
        wk.d.sites.push_back(head);
        wk.d.bias_params += spec.classes;
        return wk.d;
    }

    if (spec.widths.empty()) throw std::invalid_argument("arch: no stage widths");
    if (spec.blocks.size() != spec.widths.size())
        throw std::invalid_argument("arch: widths/blocks length mismatch");
    const bool bottleneck = spec.family == ArchFamily::ResnetBottleneck;
    const int64_t expansion = bottleneck ? 4 : 1;
    const int convs_per_block = bottleneck ? 3 : 2;

    // stem
    if (spec.imagenet_stem) {
        wk.add_conv("stem", spec.input[0], spec.widths[0], 7, 2, 3, -1, -1);
        // maxpool 3x3/2 affects only the spatial extents
        wk.h = conv_out(wk.h, 3, 2, 1);
        wk.w = conv_out(wk.w, 3, 2, 1);
    } else {
        wk.add_conv("stem", spec.input[0], spec.widths[0], 3, 1, 1, -1, -1);
    }
    wk.d.bn_affine_params += 2 * spec.widths[0];
    wk.d.act_sites.push_back({"stem.act", spec.widths[0]});

    int64_t in_ch = spec.widths[0];
    for (size_t si = 0; si < spec.widths.size(); ++si) {
        const int64_t width = spec.widths[si];
        const int L = spec.blocks[si];
        const int64_t out_ch = width * expansion;
        const int r = resolve_stage_donor(spec.sharing, static_cast<int>(si), L);
        // donor's site indices, filled when block R is built
        std::vector<int> donor_sites(static_cast<size_t>(convs_per_block), -1);

        for (int b = 1; b <= L; ++b) {
            const int64_t stride = (b == 1 && si > 0) ? 2 : 1;
            const std::string prefix =
                "s" + std::to_string(si + 1) + ".b" + std::to_string(b) + ".";
            std::vector<int> my_sites;
            if (bottleneck) {
                my_sites.push_back(
                    wk.add_conv(prefix + "conv1", in_ch, width, 1, 1, 0,
                                static_cast<int>(si) + 1, b));
                my_sites.push_back(wk.add_conv(prefix + "conv2", width, width, 3, stride, 1,
                                               static_cast<int>(si) + 1, b));
                my_sites.push_back(wk.add_conv(prefix + "conv3", width, out_ch, 1, 1, 0,
                                               static_cast<int>(si) + 1, b));
                wk.d.bn_affine_params += 2 * (width + width + out_ch);
                wk.d.act_sites.push_back({prefix + "act1", width});
                wk.d.act_sites.push_back({prefix + "act2", width});
                wk.d.act_sites.push_back({prefix + "act3", out_ch});
            } else {
                my_sites.push_back(wk.add_conv(prefix + "conv1", in_ch, width, 3, stride, 1,
                                               static_cast<int>(si) + 1, b));
                my_sites.push_back(wk.add_conv(prefix + "conv2", width, width, 3, 1, 1,
                                               static_cast<int>(si) + 1, b));
                wk.d.bn_affine_params += 2 * (width + width);
                wk.d.act_sites.push_back({prefix + "act1", width});
                wk.d.act_sites.push_back({prefix + "act2", out_ch});
            }
            if (b == 1 && (stride != 1 || in_ch != out_ch)) {
                // spatial extents already advanced by the main path; the
                // 1x1 downsample lands on the same output size
                ConvSiteDesc ds;
                ds.name = prefix + "down";
                ds.cin = in_ch;
                ds.cout = out_ch;
                ds.k = 1;
                ds.stride = stride;
                ds.pad = 0;
                ds.stage = static_cast<int>(si) + 1;
                ds.block = b;
                ds.out_h = wk.h;
                ds.out_w = wk.w;
                ds.owner = static_cast<int>(wk.d.sites.size());
                wk.d.sites.push_back(ds);
                wk.d.bn_affine_params += 2 * out_ch;
            }
            if (r > 0 && b == r)
                for (int c = 0; c < convs_per_block; ++c)
                    donor_sites[static_cast<size_t>(c)] = my_sites[static_cast<size_t>(c)];
            if (r > 0 && b > r) {
                for (int c = 0; c < convs_per_block; ++c) {
                    auto& site = wk.d.sites[static_cast<size_t>(my_sites[static_cast<size_t>(c)])];
                    site.owner = donor_sites[static_cast<size_t>(c)];
                    site.gamma_group = spec.sharing.per_block_gamma
                                           ? static_cast<int>(wk.d.gamma_count)
                                           : static_cast<int>(wk.d.gamma_count) + c;
                }
                wk.d.gamma_count += spec.sharing.per_block_gamma ? 1 : convs_per_block;
            }
            in_ch = out_ch;
        }
    }

    ConvSiteDesc head;
    head.name = "fc";
    head.is_linear = true;
    head.cin = in_ch;
    head.cout = spec.classes;
    head.owner = static_cast<int>(wk.d.sites.size());
    wk.d.sites.push_back(head);
    wk.d.bias_params += spec.classes;
    return wk.d;
}

ArchSpec resnet34_cifar(int64_t classes) {
    ArchSpec s;
    s.family = ArchFamily::ResnetBasic;
    s.widths = {64, 128, 256, 512};
    s.blocks = {3, 4, 6, 3};
    s.classes = classes;
    s.input = {3, 32, 32};
    return s;
}

ArchSpec resnet50_cifar(int64_t classes) {
    ArchSpec s = resnet34_cifar(classes);
    s.family = ArchFamily::ResnetBottleneck;
    return s;
}

ArchSpec resnet20_desk(int64_t classes) {
    ArchSpec s;
    s.family = ArchFamily::ResnetBasic;
    s.widths = {16, 32, 64};
    s.blocks = {3, 3, 3};
    s.classes = classes;
    s.input = {3, 32, 32};
    return s;
}

ArchSpec mlp_mnist(int64_t classes) {
    ArchSpec s;
    s.family = ArchFamily::Mlp;
    s.widths = {128};
    s.classes = classes;
    s.input = {1, 28, 28};
    return s;
}

ArchSpec arch_preset(const std::string& name, int64_t classes) {
    if (name == "resnet20") return resnet20_desk(classes);
    if (name == "resnet34") return resnet34_cifar(classes);
    if (name == "resnet50") return resnet50_cifar(classes);
    if (name == "mlp") return mlp_mnist(classes);
    throw std::invalid_argument("arch: unknown preset '" + name + "'");
}

}  // namespace east
