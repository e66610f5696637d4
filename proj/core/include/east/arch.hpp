#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "east/sharing.hpp"
#include "east/tensor.hpp"

namespace east {

enum class ArchFamily { Mlp, ResnetBasic, ResnetBottleneck };
enum class ActivationMode { Relu, DyreluPhased };

struct ArchSpec {
    ArchFamily family = ArchFamily::ResnetBasic;
    std::vector<int64_t> widths = {16, 32, 64};  // stage widths; MLP hidden sizes
    std::vector<int> blocks = {3, 3, 3};         // blocks per stage (unused for MLP)
    int64_t classes = 10;
    Shape input = {3, 32, 32};                   // C,H,W
    ActivationMode activation = ActivationMode::Relu;
    SharingSpec sharing;
    int64_t dyrelu_reduction = 8;
    bool imagenet_stem = false;  // 7x7/2 + maxpool; symbolic accounting only
};

/// One conv or linear weight site in forward order. Recipient sites under
/// weight sharing point at their storage owner and carry a gamma group id.
struct ConvSiteDesc {
    std::string name;
    bool is_linear = false;
    int64_t cin = 0, cout = 0, k = 1, stride = 1, pad = 0;
    int64_t out_h = 1, out_w = 1;
    int stage = -1, block = -1;  // 1-based where applicable
    int owner = -1;              // index of the storing site (self for owners)
    int gamma_group = -1;        // -1: unscaled reuse of own tensor

    int64_t weight_numel() const { return cout * cin * k * k; }
    int64_t macs() const { return weight_numel() * out_h * out_w; }
    int64_t fan_in() const { return cin * k * k; }
};

struct ActSiteDesc {
    std::string name;
    int64_t channels = 0;
};

/// Flattened description of an ArchSpec: every weight site, activation site
/// and the dense parameter totals. Both the instantiated models and the
/// symbolic FLOP/parameter accounting derive from it.
struct ArchDescription {
    std::vector<ConvSiteDesc> sites;
    std::vector<ActSiteDesc> act_sites;
    int64_t bn_affine_params = 0;
    int64_t bias_params = 0;
    int64_t gamma_count = 0;

    int64_t theoretical_params() const;
    int64_t shared_params() const;  // N_s
    int64_t masked_theoretical() const;
    int64_t masked_stored() const;
    Census census() const;  // structural part; unique_active/dyrelu filled by callers
};

ArchDescription describe_arch(const ArchSpec& spec);

// Reference architectures. The resnet presets follow the CIFAR adaptation
// used by the sparse-training baselines: 3x3 stride-1 stem, no maxpool,
// stages at 32/32/16/8 (or /4 with four stages) spatial resolution.
ArchSpec resnet34_cifar(int64_t classes = 10);
ArchSpec resnet50_cifar(int64_t classes = 10);
ArchSpec resnet20_desk(int64_t classes = 10);
ArchSpec mlp_mnist(int64_t classes = 10);

/// Preset lookup by name ("resnet20", "resnet34", "resnet50", "mlp");
/// throws on unknown names.
ArchSpec arch_preset(const std::string& name, int64_t classes = 10);

}  // namespace east
