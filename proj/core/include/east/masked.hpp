#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "east/tensor.hpp"

namespace east {

/// A weight tensor paired with its binary mask. Weights at inactive
/// positions are kept exactly zero; the active count is maintained
/// incrementally and always matches a fresh recount.
template <class Real>
struct MaskedParamT {
    std::string name;
    TensorT<Real> weights;
    std::vector<uint8_t> mask;  // 1 = active, flat row-major
    int64_t active_count = 0;
    int64_t fan_in = 0;  // for init scaling; 0 falls back to numel/dim0

    MaskedParamT() = default;
    MaskedParamT(std::string layer_name, Shape shape)
        : name(std::move(layer_name)),
          weights(std::move(shape), true),
          mask(static_cast<size_t>(weights.numel()), 0) {}

    int64_t dense_count() const { return weights.numel(); }

    bool active(int64_t i) const { return mask[static_cast<size_t>(i)] != 0; }

    void set_active(int64_t i, bool on) {
        uint8_t v = on ? 1 : 0;
        if (mask[static_cast<size_t>(i)] != v) {
            mask[static_cast<size_t>(i)] = v;
            active_count += on ? 1 : -1;
        }
    }

    /// Zeroes every weight whose mask bit is off.
    void apply_mask() {
        auto w = weights.data();
        for (size_t i = 0; i < mask.size(); ++i)
            if (!mask[i]) w[i] = Real(0);
    }

    int64_t recount() const {
        int64_t n = 0;
        for (uint8_t b : mask) n += b;
        return n;
    }
};

using MaskedParam = MaskedParamT<float>;
using MaskedParamD = MaskedParamT<double>;

}  // namespace east
