#include "east/sharing.hpp"

#include <stdexcept>

namespace east {

int resolve_stage_donor(const SharingSpec& spec, int stage_idx, int blocks) {
    if (!spec.enabled) return 0;
    int r = 0;
    bool explicit_request = false;
    if (static_cast<size_t>(stage_idx) < spec.per_stage_r.size()) {
        r = spec.per_stage_r[static_cast<size_t>(stage_idx)];
        explicit_request = r != 0;
    } else {
        r = blocks >= 3 ? spec.default_donor : 0;
    }
    if (r == 0) return 0;
    if (blocks < 2)
        throw std::invalid_argument("sharing: stage " + std::to_string(stage_idx + 1) + " has " +
                                    std::to_string(blocks) +
                                    " block(s); no donor/recipient split possible");
    if (r <= 1 || r > blocks) {
        if (explicit_request)
            throw std::invalid_argument("sharing: donor R=" + std::to_string(r) +
                                        " outside (1, " + std::to_string(blocks) +
                                        "] for stage " + std::to_string(stage_idx + 1));
        return 0;
    }
    return r;
}

}  // namespace east
