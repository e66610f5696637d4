#include "east/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

namespace east {

namespace {

constexpr uint16_t kVersion = 1;

struct Writer {
    std::ofstream out;
    explicit Writer(const std::string& path) : out(path, std::ios::binary | std::ios::trunc) {
        if (!out) throw std::runtime_error("checkpoint: cannot write " + path);
    }
    template <class T>
    void pod(T v) {
        out.write(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void bytes(const void* p, size_t n) { out.write(static_cast<const char*>(p), n); }
    void str(const std::string& s) {
        pod<uint32_t>(static_cast<uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    void floats(std::span<const float> v) { bytes(v.data(), v.size() * sizeof(float)); }
};

struct Reader {
    std::ifstream in;
    std::string path;
    explicit Reader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw std::runtime_error("checkpoint: cannot open " + p);
    }
    template <class T>
    T pod() {
        T v;
        if (!in.read(reinterpret_cast<char*>(&v), sizeof(T)))
            throw std::runtime_error("checkpoint: truncated file " + path);
        return v;
    }
    void bytes(void* p, size_t n) {
        if (!in.read(static_cast<char*>(p), n))
            throw std::runtime_error("checkpoint: truncated file " + path);
    }
    std::string str() {
        const uint32_t n = pod<uint32_t>();
        std::string s(n, '\0');
        bytes(s.data(), n);
        return s;
    }
    void floats(std::span<float> v) { bytes(v.data(), v.size() * sizeof(float)); }
};

std::vector<uint8_t> pack_bits(const std::vector<uint8_t>& mask) {
    std::vector<uint8_t> out((mask.size() + 7) / 8, 0);
    for (size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
    return out;
}

void unpack_bits(const std::vector<uint8_t>& packed, std::vector<uint8_t>& mask) {
    for (size_t i = 0; i < mask.size(); ++i)
        mask[i] = (packed[i / 8] >> (i % 8)) & 1u;
}

void check_magic(Reader& r) {
    char magic[4];
    r.bytes(magic, 4);
    if (std::memcmp(magic, "EAST", 4) != 0)
        throw std::runtime_error("checkpoint: bad magic in " + r.path);
}

}  // namespace

std::vector<Tensor> collect_dense_params(Model& model) {
    std::vector<Tensor> out = model.dense_params();
    for (auto& g : model.gamma_params()) out.push_back(g);
    for (auto& t : model.dyrelu_params()) out.push_back(t);
    return out;
}

void checkpoint_save(const std::string& path, Model& model, SgdMomentum* opt,
                     TopologyController* topo, const CheckpointMeta& meta) {
    Writer w(path);
    w.bytes("EAST", 4);
    w.pod<uint16_t>(kVersion);
    w.pod<uint64_t>(meta.config_hash);

    const auto& masked = model.masked_params();
    w.pod<uint32_t>(static_cast<uint32_t>(masked.size()));
    for (const auto* p : masked) {
        w.str(p->name);
        const auto& shape = p->weights.shape();
        w.pod<uint32_t>(static_cast<uint32_t>(shape.size()));
        for (int64_t d : shape) w.pod<int64_t>(d);
        w.floats(p->weights.data());
        const auto packed = pack_bits(p->mask);
        w.bytes(packed.data(), packed.size());
    }

    // sharing plan: per-stage donor plus recipient -> donor name references
    const auto& spec = model.spec();
    const auto& desc = model.description();
    w.pod<uint32_t>(static_cast<uint32_t>(spec.blocks.size()));
    for (size_t si = 0; si < spec.blocks.size(); ++si)
        w.pod<int32_t>(resolve_stage_donor(spec.sharing, static_cast<int>(si),
                                           spec.blocks[si]));
    std::vector<std::pair<std::string, std::string>> refs;
    for (size_t i = 0; i < desc.sites.size(); ++i)
        if (desc.sites[i].owner != static_cast<int>(i))
            refs.emplace_back(desc.sites[i].name,
                              desc.sites[static_cast<size_t>(desc.sites[i].owner)].name);
    w.pod<uint32_t>(static_cast<uint32_t>(refs.size()));
    for (const auto& [a, b] : refs) {
        w.str(a);
        w.str(b);
    }

    const auto dense = collect_dense_params(model);
    w.pod<uint32_t>(static_cast<uint32_t>(dense.size()));
    for (const auto& t : dense) {
        w.pod<uint32_t>(static_cast<uint32_t>(t.numel()));
        w.floats(t.data());
    }

    const auto bns = model.bn_layers();
    w.pod<uint32_t>(static_cast<uint32_t>(bns.size()));
    for (const auto* bn : bns) {
        w.pod<uint32_t>(static_cast<uint32_t>(bn->running_mean.size()));
        w.floats(bn->running_mean);
        w.floats(bn->running_var);
    }

    // optimizer state: masked velocities in registry order, then dense
    w.pod<uint8_t>(opt ? 1 : 0);
    if (opt) {
        w.pod<uint32_t>(static_cast<uint32_t>(masked.size() + opt->dense_param_count()));
        for (const auto* p : masked) {
            auto* v = opt->velocity_for(p->weights.raw());
            if (!v) throw std::runtime_error("checkpoint: masked param not registered: " + p->name);
            w.pod<uint32_t>(static_cast<uint32_t>(v->size()));
            w.floats(*v);
        }
        for (size_t i = 0; i < opt->dense_param_count(); ++i) {
            auto& v = opt->dense_velocity(i);
            w.pod<uint32_t>(static_cast<uint32_t>(v.size()));
            w.floats(v);
        }
    }

    w.pod<uint8_t>(topo ? 1 : 0);
    if (topo) {
        w.pod<int64_t>(meta.step);
        w.pod<double>(topo->current_sparsity());
        w.pod<double>(topo->remainder());
        w.pod<int64_t>(topo->target_active());
        w.str(topo->rng_state());
    }

    w.pod<double>(meta.beta);
    w.pod<int64_t>(meta.step);
    w.pod<int64_t>(meta.epoch);
}

CheckpointMeta checkpoint_load(const std::string& path, Model& model, SgdMomentum* opt,
                               TopologyController* topo, uint64_t expected_hash) {
    Reader r(path);
    check_magic(r);
    const uint16_t version = r.pod<uint16_t>();
    if (version != kVersion)
        throw std::runtime_error("checkpoint: unsupported version " + std::to_string(version));
    CheckpointMeta meta;
    meta.config_hash = r.pod<uint64_t>();
    if (expected_hash != 0 && meta.config_hash != expected_hash)
        throw std::runtime_error("checkpoint: config hash mismatch for " + path);

    auto& masked = model.masked_params();
    const uint32_t n_masked = r.pod<uint32_t>();
    if (n_masked != masked.size())
        throw std::runtime_error("checkpoint: layer count mismatch in " + path);
    for (auto* p : masked) {
        const std::string name = r.str();
        if (name != p->name)
            throw std::runtime_error("checkpoint: layer '" + name + "' does not match model '" +
                                     p->name + "'");
        const uint32_t ndim = r.pod<uint32_t>();
        Shape shape(ndim);
        for (auto& d : shape) d = r.pod<int64_t>();
        if (shape != p->weights.shape())
            throw std::runtime_error("checkpoint: shape mismatch for layer '" + name + "'");
        r.floats(p->weights.data());
        std::vector<uint8_t> packed((p->mask.size() + 7) / 8);
        r.bytes(packed.data(), packed.size());
        unpack_bits(packed, p->mask);
        p->active_count = p->recount();
    }

    const uint32_t n_stages = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_stages; ++i) (void)r.pod<int32_t>();
    const uint32_t n_refs = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_refs; ++i) {
        (void)r.str();
        (void)r.str();
    }

    const uint32_t n_dense_stored = r.pod<uint32_t>();
    // a checkpoint taken after phase-out has fewer dense tensors: drop the
    // DyReLU branches before aligning
    {
        // peek the beta by structure: we must know it before dense restore;
        // dense counts disambiguate instead, since beta is stored at the end
        auto dense = collect_dense_params(model);
        if (n_dense_stored != dense.size()) {
            for (auto& t : model.set_beta(0.0))
                if (opt) opt->remove_param(t);
            dense = collect_dense_params(model);
            if (n_dense_stored != dense.size())
                throw std::runtime_error("checkpoint: dense tensor count mismatch in " + path);
        }
        for (auto& t : dense) {
            const uint32_t n = r.pod<uint32_t>();
            if (n != static_cast<uint32_t>(t.numel()))
                throw std::runtime_error("checkpoint: dense tensor size mismatch in " + path);
            r.floats(t.data());
        }
    }

    const uint32_t n_bn = r.pod<uint32_t>();
    auto bns = model.bn_layers();
    if (n_bn != bns.size())
        throw std::runtime_error("checkpoint: batchnorm count mismatch in " + path);
    for (auto* bn : bns) {
        const uint32_t n = r.pod<uint32_t>();
        if (n != bn->running_mean.size())
            throw std::runtime_error("checkpoint: batchnorm size mismatch in " + path);
        r.floats(bn->running_mean);
        r.floats(bn->running_var);
    }

    const uint8_t has_opt = r.pod<uint8_t>();
    if (has_opt) {
        const uint32_t n_vel = r.pod<uint32_t>();
        if (opt) {
            if (n_vel != masked.size() + opt->dense_param_count())
                throw std::runtime_error("checkpoint: velocity count mismatch in " + path);
            for (auto* p : masked) {
                auto* v = opt->velocity_for(p->weights.raw());
                const uint32_t n = r.pod<uint32_t>();
                if (!v || n != v->size())
                    throw std::runtime_error("checkpoint: velocity mismatch for " + p->name);
                r.floats(*v);
            }
            for (size_t i = 0; i < opt->dense_param_count(); ++i) {
                auto& v = opt->dense_velocity(i);
                const uint32_t n = r.pod<uint32_t>();
                if (n != v.size())
                    throw std::runtime_error("checkpoint: dense velocity size mismatch");
                r.floats(v);
            }
        } else {
            for (uint32_t i = 0; i < n_vel; ++i) {
                const uint32_t n = r.pod<uint32_t>();
                std::vector<float> skip(n);
                r.floats(skip);
            }
        }
    }

    const uint8_t has_topo = r.pod<uint8_t>();
    if (has_topo) {
        (void)r.pod<int64_t>();  // t, informational (meta.step is authoritative)
        (void)r.pod<double>();   // s_current, recomputable
        const double remainder = r.pod<double>();
        const int64_t target = r.pod<int64_t>();
        const std::string rng = r.str();
        if (topo) topo->restore_state(target, remainder, rng);
    }

    meta.beta = r.pod<double>();
    meta.step = r.pod<int64_t>();
    meta.epoch = r.pod<int64_t>();
    if (meta.beta > 0.0) model.set_beta(meta.beta);
    return meta;
}

CheckpointInfo checkpoint_inspect(const std::string& path) {
    Reader r(path);
    check_magic(r);
    CheckpointInfo info;
    info.version = r.pod<uint16_t>();
    info.meta.config_hash = r.pod<uint64_t>();

    const uint32_t n_masked = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_masked; ++i) {
        CheckpointLayerInfo layer;
        layer.name = r.str();
        const uint32_t ndim = r.pod<uint32_t>();
        layer.shape.resize(ndim);
        int64_t numel = 1;
        for (auto& d : layer.shape) {
            d = r.pod<int64_t>();
            numel *= d;
        }
        std::vector<float> skip(static_cast<size_t>(numel));
        r.floats(skip);
        std::vector<uint8_t> packed((static_cast<size_t>(numel) + 7) / 8);
        r.bytes(packed.data(), packed.size());
        for (uint8_t b : packed) layer.active += __builtin_popcount(b);
        info.layers.push_back(std::move(layer));
    }

    const uint32_t n_stages = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_stages; ++i) info.stage_donors.push_back(r.pod<int32_t>());
    const uint32_t n_refs = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_refs; ++i) {
        std::string a = r.str();
        std::string b = r.str();
        info.shared_refs.emplace_back(std::move(a), std::move(b));
    }

    const uint32_t n_dense = r.pod<uint32_t>();
    info.dense_tensors = n_dense;
    for (uint32_t i = 0; i < n_dense; ++i) {
        const uint32_t n = r.pod<uint32_t>();
        std::vector<float> skip(n);
        r.floats(skip);
    }
    const uint32_t n_bn = r.pod<uint32_t>();
    for (uint32_t i = 0; i < n_bn; ++i) {
        const uint32_t n = r.pod<uint32_t>();
        std::vector<float> skip(2 * n);
        r.floats(skip);
    }
    const uint8_t has_opt = r.pod<uint8_t>();
    if (has_opt) {
        const uint32_t n_vel = r.pod<uint32_t>();
        info.velocity_tensors = n_vel;
        for (uint32_t i = 0; i < n_vel; ++i) {
            const uint32_t n = r.pod<uint32_t>();
            std::vector<float> skip(n);
            r.floats(skip);
        }
    }
    info.has_controller = r.pod<uint8_t>() != 0;
    if (info.has_controller) {
        (void)r.pod<int64_t>();
        info.s_current = r.pod<double>();
        info.remainder = r.pod<double>();
        info.target_active = r.pod<int64_t>();
        (void)r.str();
    }
    info.meta.beta = r.pod<double>();
    info.meta.step = r.pod<int64_t>();
    info.meta.epoch = r.pod<int64_t>();
    return info;
}

}  // namespace east
