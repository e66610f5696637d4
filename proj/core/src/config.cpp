#include "east/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

#include "json.hpp"

namespace east {

namespace {

using nlohmann::json;

ArchFamily family_from(const std::string& s) {
    if (s == "mlp") return ArchFamily::Mlp;
    if (s == "resnet-basic") return ArchFamily::ResnetBasic;
    if (s == "resnet-bottleneck") return ArchFamily::ResnetBottleneck;
    throw std::invalid_argument("config: unknown arch family '" + s + "'");
}

const char* family_name(ArchFamily f) {
    switch (f) {
        case ArchFamily::Mlp: return "mlp";
        case ArchFamily::ResnetBasic: return "resnet-basic";
        default: return "resnet-bottleneck";
    }
}

ArchSpec parse_arch(const json& j) {
    ArchSpec a;
    if (j.contains("preset")) a = arch_preset(j["preset"].get<std::string>());
    if (j.contains("family")) a.family = family_from(j["family"].get<std::string>());
    if (j.contains("widths")) a.widths = j["widths"].get<std::vector<int64_t>>();
    if (j.contains("blocks")) a.blocks = j["blocks"].get<std::vector<int>>();
    if (j.contains("classes")) a.classes = j["classes"].get<int64_t>();
    if (j.contains("input")) a.input = j["input"].get<Shape>();
    if (j.contains("activation")) {
        const std::string act = j["activation"].get<std::string>();
        if (act == "relu")
            a.activation = ActivationMode::Relu;
        else if (act == "dyrelu-phased")
            a.activation = ActivationMode::DyreluPhased;
        else
            throw std::invalid_argument("config: unknown activation '" + act + "'");
    }
    if (j.contains("dyrelu_reduction")) a.dyrelu_reduction = j["dyrelu_reduction"].get<int64_t>();
    if (j.contains("sharing")) {
        const json& s = j["sharing"];
        a.sharing.enabled = s.value("enabled", false);
        a.sharing.default_donor = s.value("donor", 2);
        if (s.contains("per_stage_r"))
            a.sharing.per_stage_r = s["per_stage_r"].get<std::vector<int>>();
        a.sharing.per_block_gamma = s.value("per_block_gamma", false);
    }
    return a;
}

DatasetSpec parse_data(const json& j) {
    DatasetSpec d;
    const std::string kind = j.value("kind", "synthetic");
    if (kind == "synthetic")
        d.kind = DatasetSpec::Kind::Synthetic;
    else if (kind == "idx")
        d.kind = DatasetSpec::Kind::Idx;
    else if (kind == "cifar10")
        d.kind = DatasetSpec::Kind::Cifar10;
    else
        throw std::invalid_argument("config: unknown dataset kind '" + kind + "'");
    d.classes = j.value("classes", d.classes);
    if (j.contains("shape")) d.sample_shape = j["shape"].get<Shape>();
    d.train_size = j.value("train_size", d.train_size);
    d.test_size = j.value("test_size", d.test_size);
    d.mean_scale = j.value("mean_scale", d.mean_scale);
    d.noise = j.value("noise", d.noise);
    d.channel_means = j.value("channel_means", d.channel_means);
    d.seed = j.value("seed", d.seed);
    d.images = j.value("images", "");
    d.labels = j.value("labels", "");
    d.test_images = j.value("test_images", "");
    d.test_labels = j.value("test_labels", "");
    d.dir = j.value("dir", "");
    d.subset = j.value("subset", static_cast<int64_t>(0));
    d.normalize = j.value("normalize", true);
    return d;
}

}  // namespace

void RunConfig::validate() const {
    if (epochs < 1) throw std::invalid_argument("config: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("config: batch_size must be >= 1");
    if (lr <= 0) throw std::invalid_argument("config: lr must be positive");
    if (topology_enabled) {
        if (!(s_max > 0 && s_max < 1))
            throw std::invalid_argument("config: s_max must be in (0,1)");
        const double s_min = resolved_s_min();
        if (!(s_min > 0 && s_min < 1))
            throw std::invalid_argument("config: s_min=" + std::to_string(s_min) +
                                        " outside (0,1); lower the multiplier");
        if (!(prune_rate > 0 && prune_rate < 1))
            throw std::invalid_argument("config: prune_rate must be in (0,1)");
    }
    if (arch.activation == ActivationMode::DyreluPhased && !lr_drop_epochs.empty()) {
        if (resolved_phasing_end() > static_cast<double>(lr_drop_epochs.front()))
            throw std::invalid_argument(
                "config: phasing must end no later than the first lr drop (epoch " +
                std::to_string(lr_drop_epochs.front()) + ")");
    }
    for (size_t i = 1; i < lr_drop_epochs.size(); ++i)
        if (lr_drop_epochs[i] <= lr_drop_epochs[i - 1])
            throw std::invalid_argument("config: lr_drop_epochs must be strictly increasing");
}

RunConfig parse_config_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    c.name = j.value("name", c.name);
    if (j.contains("arch")) c.arch = parse_arch(j["arch"]);
    if (j.contains("data")) c.data = parse_data(j["data"]);

    if (j.contains("train")) {
        const json& t = j["train"];
        c.epochs = t.value("epochs", c.epochs);
        c.batch_size = t.value("batch_size", c.batch_size);
        c.lr = t.value("lr", c.lr);
        if (t.contains("lr_drop_epochs"))
            c.lr_drop_epochs = t["lr_drop_epochs"].get<std::vector<int64_t>>();
        c.lr_drop_factor = t.value("lr_drop_factor", c.lr_drop_factor);
        c.momentum = t.value("momentum", c.momentum);
        c.weight_decay = t.value("weight_decay", c.weight_decay);
        c.grad_clip = t.value("grad_clip", c.grad_clip);
        c.log_every = t.value("log_every", c.log_every);
    }
    if (j.contains("topology")) {
        const json& t = j["topology"];
        c.topology_enabled = t.value("enabled", true);
        c.s_max = t.value("s_max", c.s_max);
        c.multiplier = t.value("multiplier", c.multiplier);
        c.s_min_override = t.value("s_min", 0.0);
        const std::string sched = t.value("schedule", "cyclic");
        if (sched == "cyclic")
            c.schedule = ScheduleMode::Cyclic;
        else if (sched == "static")
            c.schedule = ScheduleMode::Static;
        else
            throw std::invalid_argument("config: unknown schedule '" + sched + "'");
        const std::string re = t.value("regrowth", "gradient");
        if (re == "gradient")
            c.regrowth = RegrowthMode::Gradient;
        else if (re == "random")
            c.regrowth = RegrowthMode::Random;
        else
            throw std::invalid_argument("config: unknown regrowth '" + re + "'");
        c.n_cycles = t.value("n_cycles", c.n_cycles);
        c.cycle_epochs = t.value("cycle_epochs", c.cycle_epochs);
        c.update_every_cyclic = t.value("dt_cyclic", c.update_every_cyclic);
        c.update_every_fixed = t.value("dt_fixed", c.update_every_fixed);
        c.prune_rate = t.value("prune_rate", c.prune_rate);
        c.stop_updates_epoch = t.value("stop_updates_epoch", c.stop_updates_epoch);
        c.per_layer = t.value("per_layer", false);
        c.start_low = t.value("start_low", false);
    }
    if (j.contains("phasing")) {
        const json& p = j["phasing"];
        c.phasing_start = p.value("start_epoch", 0.0);
        c.phasing_end = p.value("end_epoch", -1.0);
    }
    c.seed = j.value("seed", c.seed);
    c.out_dir = j.value("out_dir", c.out_dir);
    c.deterministic = j.value("deterministic", false);
    c.validate();
    return c;
}

RunConfig load_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    try {
        return parse_config_json(ss.str());
    } catch (const nlohmann::json::parse_error& e) {
        throw std::runtime_error("config: " + path + " is not valid JSON: " + e.what());
    }
}

std::string canonical_config(const RunConfig& c) {
    std::ostringstream os;
    os.precision(17);
    os << "name=" << c.name << ";family=" << family_name(c.arch.family) << ";widths=";
    for (auto w : c.arch.widths) os << w << ",";
    os << ";blocks=";
    for (auto b : c.arch.blocks) os << b << ",";
    os << ";classes=" << c.arch.classes << ";input=" << shape_str(c.arch.input)
       << ";act=" << (c.arch.activation == ActivationMode::DyreluPhased ? "dyrelu" : "relu")
       << ";share=" << c.arch.sharing.enabled << ";donor=" << c.arch.sharing.default_donor
       << ";per_stage=";
    for (auto r : c.arch.sharing.per_stage_r) os << r << ",";
    os << ";pbg=" << c.arch.sharing.per_block_gamma << ";red=" << c.arch.dyrelu_reduction
       << ";data=" << static_cast<int>(c.data.kind) << ";dshape=" << shape_str(c.data.sample_shape)
       << ";dcls=" << c.data.classes << ";dn=" << c.data.train_size << "/" << c.data.test_size
       << ";dseed=" << c.data.seed << ";noise=" << c.data.noise << ";chm=" << c.data.channel_means << ";subset=" << c.data.subset
       << ";epochs=" << c.epochs << ";bs=" << c.batch_size << ";lr=" << c.lr << ";drops=";
    for (auto e : c.lr_drop_epochs) os << e << ",";
    os << ";factor=" << c.lr_drop_factor << ";mom=" << c.momentum << ";wd=" << c.weight_decay
       << ";clip=" << c.grad_clip
       << ";topo=" << c.topology_enabled << ";smax=" << c.s_max << ";m=" << c.multiplier
       << ";smin=" << c.s_min_override << ";sched=" << static_cast<int>(c.schedule)
       << ";regrow=" << static_cast<int>(c.regrowth) << ";n=" << c.n_cycles
       << ";l=" << c.cycle_epochs << ";dtc=" << c.update_every_cyclic
       << ";dtf=" << c.update_every_fixed << ";rp=" << c.prune_rate << ";stop="
       << c.stop_updates_epoch << ";pl=" << c.per_layer
       << ";low=" << c.start_low << ";ps=" << c.phasing_start << ";pe=" << c.phasing_end
       << ";seed=" << c.seed;
    return os.str();
}

uint64_t config_hash(const RunConfig& cfg) {
    // FNV-1a over the canonical form
    const std::string s = canonical_config(cfg);
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ull;
    }
    return h;
}

}  // namespace east
