#include "east/trainer.hpp"

#include <chrono>
#include <cmath>
#include <deque>
#include <filesystem>
#include <iostream>

#include "east/dyrelu.hpp"
#include "east/ops.hpp"
#include "east/rng.hpp"

namespace east {

double grad_norm_sum(const std::vector<MaskedParam*>& params) {
    double total = 0;
    for (const auto* p : params) {
        if (!p->weights.has_grad()) continue;
        const auto& g = p->weights.node()->grad;
        double sq = 0;
        for (size_t i = 0; i < g.size(); ++i)
            if (p->mask[i]) sq += static_cast<double>(g[i]) * g[i];
        total += std::sqrt(sq);
    }
    return total;
}

namespace {

double batch_accuracy(const Tensor& logits, const std::vector<int>& labels) {
    const int64_t B = logits.dim(0), C = logits.dim(1);
    int64_t hits = 0;
    for (int64_t b = 0; b < B; ++b) {
        const float* row = logits.data().data() + b * C;
        int best = 0;
        for (int64_t c = 1; c < C; ++c)
            if (row[c] > row[best]) best = static_cast<int>(c);
        if (best == labels[static_cast<size_t>(b)]) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(B);
}

}  // namespace

Trainer::Trainer(RunConfig cfg) : cfg_(std::move(cfg)) {
    cfg_.validate();
    data_ = load_dataset(cfg_.data);
    if (data_.train.size() == 0) throw std::runtime_error("trainer: empty training split");
    if (data_.train.sample_shape != cfg_.arch.input)
        throw std::runtime_error("trainer: dataset samples " +
                                 shape_str(data_.train.sample_shape) +
                                 " do not match the configured input " +
                                 shape_str(cfg_.arch.input));

    model_ = std::make_unique<Model>(Model::build(cfg_.arch, cfg_.seed));
    opt_ = std::make_unique<SgdMomentum>(static_cast<float>(cfg_.lr),
                                         static_cast<float>(cfg_.momentum),
                                         static_cast<float>(cfg_.weight_decay));
    for (auto* p : model_->masked_params()) opt_->add_masked(p);
    for (auto& t : model_->dense_params()) opt_->add_param(t);
    for (auto& g : model_->gamma_params()) opt_->add_param(g, /*apply_weight_decay=*/false);
    for (auto& t : model_->dyrelu_params()) opt_->add_param(t);

    if (cfg_.topology_enabled) {
        TopologySettings ts;
        ts.s_max = cfg_.s_max;
        ts.s_min = cfg_.resolved_s_min();
        ts.n_cycles = cfg_.n_cycles;
        ts.cycle_iters = std::max<int64_t>(
            1, std::llround(cfg_.cycle_epochs * static_cast<double>(steps_per_epoch())));
        ts.update_every_cyclic = cfg_.update_every_cyclic;
        ts.update_every_fixed = cfg_.update_every_fixed;
        ts.prune_rate = cfg_.prune_rate;
        ts.regrowth = cfg_.regrowth;
        ts.schedule = cfg_.schedule;
        ts.per_layer = cfg_.per_layer;
        ts.start_low = cfg_.start_low;
        ts.seed = cfg_.seed * 0x2545f4914f6cdd1dull + 11;
        topo_ = std::make_unique<TopologyController>(ts, model_->masked_params(),
                                                     model_->masked_theoretical());
        topo_->init_masks();
    }
    beta_ = cfg_.arch.activation == ActivationMode::DyreluPhased ? 1.0 : 0.0;
}

int64_t Trainer::steps_per_epoch() const {
    return (data_.train.size() + cfg_.batch_size - 1) / cfg_.batch_size;
}

double Trainer::lr_at(int64_t epoch) const {
    double lr = cfg_.lr;
    for (int64_t drop : cfg_.lr_drop_epochs)
        if (epoch >= drop) lr /= cfg_.lr_drop_factor;
    return lr;
}

void Trainer::apply_phasing(int64_t epoch) {
    if (cfg_.arch.activation != ActivationMode::DyreluPhased) return;
    PhasingSchedule sched{cfg_.phasing_start, cfg_.resolved_phasing_end()};
    beta_ = sched.beta(static_cast<double>(epoch));
    for (auto& t : model_->set_beta(beta_)) opt_->remove_param(t);
}

std::pair<double, double> Trainer::evaluate() {
    const auto& test = data_.test;
    if (test.size() == 0) return {0.0, 0.0};
    double loss_sum = 0, hit_sum = 0;
    int64_t seen = 0;
    for (int64_t start = 0; start < test.size(); start += cfg_.batch_size) {
        const int64_t n = std::min<int64_t>(cfg_.batch_size, test.size() - start);
        std::vector<int64_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = start + i;
        Tensor x = test.gather(idx);
        const auto labels = test.gather_labels(idx);
        Tensor logits = model_->forward(x, /*training=*/false);
        loss_sum += softmax_cross_entropy(logits, labels).item() * static_cast<double>(n);
        hit_sum += batch_accuracy(logits, labels) * static_cast<double>(n);
        seen += n;
    }
    return {loss_sum / static_cast<double>(seen), hit_sum / static_cast<double>(seen)};
}

RunResult Trainer::run() {
    namespace fs = std::filesystem;
    fs::create_directories(cfg_.out_dir);
    MetricSink sink(cfg_.out_dir + "/metrics.csv");
    std::ofstream preact_sink(cfg_.out_dir + "/preact.csv", std::ios::trunc);
    preact_sink << "step,layer_id,positive_fraction,beta\n";
    std::deque<MetricRow> recent;
    const auto t0 = std::chrono::steady_clock::now();
    auto wallclock = [&] {
        if (cfg_.deterministic) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    };
    auto fill_common = [&](MetricRow& row) {
        row.step = step_;
        row.epoch = epoch_;
        row.beta = beta_;
        if (topo_) {
            row.s_current = topo_->current_sparsity();
            row.active_count = topo_->target_active();
        } else {
            int64_t active = 0;
            for (const auto* p : model_->masked_params()) active += p->active_count;
            row.active_count = active;
            row.s_current = 1.0 - static_cast<double>(active) /
                                      static_cast<double>(model_->masked_theoretical());
        }
        row.wallclock = wallclock();
    };
    auto emit = [&](const MetricRow& row) {
        sink.write(row);
        recent.push_back(row);
        if (recent.size() > 20) recent.pop_front();
    };

    const int64_t n_train = data_.train.size();
    PreactStats stats;

    for (epoch_ = 0; epoch_ < cfg_.epochs; ++epoch_) {
        apply_phasing(epoch_);
        opt_->set_lr(static_cast<float>(lr_at(epoch_)));

        std::vector<int64_t> order(static_cast<size_t>(n_train));
        for (int64_t i = 0; i < n_train; ++i) order[static_cast<size_t>(i)] = i;
        Rng shuffle_rng(cfg_.seed * 0x9e3779b97f4a7c15ull + 0x51ull * static_cast<uint64_t>(epoch_) + 3);
        shuffle_rng.shuffle(order);

        for (int64_t start = 0; start < n_train; start += cfg_.batch_size) {
            ++step_;
            const int64_t n = std::min<int64_t>(cfg_.batch_size, n_train - start);
            std::vector<int64_t> idx(order.begin() + start, order.begin() + start + n);
            Tensor x = data_.train.gather(idx);
            const auto labels = data_.train.gather_labels(idx);

            const bool topo_due = topo_ && topo_->is_update_step(step_) &&
                                  (cfg_.stop_updates_epoch <= 0 ||
                                   epoch_ < cfg_.stop_updates_epoch);
            const bool logging = step_ % cfg_.log_every == 0 || topo_due;

            opt_->zero_grad();
            double loss_val, acc, raw_grad_norm = 0;
            {
                Tape tape;
                Tensor logits = model_->forward(x, true, logging ? &stats : nullptr);
                Tensor loss = softmax_cross_entropy(logits, labels);
                loss_val = loss.item();
                acc = batch_accuracy(logits, labels);
                if (!std::isfinite(loss_val)) {
                    sink.flush();
                    std::cerr << "nan loss at step " << step_ << "; last rows:\n"
                              << kMetricHeader << "\n";
                    for (const auto& r : recent)
                        std::cerr << r.step << "," << r.epoch << "," << r.split << "," << r.loss
                                  << "," << r.accuracy << "," << r.s_current << "\n";
                    throw std::runtime_error("trainer: non-finite loss at step " +
                                             std::to_string(step_));
                }
                tape.backward(loss);
            }
            if (logging) raw_grad_norm = grad_norm_sum(model_->masked_params());
            if (cfg_.grad_clip > 0)
                opt_->clip_gradients(static_cast<float>(cfg_.grad_clip));
            opt_->step();
            if (topo_due) topo_->update(step_, opt_.get());

            if (logging) {
                MetricRow row;
                row.split = "train";
                row.loss = loss_val;
                row.accuracy = acc;
                row.grad_norm_sum = raw_grad_norm;
                row.positive_preact_fraction = stats.global_fraction();
                fill_common(row);
                emit(row);
                const auto& names = model_->act_site_names();
                for (size_t i = 0; i < names.size(); ++i)
                    preact_sink << step_ << ',' << names[i] << ','
                                << stats.site_fraction(i) << ',' << beta_ << "\n";
            }
        }

        const auto [test_loss, test_acc] = evaluate();
        MetricRow row;
        row.split = "test";
        row.loss = test_loss;
        row.accuracy = test_acc;
        fill_common(row);
        emit(row);
        sink.flush();
    }

    RunResult res;
    res.checkpoint_path = cfg_.out_dir + "/checkpoint.east";
    save_checkpoint(res.checkpoint_path);
    const auto [test_loss, test_acc] = evaluate();
    res.final_test_loss = test_loss;
    res.final_test_accuracy = test_acc;
    res.final_sparsity =
        topo_ ? topo_->current_sparsity() : model_->census().sparsity();
    res.steps = step_;
    res.metrics_path = sink.path();
    return res;
}

void Trainer::save_checkpoint(const std::string& path) {
    CheckpointMeta meta;
    meta.config_hash = config_hash(cfg_);
    meta.step = step_;
    meta.epoch = epoch_;
    meta.beta = beta_;
    checkpoint_save(path, *model_, opt_.get(), topo_.get(), meta);
}

void Trainer::load_checkpoint(const std::string& path) {
    const CheckpointMeta meta =
        checkpoint_load(path, *model_, opt_.get(), topo_.get(), config_hash(cfg_));
    step_ = meta.step;
    epoch_ = meta.epoch;
    beta_ = meta.beta;
}

}  // namespace east
