#pragma once

// Training loops: AdamW with decoupled weight decay and cosine decay,
// masked-reconstruction pretraining, FF/FE/LoRA fine-tuning with
// early stopping on validation balanced accuracy, and QAT.

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include <json.hpp>

#include "unisig/heads.hpp"
#include "unisig/metrics.hpp"
#include "unisig/model.hpp"

namespace unisig {

template <typename S>
struct LabeledWindow {
    PatchGrid<S> grid;
    int label = 0;
};

template <typename S>
struct TaskData {
    std::vector<LabeledWindow<S>> train, val;
    int64_t num_classes = 2;
};

struct TrainConfig {
    double lr = 1e-4;
    int epochs = 20;
    int batch_size = 8;
    uint64_t seed = 0;
    double weight_decay = 0.01;
    int patience = 5;
    std::ostream* log = nullptr;  // JSON-lines sink, one object per line
};

// ----------------------------- optimizer -----------------------------

template <typename S>
class AdamW {
public:
    explicit AdamW(double lr, double weight_decay = 0.01)
        : lr_(lr), weight_decay_(weight_decay) {}

    double base_lr() const { return lr_; }

    void step(const std::vector<NamedParam<S>>& params, double lr) {
        t_ += 1;
        double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
        double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
        for (const auto& p : params) {
            auto* node = p.tensor.node().get();
            if (node->grad.size() != node->data.size()) continue;  // untouched this step
            auto& slot = state_[node];
            if (slot.m.empty()) {
                slot.m.assign(node->data.size(), 0.0);
                slot.v.assign(node->data.size(), 0.0);
            }
            bool decay = p.tensor.rank() >= 2;  // matrices/tables only
            for (size_t i = 0; i < node->data.size(); ++i) {
                double g = static_cast<double>(node->grad[i]);
                slot.m[i] = beta1_ * slot.m[i] + (1.0 - beta1_) * g;
                slot.v[i] = beta2_ * slot.v[i] + (1.0 - beta2_) * g * g;
                double mhat = slot.m[i] / bc1;
                double vhat = slot.v[i] / bc2;
                double upd = mhat / (std::sqrt(vhat) + eps_);
                if (decay) upd += weight_decay_ * static_cast<double>(node->data[i]);
                node->data[i] -= static_cast<S>(lr * upd);
            }
        }
    }

private:
    struct Slot {
        std::vector<double> m, v;
    };
    double lr_, weight_decay_;
    double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
    int64_t t_ = 0;
    std::map<TensorNode<S>*, Slot> state_;
};

inline double cosine_lr(double base, int64_t step, int64_t total) {
    if (total <= 1) return base;
    double frac = static_cast<double>(step) / static_cast<double>(total - 1);
    return base * 0.5 * (1.0 + std::cos(M_PI * frac));
}

// ----------------------------- pretraining -----------------------------

// One masked-reconstruction step over a batch of grids; gradients land on
// every parameter and a full AdamW update is applied.
template <typename S>
double pretrain_step(Model<S>& model, const std::vector<PatchGrid<S>>& batch, double ratio,
                     uint64_t seed, AdamW<S>& opt, double lr, int64_t step_index = 0) {
    if (batch.empty()) throw ValueError("pretrain_step: empty batch");
    auto params = model.trainable(FinetuneMode::FF);
    Tensor<S> total;
    for (size_t i = 0; i < batch.size(); ++i) {
        const auto& grid = batch[i];
        auto plan = make_mask(grid.channels(), grid.patches(), ratio,
                              derive_seed(seed, "mask." + std::to_string(step_index) + "." +
                                                    std::to_string(i)));
        auto ctx = model.make_context();
        auto loss = model.forward_pretrain_loss(grid, plan, ctx);
        total = i == 0 ? loss : add(total, loss);
    }
    auto mean_loss = scale(total, 1.0 / static_cast<double>(batch.size()));
    double value = static_cast<double>(mean_loss.item());
    if (!std::isfinite(value))
        throw DivergenceError("pretrain diverged at step " + std::to_string(step_index) +
                              ": loss=" + std::to_string(value));
    mean_loss.backward();
    opt.step(params, lr);
    for (auto& p : params) p.tensor.zero_grad();
    return value;
}

template <typename S>
std::vector<double> pretrain(Model<S>& model, const std::vector<PatchGrid<S>>& grids,
                             int64_t steps, const TrainConfig& cfg) {
    AdamW<S> opt(cfg.lr, cfg.weight_decay);
    std::vector<double> losses;
    Rng rng(derive_seed(cfg.seed, "pretrain.batches"));
    for (int64_t s = 0; s < steps; ++s) {
        std::vector<PatchGrid<S>> batch;
        if (static_cast<int>(grids.size()) <= cfg.batch_size) {
            batch = grids;
        } else {
            for (int b = 0; b < cfg.batch_size; ++b)
                batch.push_back(grids[rng.below(static_cast<int64_t>(grids.size()))]);
        }
        double lr = cosine_lr(cfg.lr, s, steps);
        double loss = pretrain_step(model, batch, model.config().mask_ratio, cfg.seed, opt, lr, s);
        losses.push_back(loss);
        if (cfg.log)
            (*cfg.log) << nlohmann::ordered_json({{"step", s}, {"loss", loss}, {"lr", lr}}).dump()
                       << "\n";
    }
    return losses;
}

// ----------------------------- fine-tuning -----------------------------

template <typename S>
Tensor<S> cross_entropy(const Tensor<S>& logits, int label) {
    int64_t k = logits.dim(logits.rank() - 1);
    if (label < 0 || label >= k) throw ValueError("cross_entropy: label out of range");
    auto ls = log_softmax(reshape(logits, {1, k}), 1);
    auto onehot = Tensor<S>::zeros({1, k});
    onehot.at({0, static_cast<int64_t>(label)}) = S(1);
    return scale(sum_all(mul(ls, onehot)), -1.0);
}

// Per-window class probabilities under the model's current (possibly
// quantized) forward path.
template <typename S>
std::pair<std::vector<int>, std::vector<std::vector<double>>> evaluate_scores(
    const Model<S>& model, const std::vector<LabeledWindow<S>>& windows) {
    std::vector<int> labels;
    std::vector<std::vector<double>> scores;
    for (const auto& w : windows) {
        auto ctx = model.make_context();
        auto logits = model.forward_logits(w.grid, ctx);
        auto probs = softmax(logits, 0);
        std::vector<double> row;
        for (S v : probs.data()) row.push_back(static_cast<double>(v));
        scores.push_back(std::move(row));
        labels.push_back(w.label);
    }
    return {labels, scores};
}

template <typename S>
MetricBundle evaluate(const Model<S>& model, const std::vector<LabeledWindow<S>>& windows) {
    auto [labels, scores] = evaluate_scores(model, windows);
    return compute_metrics(labels, scores);
}

// Cross-entropy fine-tuning under the given adaptation mode. Keeps the
// best-validation-balanced-accuracy parameters, early stopping after
// `patience` stale epochs.
template <typename S>
MetricBundle finetune(Model<S>& model, FinetuneMode mode, const TaskData<S>& task,
                      const TrainConfig& cfg) {
    if (mode == FinetuneMode::LoRA) model.enable_lora();
    auto params = model.trainable(mode);
    AdamW<S> opt(cfg.lr, cfg.weight_decay);
    Rng shuffle_rng(derive_seed(cfg.seed, "finetune.shuffle"));

    auto snapshot = [&]() {
        std::vector<std::vector<S>> copy;
        for (const auto& p : params) copy.push_back(p.tensor.data());
        return copy;
    };
    auto restore = [&](const std::vector<std::vector<S>>& copy) {
        for (size_t i = 0; i < params.size(); ++i) params[i].tensor.data() = copy[i];
    };

    MetricBundle best_metrics = evaluate(model, task.val);
    auto best = snapshot();
    double best_score = best_metrics.balanced_accuracy;
    int stale = 0;
    int64_t step = 0;
    int64_t total_steps = static_cast<int64_t>(cfg.epochs) *
                          std::max<int64_t>(1, (task.train.size() + cfg.batch_size - 1) /
                                                   cfg.batch_size);

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<size_t> order(task.train.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        shuffle_rng.shuffle(order.begin(), order.end());
        double epoch_loss = 0.0;
        int64_t batches = 0;
        for (size_t start = 0; start < order.size(); start += cfg.batch_size) {
            size_t end = std::min(order.size(), start + cfg.batch_size);
            Tensor<S> total;
            for (size_t i = start; i < end; ++i) {
                const auto& w = task.train[order[i]];
                auto ctx = model.make_context();
                auto loss = cross_entropy(model.forward_logits(w.grid, ctx), w.label);
                total = i == start ? loss : add(total, loss);
            }
            auto mean_loss = scale(total, 1.0 / static_cast<double>(end - start));
            double value = static_cast<double>(mean_loss.item());
            if (!std::isfinite(value))
                throw DivergenceError("finetune diverged at epoch " + std::to_string(epoch));
            mean_loss.backward();
            double lr = cosine_lr(cfg.lr, step, total_steps);
            opt.step(params, lr);
            for (auto& p : params) p.tensor.zero_grad();
            epoch_loss += value;
            batches++;
            if (cfg.log)
                (*cfg.log) << nlohmann::ordered_json(
                                  {{"step", step}, {"loss", value}, {"lr", lr}})
                                  .dump()
                           << "\n";
            step++;
        }
        auto metrics = evaluate(model, task.val);
        if (cfg.log)
            (*cfg.log) << nlohmann::ordered_json(
                              {{"epoch", epoch},
                               {"train_loss", epoch_loss / std::max<int64_t>(1, batches)},
                               {"val_balanced_accuracy", metrics.balanced_accuracy},
                               {"val_auroc", metrics.auroc}})
                              .dump()
                       << "\n";
        if (metrics.balanced_accuracy > best_score) {
            best_score = metrics.balanced_accuracy;
            best_metrics = metrics;
            best = snapshot();
            stale = 0;
        } else if (++stale > cfg.patience) {
            break;
        }
    }
    restore(best);
    return best_metrics;
}

// ----------------------------- quantized training -----------------------------

// PTQ on the current weights: calibrate on the training windows, then wrap
// weights and activation sites. Parameters are untouched.
template <typename S>
void post_training_quantize(Model<S>& model, const QuantSpec& spec, const TaskData<S>& task,
                            int64_t calib_windows = 16) {
    std::vector<PatchGrid<S>> grids;
    for (const auto& w : task.train) {
        grids.push_back(w.grid);
        if (static_cast<int64_t>(grids.size()) >= calib_windows) break;
    }
    auto stats = calibrate(model, grids);
    apply_ptq(model, spec, stats);
}

// QAT: fake-quantized forward with straight-through gradients for `epochs`
// fine-tuning epochs. With zero epochs this is exactly PTQ.
template <typename S>
MetricBundle qat_finetune(Model<S>& model, const QuantSpec& spec, const TaskData<S>& task,
                          int epochs = 15, const TrainConfig& base_cfg = {}) {
    QuantSpec qat_spec = spec;
    qat_spec.mode = QuantMode::QAT;
    post_training_quantize(model, qat_spec, task);
    TrainConfig cfg = base_cfg;
    cfg.epochs = epochs;
    return finetune(model, FinetuneMode::FF, task, cfg);
}

}  // namespace unisig
