#pragma once

// Probe training: mean binary cross-entropy on sigmoid(f(A)), optimised with
// AdamW (decoupled weight decay, bias exempt), linear per-epoch learning-rate
// decay, gradient accumulation, and early stopping on a held-out split.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "stakes/error.hpp"
#include "stakes/manifest.hpp"
#include "stakes/probe.hpp"
#include "stakes/random.hpp"

namespace stakes {

struct TrainConfig {
    std::size_t batch_size = 16;
    std::size_t max_epochs = 200;
    std::size_t early_stop_patience = 50;
    std::size_t grad_accum = 4;
    double lr_start = 5e-3;
    double lr_final = 1e-4;
    double weight_decay = 0.01;
    std::uint64_t seed = 0;
    double validation_fraction = 0.1;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    /// Per-kind hyperparameters used for the synthetic-data probes.
    static TrainConfig defaults_for(ProbeKind kind) {
        TrainConfig c;
        if (kind == ProbeKind::Attention) c.lr_final = 5e-4;
        if (kind == ProbeKind::Softmax) {
            c.early_stop_patience = 10;
            c.weight_decay = 1e-3;
        }
        return c;
    }

    /// Settings for continuing training on a handful of deployment samples.
    static TrainConfig dev_finetune_for(ProbeKind kind) {
        auto c = defaults_for(kind);
        if (kind == ProbeKind::Attention || kind == ProbeKind::Softmax) {
            c.batch_size = 128;
            c.grad_accum = 1;
        }
        return c;
    }

    void validate() const {
        require(batch_size >= 1 && max_epochs >= 1 && early_stop_patience >= 1 && grad_accum >= 1,
                ErrorKind::InvalidArgument, "batch_size, max_epochs, patience and grad_accum must be positive");
        require(lr_start > 0.0 && lr_final > 0.0 && lr_final <= lr_start, ErrorKind::InvalidArgument,
                "learning rates must satisfy 0 < lr_final <= lr_start");
        require(weight_decay >= 0.0, ErrorKind::InvalidArgument, "weight_decay must be nonnegative");
        require(validation_fraction > 0.0 && validation_fraction < 1.0, ErrorKind::InvalidArgument,
                "validation_fraction must be in (0, 1)");
    }

    /// Linear decay from lr_start at epoch 0 to lr_final at the last epoch.
    double learning_rate(std::size_t epoch) const { return linear_lr(lr_start, lr_final, epoch, max_epochs); }

    static double linear_lr(double start, double final, std::size_t epoch, std::size_t epochs) {
        if (epochs <= 1) return start;
        if (epoch + 1 >= epochs) return final;
        const double frac = static_cast<double>(epoch) / static_cast<double>(epochs - 1);
        return start + (final - start) * frac;
    }
};

struct OptimizerState {
    ProbeParams first_moment;
    ProbeParams second_moment;
    std::uint64_t step = 0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;

    static OptimizerState for_params(const ProbeParams& params, const TrainConfig& config = {}) {
        OptimizerState s;
        s.first_moment = params;
        s.first_moment.for_each([](double& x) { x = 0.0; });
        s.second_moment = s.first_moment;
        s.beta1 = config.beta1;
        s.beta2 = config.beta2;
        s.epsilon = config.epsilon;
        return s;
    }
};

namespace detail {

inline bool same_shape(const ProbeParams& a, const ProbeParams& b) {
    return a.direction.size() == b.direction.size() && a.value_direction.size() == b.value_direction.size();
}

// Calls fn(param, grad, m, v, is_bias) for every scalar.
template <typename Fn>
void zip_params(ProbeParams& p, const ProbeParams& g, ProbeParams& m, ProbeParams& v, Fn&& fn) {
    for (std::size_t i = 0; i < p.direction.size(); ++i) {
        fn(p.direction[i], g.direction[i], m.direction[i], v.direction[i], false);
    }
    for (std::size_t i = 0; i < p.value_direction.size(); ++i) {
        fn(p.value_direction[i], g.value_direction[i], m.value_direction[i], v.value_direction[i], false);
    }
    fn(p.bias, g.bias, m.bias, v.bias, true);
}

inline void axpy(ProbeParams& acc, const ProbeParams& x, double scale) {
    for (std::size_t i = 0; i < acc.direction.size(); ++i) acc.direction[i] += scale * x.direction[i];
    for (std::size_t i = 0; i < acc.value_direction.size(); ++i) acc.value_direction[i] += scale * x.value_direction[i];
    acc.bias += scale * x.bias;
}

inline double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

}  // namespace detail

/// Decoupled-weight-decay Adam step, applied in place. The bias is not decayed.
inline void adamw_step(OptimizerState& state, ProbeParams& params, const ProbeParams& gradient, double lr,
                       double weight_decay) {
    require(detail::same_shape(params, gradient) && detail::same_shape(params, state.first_moment) &&
                detail::same_shape(params, state.second_moment),
            ErrorKind::DimensionMismatch, "optimizer, parameter and gradient shapes differ");
    auto g = gradient;
    bool finite = true;
    g.for_each([&](double& x) { finite = finite && std::isfinite(x); });
    require(finite, ErrorKind::NonFinite, "gradient contains a non-finite value");

    state.step += 1;
    const auto t = static_cast<double>(state.step);
    const double correction1 = 1.0 - std::pow(state.beta1, t);
    const double correction2 = 1.0 - std::pow(state.beta2, t);
    detail::zip_params(params, g, state.first_moment, state.second_moment,
                       [&](double& p, double grad, double& m, double& v, bool is_bias) {
                           if (!is_bias) p *= 1.0 - lr * weight_decay;
                           m = state.beta1 * m + (1.0 - state.beta1) * grad;
                           v = state.beta2 * v + (1.0 - state.beta2) * grad * grad;
                           const double m_hat = m / correction1;
                           const double v_hat = v / correction2;
                           p -= lr * m_hat / (std::sqrt(v_hat) + state.epsilon);
                       });
}

struct LossAndGrad {
    double loss = 0.0;
    ProbeParams gradient;
};

/// Mean BCE over the batch and its exact gradient (Max-type pools use a
/// subgradient at ties).
inline LossAndGrad loss_and_grad(std::span<const LabeledShard> batch, const ProbeConfig& config,
                                 const ProbeParams& params) {
    require(!batch.empty(), ErrorKind::InvalidArgument, "loss needs a nonempty batch");
    LossAndGrad out{0.0, ProbeParams::zeros(config)};
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    for (const auto& ex : batch) {
        require(ex.label == 0 || ex.label == 1, ErrorKind::InvalidArgument, "labels must be 0 or 1");
        // First pass computes f; the gradient pass needs dL/df = sigmoid(f) - y as its scale.
        const double f = aggregate(*ex.shard, config, params);
        out.loss += (detail::softplus(f) - ex.label * f) * inv_n;
        aggregate_impl(*ex.shard, config, params, &out.gradient, (sigmoid(f) - ex.label) * inv_n);
    }
    return out;
}

inline double mean_loss(std::span<const LabeledShard> examples, const ProbeConfig& config, const ProbeParams& params) {
    double total = 0.0;
    for (const auto& ex : examples) {
        const double f = aggregate(*ex.shard, config, params);
        total += detail::softplus(f) - ex.label * f;
    }
    return total / static_cast<double>(examples.size());
}

/// Sums micro-batch gradients and hands back their mean.
class GradientAccumulator {
public:
    explicit GradientAccumulator(const ProbeConfig& config) : sum_(ProbeParams::zeros(config)), zero_(sum_) {}

    void add(const ProbeParams& gradient) {
        detail::axpy(sum_, gradient, 1.0);
        ++count_;
    }
    std::size_t count() const noexcept { return count_; }

    ProbeParams take_mean() {
        auto mean = sum_;
        mean.for_each([&](double& x) { x /= static_cast<double>(count_); });
        sum_ = zero_;
        count_ = 0;
        return mean;
    }

private:
    ProbeParams sum_;
    ProbeParams zero_;
    std::size_t count_ = 0;
};

struct TrainReport {
    std::size_t epochs_run = 0;
    std::size_t best_epoch = 0;
    std::vector<double> train_loss_curve;
    std::vector<double> val_loss_curve;
    std::vector<double> lr_curve;
    ProbeParams final_params;

    friend bool operator==(const TrainReport&, const TrainReport&) = default;
};

inline ProbeParams initial_params(const ProbeConfig& config, std::uint64_t seed) {
    Rng rng(Rng::derive(seed, 0x1417));
    auto params = ProbeParams::zeros(config);
    const double scale = 0.1 / std::sqrt(static_cast<double>(config.dim));
    for (auto& x : params.direction) x = scale * rng.normal();
    for (auto& x : params.value_direction) x = scale * rng.normal();
    return params;
}

namespace detail {

inline void require_both_labels(std::span<const LabeledShard> examples, const char* what) {
    bool pos = false;
    bool neg = false;
    for (const auto& ex : examples) (ex.label == 1 ? pos : neg) = true;
    require(pos && neg, ErrorKind::InvalidArgument, std::string(what) + " must contain both labels");
}

// One pass over `examples` in seeded order; returns the mean pre-step loss.
inline double run_epoch(std::span<const LabeledShard> examples, const ProbeConfig& config, const TrainConfig& tc,
                        std::size_t epoch_stream, double lr, ProbeParams& params, OptimizerState& state) {
    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(Rng::derive(tc.seed, epoch_stream));
    rng.shuffle(order);

    GradientAccumulator acc(config);
    std::vector<LabeledShard> batch;
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += tc.batch_size) {
        batch.clear();
        for (std::size_t i = start; i < std::min(order.size(), start + tc.batch_size); ++i) {
            batch.push_back(examples[order[i]]);
        }
        const auto lg = loss_and_grad(batch, config, params);
        loss_sum += lg.loss * static_cast<double>(batch.size());
        acc.add(lg.gradient);
        if (acc.count() == tc.grad_accum) adamw_step(state, params, acc.take_mean(), lr, tc.weight_decay);
    }
    if (acc.count() > 0) adamw_step(state, params, acc.take_mean(), lr, tc.weight_decay);
    return loss_sum / static_cast<double>(examples.size());
}

}  // namespace detail

/// Trains with early stopping on `validation` and returns the parameters of
/// the best validation epoch. Parameters are rounded to f32 after every epoch.
inline TrainReport train(std::span<const LabeledShard> training, std::span<const LabeledShard> validation,
                         const ProbeConfig& config, const TrainConfig& tc,
                         std::optional<ProbeParams> init = std::nullopt) {
    config.validate();
    tc.validate();
    require(!training.empty(), ErrorKind::InvalidArgument, "training split is empty");
    require(!validation.empty(), ErrorKind::InvalidArgument, "validation split is empty");
    detail::require_both_labels(training, "training data");
    for (const auto& ex : training) {
        require(ex.shard->dim() == config.dim, ErrorKind::DimensionMismatch, "training shard dim != probe dim");
    }

    auto params = init ? *init : initial_params(config, tc.seed);
    check_params(config, params);
    auto state = OptimizerState::for_params(params, tc);

    TrainReport report;
    double best_val = std::numeric_limits<double>::infinity();
    ProbeParams best_params = params;
    std::size_t since_best = 0;
    for (std::size_t epoch = 0; epoch < tc.max_epochs; ++epoch) {
        const double lr = tc.learning_rate(epoch);
        const double train_loss = detail::run_epoch(training, config, tc, epoch + 1, lr, params, state);
        // Snapshots are kept at file precision so the reported curve describes the saved probe.
        params = round_to_f32(std::move(params));
        const double val_loss = mean_loss(validation, config, params);
        report.train_loss_curve.push_back(train_loss);
        report.val_loss_curve.push_back(val_loss);
        report.lr_curve.push_back(lr);
        report.epochs_run = epoch + 1;
        if (val_loss < best_val) {
            best_val = val_loss;
            best_params = params;
            report.best_epoch = epoch;
            since_best = 0;
        } else if (++since_best >= tc.early_stop_patience) {
            break;
        }
    }
    report.final_params = std::move(best_params);
    return report;
}

/// Stratified hold-out of `validation_fraction` per label, seeded.
inline std::pair<std::vector<LabeledShard>, std::vector<LabeledShard>> stratified_holdout(
    std::span<const LabeledShard> examples, double fraction, std::uint64_t seed) {
    std::vector<LabeledShard> train_part;
    std::vector<LabeledShard> val_part;
    std::vector<std::size_t> by_label[2];
    for (std::size_t i = 0; i < examples.size(); ++i) by_label[examples[i].label == 1].push_back(i);
    std::vector<bool> held(examples.size(), false);
    Rng rng(Rng::derive(seed, 0x7A11D));
    for (auto& idx : by_label) {
        rng.shuffle(idx);
        auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(idx.size())));
        if (idx.size() >= 2) n_val = std::clamp<std::size_t>(n_val, 1, idx.size() - 1);
        else n_val = 0;
        for (std::size_t i = 0; i < n_val; ++i) held[idx[i]] = true;
    }
    for (std::size_t i = 0; i < examples.size(); ++i) (held[i] ? val_part : train_part).push_back(examples[i]);
    return {std::move(train_part), std::move(val_part)};
}

/// Trains on `examples`, holding out `tc.validation_fraction` for early stopping.
inline TrainReport train(std::span<const LabeledShard> examples, const ProbeConfig& config, const TrainConfig& tc,
                         std::optional<ProbeParams> init = std::nullopt) {
    tc.validate();
    detail::require_both_labels(examples, "training data");
    const auto [train_part, val_part] = stratified_holdout(examples, tc.validation_fraction, tc.seed);
    return train(train_part, val_part, config, tc, std::move(init));
}

inline constexpr std::size_t kDevFinetuneEpochs = 20;

/// Continues from `base` for exactly `epochs` epochs on a balanced sample set,
/// without early stopping. Learning rate decays linearly over those epochs.
inline ProbeParams finetune_on_dev(const ProbeParams& base, std::span<const LabeledShard> dev_samples,
                                   const ProbeConfig& config, const TrainConfig& tc,
                                   std::size_t epochs = kDevFinetuneEpochs) {
    config.validate();
    tc.validate();
    check_params(config, base);
    require(epochs >= 1, ErrorKind::InvalidArgument, "finetuning needs at least one epoch");
    std::size_t positives = 0;
    for (const auto& ex : dev_samples) positives += static_cast<std::size_t>(ex.label == 1);
    require(2 * positives == dev_samples.size(), ErrorKind::InvalidArgument,
            "dev samples must be balanced between labels");
    if (dev_samples.empty()) return base;

    auto params = base;
    auto state = OptimizerState::for_params(params, tc);
    for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
        const double lr = TrainConfig::linear_lr(tc.lr_start, tc.lr_final, epoch, epochs);
        detail::run_epoch(dev_samples, config, tc, 0x0DE5 + epoch, lr, params, state);
    }
    return round_to_f32(params);
}

inline double accuracy_at_half(std::span<const LabeledShard> examples, const ProbeConfig& config,
                               const ProbeParams& params) {
    std::size_t correct = 0;
    for (const auto& ex : examples) {
        const int predicted = score(*ex.shard, config, params) >= 0.5 ? 1 : 0;
        correct += static_cast<std::size_t>(predicted == ex.label);
    }
    return static_cast<double>(correct) / static_cast<double>(examples.size());
}

/// Stratified fold ids in [0, folds), seeded.
inline std::vector<std::size_t> stratified_folds(std::span<const LabeledShard> examples, std::size_t folds,
                                                 std::uint64_t seed) {
    std::vector<std::size_t> fold(examples.size(), 0);
    std::vector<std::size_t> by_label[2];
    for (std::size_t i = 0; i < examples.size(); ++i) by_label[examples[i].label == 1].push_back(i);
    Rng rng(Rng::derive(seed, 0xF01D));
    for (auto& idx : by_label) {
        rng.shuffle(idx);
        for (std::size_t k = 0; k < idx.size(); ++k) fold[idx[k]] = k % folds;
    }
    return fold;
}

struct LayerSelection {
    int best_layer = 0;
    std::map<int, double> mean_accuracy;
};

/// k-fold cross-validated accuracy (threshold 0.5) per layer; returns the
/// argmax layer, ties going to the lowest index.
inline LayerSelection layer_cross_validation(const std::map<int, std::vector<LabeledShard>>& by_layer,
                                             const ProbeConfig& config, const TrainConfig& tc,
                                             std::size_t folds = 5) {
    require(!by_layer.empty(), ErrorKind::InvalidArgument, "layer selection needs at least one layer");
    require(folds >= 2, ErrorKind::InvalidArgument, "cross-validation needs at least two folds");
    LayerSelection out;
    double best = -1.0;
    for (const auto& [layer, examples] : by_layer) {
        std::size_t positives = 0;
        for (const auto& ex : examples) positives += static_cast<std::size_t>(ex.label == 1);
        require(examples.size() >= folds, ErrorKind::InvalidArgument,
                "layer " + std::to_string(layer) + " has fewer samples than folds");
        require(positives >= folds && examples.size() - positives >= folds, ErrorKind::InvalidArgument,
                "layer " + std::to_string(layer) + " cannot be split into stratified folds");

        const auto fold = stratified_folds(examples, folds, tc.seed);
        double acc_sum = 0.0;
        for (std::size_t k = 0; k < folds; ++k) {
            std::vector<LabeledShard> fit;
            std::vector<LabeledShard> held;
            for (std::size_t i = 0; i < examples.size(); ++i) (fold[i] == k ? held : fit).push_back(examples[i]);
            const auto report = train(fit, config, tc);
            acc_sum += accuracy_at_half(held, config, report.final_params);
        }
        const double mean = acc_sum / static_cast<double>(folds);
        out.mean_accuracy[layer] = mean;
        if (mean > best) {
            best = mean;
            out.best_layer = layer;
        }
    }
    return out;
}

}  // namespace stakes
