#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <ostream>
#include <random>
#include <string>
#include <vector>

#include "mmgraph/model.hpp"

namespace mmgraph {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    AdamConfig adam;
    std::size_t batch_size = 32;
    std::size_t epochs = 50;
    std::uint64_t seed = 7;
    double reg_weight = 0.01;

    void validate() const {
        if (!(adam.lr >= 0.0)) throw ConfigError("train: lr must be >= 0");
        if (batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
        if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0 && adam.beta2 >= 0.0 && adam.beta2 < 1.0))
            throw ConfigError("train: betas must lie in [0, 1)");
    }
};

/// First and second moment estimates per parameter, plus the shared step counter.
struct AdamState {
    std::vector<std::vector<double>> m, v;
    std::uint64_t step = 0;
};

/// One bias-corrected Adam update over every parameter, using each tensor's accumulated gradient.
inline void adam_step(const NamedParams& params, AdamState& state, const AdamConfig& cfg) {
    if (state.m.empty()) {
        for (const auto& [name, t] : params) {
            state.m.emplace_back(t.numel(), 0.0);
            state.v.emplace_back(t.numel(), 0.0);
        }
    }
    if (state.m.size() != params.size()) throw ShapeError("adam: state does not match parameter list");
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto g = params[i].second.grad();
        for (double x : g)
            if (!std::isfinite(x)) throw DivergenceError("adam: non-finite gradient in '" + params[i].first + "'");
    }
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Tensor p = params[i].second;
        const auto g = p.grad();
        auto w = p.mutable_data();
        auto& m = state.m[i];
        auto& v = state.v[i];
        if (m.size() != w.size()) throw ShapeError("adam: state shape mismatch for '" + params[i].first + "'");
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = cfg.beta1 * m[k] + (1.0 - cfg.beta1) * g[k];
            v[k] = cfg.beta2 * v[k] + (1.0 - cfg.beta2) * g[k] * g[k];
            w[k] -= cfg.lr * (m[k] / c1) / (std::sqrt(v[k] / c2) + cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------------------------
// Metrics

struct MetricsReport {
    double acc2 = 0.0;
    double acc7 = 0.0;
    double f1 = 0.0;
    double mae = 0.0;
    double corr = 0.0;
    bool corr_defined = true;  // false when either side has zero variance (corr reported as 0)
};

/// Rounds half away from zero after clipping to [-3, 3].
inline int sentiment_class(double x) { return static_cast<int>(std::round(std::clamp(x, -3.0, 3.0))); }

/// Acc2 and F1 ignore items whose label is exactly 0; F1 is for the positive class.
inline MetricsReport compute_metrics(std::span<const double> preds, std::span<const double> labels) {
    if (preds.size() != labels.size()) throw ShapeError("metrics: prediction/label count mismatch");
    if (preds.empty()) throw ShapeError("metrics: empty input");
    MetricsReport r;
    std::size_t nonzero = 0, agree = 0, tp = 0, fp = 0, fn = 0, exact7 = 0;
    double abs_sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double p = preds[i], y = labels[i];
        abs_sum += std::abs(p - y);
        if (sentiment_class(p) == sentiment_class(y)) ++exact7;
        if (y == 0.0) continue;
        ++nonzero;
        const bool pp = p > 0.0, yp = y > 0.0;
        if (pp == yp) ++agree;
        if (pp && yp) ++tp;
        if (pp && !yp) ++fp;
        if (!pp && yp) ++fn;
    }
    const double n = static_cast<double>(preds.size());
    r.mae = abs_sum / n;
    r.acc7 = static_cast<double>(exact7) / n;
    r.acc2 = nonzero ? static_cast<double>(agree) / static_cast<double>(nonzero) : 0.0;
    // No positives on either side means nothing was missed or invented.
    const std::size_t denom = 2 * tp + fp + fn;
    r.f1 = denom ? 2.0 * static_cast<double>(tp) / static_cast<double>(denom) : (nonzero ? 1.0 : 0.0);
    const auto c = pearson(preds, labels);
    r.corr_defined = c.has_value();
    r.corr = c.value_or(0.0);
    return r;
}

inline std::string metrics_csv_header() { return "epoch,split,acc2,acc7,f1,mae,corr"; }

inline std::string metrics_csv_line(std::size_t epoch, const std::string& split, const MetricsReport& r) {
    return std::to_string(epoch) + "," + split + "," + format_double(r.acc2) + "," + format_double(r.acc7) + "," +
           format_double(r.f1) + "," + format_double(r.mae) + "," + format_double(r.corr);
}

// ---------------------------------------------------------------------------------------------
// Evaluation and training loop

inline std::vector<double> predict(const Model& model, const Dataset& ds) {
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& u : ds.items) out.push_back(model.forward(u.modalities).item());
    return out;
}

inline std::vector<double> labels_of(const Dataset& ds) {
    std::vector<double> out;
    out.reserve(ds.size());
    for (const auto& u : ds.items) out.push_back(u.label);
    return out;
}

inline MetricsReport evaluate(const Model& model, const Dataset& ds) {
    const auto preds = predict(model, ds);
    return compute_metrics(preds, labels_of(ds));
}

struct EpochLog {
    std::size_t epoch = 0;
    MetricsReport train;
    MetricsReport val;
};

struct FitResult {
    std::vector<EpochLog> log;
    std::size_t best_epoch = 0;  // 0 = initial parameters were never beaten
    double best_val_mae = 0.0;
};

/// Mini-batch Adam on MAE (+ regularizer). Items are reshuffled each epoch from one RNG seeded
/// with cfg.seed. The model ends holding the parameters with the lowest validation MAE.
inline FitResult fit(Model& model, const Dataset& train, const Dataset& val, const TrainConfig& cfg,
                     const std::function<void(const EpochLog&)>& on_epoch = {}) {
    cfg.validate();
    if (train.items.empty()) throw ConfigError("fit: empty training set");
    const Dataset& selection = val.items.empty() ? train : val;
    const NamedParams params = model.parameters();
    AdamState state;
    std::mt19937_64 rng(cfg.seed);
    std::vector<std::size_t> order(train.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    FitResult result;
    auto best = snapshot(params);
    result.best_val_mae = cfg.epochs ? evaluate(model, selection).mae : 0.0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        for (std::size_t start = 0, step = 0; start < order.size(); start += cfg.batch_size, ++step) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const Utterance*> batch;
            std::vector<double> y;
            for (std::size_t i = start; i < end; ++i) {
                batch.push_back(&train.items[order[i]]);
                y.push_back(train.items[order[i]].label);
            }
            model.zero_grad();
            Tape tape;
            Tensor objective;
            {
                TapeScope scope(tape);
                const Tensor pred = model.forward_batch(batch);
                objective = model_loss(model, pred, Tensor({y.size(), 1}, y), cfg.reg_weight);
            }
            if (!std::isfinite(objective.item()))
                throw DivergenceError("fit: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step));
            tape.backward(objective);
            try {
                adam_step(params, state, cfg.adam);
            } catch (const DivergenceError& e) {
                throw DivergenceError(std::string(e.what()) + " at epoch " + std::to_string(epoch) + ", step " +
                                      std::to_string(step));
            }
        }
        EpochLog entry{epoch, evaluate(model, train), val.items.empty() ? MetricsReport{} : evaluate(model, val)};
        const double sel = val.items.empty() ? entry.train.mae : entry.val.mae;
        if (sel < result.best_val_mae) {
            result.best_val_mae = sel;
            result.best_epoch = epoch;
            best = snapshot(params);
        }
        result.log.push_back(entry);
        if (on_epoch) on_epoch(entry);
    }
    restore(params, best);
    return result;
}

}  // namespace mmgraph
