#pragma once

#include "tprec/checkpoint.hpp"
#include "tprec/data.hpp"
#include "tprec/errors.hpp"
#include "tprec/model.hpp"
#include "tprec/optim.hpp"
#include "tprec/seq2seq.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

namespace tprec {

struct EpochMetrics {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_rmse = 0.0;
    double p_value = 0.0;  // mean degree applied during the epoch
    std::size_t clip_events = 0;

    bool operator==(const EpochMetrics&) const = default;
};

inline json to_json_value(const EpochMetrics& m) {
    return {{"epoch", m.epoch},
            {"train_loss", m.train_loss},
            {"val_rmse", m.val_rmse},
            {"p_value", m.p_value},
            {"clip_events", m.clip_events}};
}

/// One JSON object per line.
inline std::string metrics_jsonl(std::span<const EpochMetrics> log) {
    std::string out;
    for (const auto& m : log) out += to_json_value(m).dump() + "\n";
    return out;
}

using EpochCallback = std::function<void(const EpochMetrics&)>;

inline std::vector<Vector> matrix_rows(const Matrix& m, std::size_t begin, std::size_t end) {
    if (begin > end || end > m.rows) throw ArgumentError("row range out of bounds");
    std::vector<Vector> out;
    out.reserve(end - begin);
    for (std::size_t r = begin; r < end; ++r) {
        const auto row = m.row(r);
        out.emplace_back(row.begin(), row.end());
    }
    return out;
}

struct ForecastResult {
    std::vector<Vector> predictions;  // original units
    double rmse = 0.0;                // original units
    double mean_degree = 0.0;
};

/// Teacher-forced one-step forecasts: starting from the zero state at index
/// 0, the true value at t-1 is fed and the value at t predicted, for targets
/// t in [first_target, end_target). `values` are normalized.
inline ForecastResult rolling_forecast(const ForecastModel& model, const NormStats& stats, const Matrix& values,
                                       std::size_t first_target, std::size_t end_target) {
    if (first_target == 0 || first_target >= end_target || end_target > values.rows)
        throw ArgumentError("rolling_forecast: need 0 < first_target < end_target <= series length");
    if (values.cols != model.spec.input_dim || stats.mean.size() != values.cols)
        throw ShapeError("rolling_forecast: channel count mismatch");
    ForecastResult res;
    RunState st = initial_state(model.core);
    double sse = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 1; t < end_target; ++t) {
        const Vector& h = core_step(model.core, model.core.degree, values.row(t - 1), st);
        if (t < first_target) continue;
        Vector y = readout(model.w_out, model.b_out, h);
        for (std::size_t c = 0; c < y.size(); ++c) {
            y[c] = stats.denormalize(y[c], c);
            const double e = y[c] - stats.denormalize(values(t, c), c);
            sse += e * e;
            ++count;
        }
        res.mean_degree += st.p_prev;
        res.predictions.push_back(std::move(y));
    }
    res.rmse = std::sqrt(sse / static_cast<double>(count));
    res.mean_degree /= static_cast<double>(res.predictions.size());
    return res;
}

/// Scores the test split of `ds` with the checkpointed single-cell model.
inline ForecastResult rolling_forecast(const Checkpoint& ckpt, const SeriesDataset& ds) {
    const auto* model = std::get_if<ForecastModel>(&ckpt.model);
    if (!model) throw ArgumentError("rolling_forecast: checkpoint does not hold a single-cell model");
    if (ckpt.norm_stats.mean.size() != ds.channels()) throw ShapeError("rolling_forecast: checkpoint stats mismatch");
    Matrix values(ds.length(), ds.channels());
    for (std::size_t t = 0; t < ds.length(); ++t)
        for (std::size_t c = 0; c < ds.channels(); ++c) values(t, c) = ckpt.norm_stats.normalize(ds.raw(t, c), c);
    return rolling_forecast(*model, ckpt.norm_stats, values, ds.val_end, ds.length());
}

struct TrainResult {
    Checkpoint best;
    std::vector<EpochMetrics> log;
    double best_val_rmse = std::numeric_limits<double>::infinity();
    bool diverged = false;
    std::string divergence_report;
};

namespace detail {

inline void round_to_float(std::span<double> v) {
    for (double& x : v) x = static_cast<double>(static_cast<float>(x));
}

/// Clips, steps the optimizer and re-clamps the degree. Returns whether
/// clipping fired.
template <class Model>
bool apply_update(Model& model, const Model& grad, OptimizerState& opt, const TrainConfig& cfg) {
    Vector g = flatten_params(grad);
    const bool clipped = cfg.grad_clip_norm ? clip_global_norm(g, *cfg.grad_clip_norm) : false;
    Vector w = flatten_params(model);
    optimizer_step(w, g, opt, cfg.learning_rate);
    if (cfg.precision == Precision::F32) round_to_float(w);
    unflatten_params(model, w);
    return clipped;
}

}  // namespace detail

/// Windowed truncated-BPTT training of a single cell on the training split,
/// one optimizer step per window with the hidden state carried across
/// windows. Returns the checkpoint with the best validation RMSE. A
/// non-finite loss or gradient stops training and sets `diverged`.
inline TrainResult train_single_cell(const SeriesDataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                                     const EpochCallback& on_epoch = {}) {
    spec.validate();
    cfg.validate();
    if (spec.input_dim != ds.channels())
        throw ShapeError("train: model input_dim " + std::to_string(spec.input_dim) + " does not match " +
                         std::to_string(ds.channels()) + " data channels");
    if (ds.train_end < 2) throw ArgumentError("train: training split needs at least two points");

    ForecastModel model = make_forecast_model(spec, cfg.seed);
    const auto series = matrix_rows(ds.values, 0, ds.train_end);
    const std::span<const Vector> inputs(series.data(), series.size() - 1);
    const std::span<const Vector> targets(series.data() + 1, series.size() - 1);
    OptimizerState opt = OptimizerState::fresh(cfg.optimizer, param_count(model));
    const std::string hash = config_hash(spec, cfg);

    TrainResult res;
    auto snapshot = [&](std::size_t epoch) { return Checkpoint{model, cfg, opt, epoch, ds.norm_stats, hash}; };
    res.best = snapshot(0);

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochMetrics m;
        m.epoch = epoch;
        RunState st = initial_state(model.core);
        double loss_sum = 0.0;
        double p_sum = 0.0;
        try {
            for (std::size_t s = 0; s < inputs.size(); s += cfg.bptt_window) {
                const std::size_t len = std::min(cfg.bptt_window, inputs.size() - s);
                auto wg = bptt_gradients(model, inputs.subspan(s, len), targets.subspan(s, len), cfg.loss, std::move(st));
                if (!std::isfinite(wg.loss)) throw NumericError("non-finite training loss");
                st = std::move(wg.final_state);
                loss_sum += cfg.loss == LossKind::MSE ? wg.loss * static_cast<double>(len) : wg.loss;
                p_sum += wg.mean_degree * static_cast<double>(len);
                if (detail::apply_update(model, wg.grad, opt, cfg)) ++m.clip_events;
                clamp_degree(model.core.degree);
            }
            m.train_loss = cfg.loss == LossKind::MSE ? loss_sum / static_cast<double>(inputs.size()) : loss_sum;
            m.p_value = p_sum / static_cast<double>(inputs.size());
            m.val_rmse = rolling_forecast(model, ds.norm_stats, ds.values, ds.train_end, ds.val_end).rmse;
            if (!std::isfinite(m.val_rmse)) throw NumericError("non-finite validation RMSE");
        } catch (const NumericError& e) {
            res.diverged = true;
            res.divergence_report = "diverged at epoch " + std::to_string(epoch) + ": " + e.what() +
                                    "; returning the best finite checkpoint from epoch " +
                                    std::to_string(res.best.epoch);
            return res;
        }
        res.log.push_back(m);
        if (on_epoch) on_epoch(m);
        if (m.val_rmse < res.best_val_rmse) {
            res.best_val_rmse = m.val_rmse;
            res.best = snapshot(epoch);
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Encoder-decoder training

/// Start indices s with [s, s + prefix + horizon) inside [begin, end).
inline std::vector<std::size_t> seq2seq_windows(std::size_t begin, std::size_t end, std::size_t prefix,
                                                std::size_t horizon) {
    std::vector<std::size_t> starts;
    for (std::size_t s = begin; s + prefix + horizon <= end; ++s) starts.push_back(s);
    return starts;
}

struct Seq2SeqEval {
    std::vector<std::vector<Vector>> predictions;  // original units, one horizon per window
    double rmse = 0.0;
};

inline Seq2SeqEval seq2seq_evaluate(const Seq2SeqModel& model, const NormStats& stats, const Matrix& values,
                                    std::span<const std::size_t> starts, std::size_t prefix, std::size_t horizon) {
    if (starts.empty()) throw ArgumentError("seq2seq: no complete windows in the evaluated split");
    Seq2SeqEval ev;
    double sse = 0.0;
    std::size_t count = 0;
    for (auto s : starts) {
        const auto pre = matrix_rows(values, s, s + prefix);
        auto pred = seq2seq_forward(model, pre, horizon);
        for (std::size_t k = 0; k < horizon; ++k)
            for (std::size_t c = 0; c < pred[k].size(); ++c) {
                pred[k][c] = stats.denormalize(pred[k][c], c);
                const double e = pred[k][c] - stats.denormalize(values(s + prefix + k, c), c);
                sse += e * e;
                ++count;
            }
        ev.predictions.push_back(std::move(pred));
    }
    ev.rmse = std::sqrt(sse / static_cast<double>(count));
    return ev;
}

struct Seq2SeqResult {
    Checkpoint best;
    std::vector<EpochMetrics> log;
    std::vector<std::vector<Vector>> test_predictions;
    double test_rmse = 0.0;
    double untrained_test_rmse = 0.0;
    bool diverged = false;
    std::string divergence_report;
};

/// Trains on prefix/horizon windows of the training split with
/// `batch_windows` windows per update, selects on validation RMSE and
/// reports horizon RMSE on the test split.
inline Seq2SeqResult seq2seq_train_and_forecast(const SeriesDataset& ds, const ModelSpec& spec, const TrainConfig& cfg,
                                                bool shared_degree = true, const EpochCallback& on_epoch = {}) {
    spec.validate();
    cfg.validate();
    if (spec.input_dim != ds.channels()) throw ShapeError("seq2seq: model input_dim does not match data channels");
    const std::size_t pre = cfg.prefix_length, hor = cfg.horizon;
    const auto train_w = seq2seq_windows(0, ds.train_end, pre, hor);
    const auto val_w = seq2seq_windows(ds.train_end, ds.val_end, pre, hor);
    const auto test_w = seq2seq_windows(ds.val_end, ds.length(), pre, hor);
    if (train_w.empty() || val_w.empty() || test_w.empty())
        throw ArgumentError("seq2seq: every split must hold at least one prefix + horizon window");

    Seq2SeqModel model = make_seq2seq_model(spec, cfg.seed, shared_degree);
    OptimizerState opt = OptimizerState::fresh(cfg.optimizer, param_count(model));
    const std::string hash = config_hash(spec, cfg);

    Seq2SeqResult res;
    res.untrained_test_rmse = seq2seq_evaluate(model, ds.norm_stats, ds.values, test_w, pre, hor).rmse;
    auto snapshot = [&](std::size_t epoch) { return Checkpoint{model, cfg, opt, epoch, ds.norm_stats, hash}; };
    res.best = snapshot(0);
    double best_val = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        EpochMetrics m;
        m.epoch = epoch;
        double loss_sum = 0.0;
        try {
            for (std::size_t b = 0; b < train_w.size(); b += cfg.batch_windows) {
                const std::size_t end = std::min(train_w.size(), b + cfg.batch_windows);
                Seq2SeqModel grad;
                for (std::size_t i = b; i < end; ++i) {
                    const std::size_t s = train_w[i];
                    const auto prefix = matrix_rows(ds.values, s, s + pre);
                    const auto targets = matrix_rows(ds.values, s + pre, s + pre + hor);
                    auto g = seq2seq_gradients(model, prefix, targets, cfg.loss);
                    if (!std::isfinite(g.loss)) throw NumericError("non-finite training loss");
                    loss_sum += g.loss;
                    if (i == b) {
                        grad = std::move(g.grad);
                    } else {
                        const Vector acc = flatten_params(grad);
                        Vector add = flatten_params(g.grad);
                        axpy(1.0, acc, add);
                        unflatten_params(grad, add);
                    }
                }
                if (detail::apply_update(model, grad, opt, cfg)) ++m.clip_events;
                clamp_degree(model.encoder.degree);
                clamp_degree(model.decoder.degree);
            }
            m.train_loss = loss_sum / static_cast<double>(train_w.size());
            m.p_value = model.encoder.degree.value;
            m.val_rmse = seq2seq_evaluate(model, ds.norm_stats, ds.values, val_w, pre, hor).rmse;
            if (!std::isfinite(m.val_rmse)) throw NumericError("non-finite validation RMSE");
        } catch (const NumericError& e) {
            res.diverged = true;
            res.divergence_report = "diverged at epoch " + std::to_string(epoch) + ": " + e.what() +
                                    "; returning the best finite checkpoint from epoch " +
                                    std::to_string(res.best.epoch);
            break;
        }
        res.log.push_back(m);
        if (on_epoch) on_epoch(m);
        if (m.val_rmse < best_val) {
            best_val = m.val_rmse;
            res.best = snapshot(epoch);
        }
    }
    const auto& best_model = std::get<Seq2SeqModel>(res.best.model);
    auto ev = seq2seq_evaluate(best_model, ds.norm_stats, ds.values, test_w, pre, hor);
    res.test_predictions = std::move(ev.predictions);
    res.test_rmse = ev.rmse;
    return res;
}

}  // namespace tprec
