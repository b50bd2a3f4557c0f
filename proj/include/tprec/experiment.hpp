#pragma once

#include "tprec/checkpoint.hpp"
#include "tprec/data.hpp"
#include "tprec/errors.hpp"
#include "tprec/train.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <thread>
#include <vector>

namespace tprec {

enum class DataKind { Arfima, Genz, Csv };

inline const char* to_string(DataKind k) {
    switch (k) {
    case DataKind::Arfima: return "arfima";
    case DataKind::Genz: return "genz";
    case DataKind::Csv: return "csv";
    }
    return "?";
}

inline DataKind data_kind_from_string(const std::string& s) {
    if (s == "arfima") return DataKind::Arfima;
    if (s == "genz") return DataKind::Genz;
    if (s == "csv") return DataKind::Csv;
    throw ArgumentError("unknown data kind '" + s + "' (expected arfima, genz or csv)");
}

inline const char* to_string(GenzFamily f) {
    switch (f) {
    case GenzFamily::Oscillatory: return "oscillatory";
    case GenzFamily::ProductPeak: return "product-peak";
    case GenzFamily::CornerPeak: return "corner-peak";
    case GenzFamily::Gaussian: return "gaussian";
    case GenzFamily::Continuous: return "continuous";
    case GenzFamily::Discontinuous: return "discontinuous";
    }
    return "?";
}

/// Where a series comes from and how it is split.
struct DataSpec {
    DataKind kind = DataKind::Arfima;
    ArfimaSpec arfima;
    GenzFamily genz_family = GenzFamily::Oscillatory;
    double genz_w = 0.0;
    double genz_c = 1.0;
    double grid_start = 0.0;
    double grid_stop = 1.0;
    std::size_t grid_points = 600;
    std::string csv_path;
    CsvOptions csv;
    SplitFractions fractions;
    NormMethod norm = NormMethod::ZScore;

    bool operator==(const DataSpec&) const = default;
};

inline json to_json_value(const DataSpec& d) {
    json j = {{"kind", to_string(d.kind)},
              {"train_fraction", d.fractions.train},
              {"val_fraction", d.fractions.val},
              {"normalize", d.norm == NormMethod::ZScore ? "zscore" : "none"}};
    switch (d.kind) {
    case DataKind::Arfima:
        j.update({{"d", d.arfima.d},
                  {"length", d.arfima.length},
                  {"sigma", d.arfima.sigma},
                  {"truncation", d.arfima.truncation},
                  {"seed", d.arfima.seed}});
        break;
    case DataKind::Genz:
        j.update({{"family", to_string(d.genz_family)},
                  {"w", d.genz_w},
                  {"c", d.genz_c},
                  {"grid_start", d.grid_start},
                  {"grid_stop", d.grid_stop},
                  {"points", d.grid_points}});
        break;
    case DataKind::Csv:
        j["path"] = d.csv_path;
        j["value_columns"] = d.csv.value_columns;
        j["timestamp_column"] = d.csv.timestamp_column ? json(*d.csv.timestamp_column) : json(nullptr);
        break;
    }
    return j;
}

inline DataSpec data_spec_from_json(const json& j, DataSpec d = {}) {
    const std::string w = "data spec";
    detail::require_keys(j,
                         {"kind", "d", "length", "sigma", "truncation", "seed", "family", "w", "c", "grid_start",
                          "grid_stop", "points", "path", "value_columns", "timestamp_column", "train_fraction",
                          "val_fraction", "normalize"},
                         w);
    if (j.contains("kind")) d.kind = data_kind_from_string(detail::get<std::string>(j, "kind", w));
    detail::get_opt(j, "d", d.arfima.d, w);
    detail::get_opt(j, "length", d.arfima.length, w);
    detail::get_opt(j, "sigma", d.arfima.sigma, w);
    detail::get_opt(j, "truncation", d.arfima.truncation, w);
    detail::get_opt(j, "seed", d.arfima.seed, w);
    if (j.contains("family")) d.genz_family = genz_family_from_string(detail::get<std::string>(j, "family", w));
    detail::get_opt(j, "w", d.genz_w, w);
    detail::get_opt(j, "c", d.genz_c, w);
    detail::get_opt(j, "grid_start", d.grid_start, w);
    detail::get_opt(j, "grid_stop", d.grid_stop, w);
    detail::get_opt(j, "points", d.grid_points, w);
    detail::get_opt(j, "path", d.csv_path, w);
    detail::get_opt(j, "value_columns", d.csv.value_columns, w);
    if (j.contains("timestamp_column")) {
        if (j.at("timestamp_column").is_null())
            d.csv.timestamp_column.reset();
        else
            d.csv.timestamp_column = detail::get<std::string>(j, "timestamp_column", w);
    }
    detail::get_opt(j, "train_fraction", d.fractions.train, w);
    detail::get_opt(j, "val_fraction", d.fractions.val, w);
    if (j.contains("normalize")) {
        const auto n = detail::get<std::string>(j, "normalize", w);
        if (n != "zscore" && n != "none") throw ArgumentError(w + ": normalize must be zscore or none");
        d.norm = n == "zscore" ? NormMethod::ZScore : NormMethod::None;
    }
    return d;
}

inline Matrix load_series(const DataSpec& d) {
    switch (d.kind) {
    case DataKind::Arfima: return column(arfima_series(d.arfima));
    case DataKind::Genz: {
        GenzSpec g{d.genz_family, d.genz_w, d.genz_c, uniform_grid(d.grid_start, d.grid_stop, d.grid_points)};
        return column(genz_series(g));
    }
    case DataKind::Csv:
        if (d.csv_path.empty()) throw ArgumentError("data spec: csv data needs a path");
        return load_csv(d.csv_path, d.csv).values;
    }
    throw ArgumentError("data spec: unknown kind");
}

inline SeriesDataset load_dataset(const DataSpec& d) {
    return split_and_normalize(load_series(d), d.fractions, d.norm, to_json_value(d).dump());
}

// ---------------------------------------------------------------------------
// Experiments

struct ExperimentConfig {
    DataSpec data;
    ModelSpec model;
    TrainConfig train;
    std::uint64_t base_seed = 0;
    std::size_t run_count = 1;
    bool shared_degree = true;
    std::optional<std::string> output_dir;

    void validate() const {
        model.validate();
        train.validate();
        if (run_count == 0) throw ArgumentError("experiment: run_count must be at least 1");
    }
};

inline json to_json_value(const ExperimentConfig& c) {
    json j = {{"data", to_json_value(c.data)},
              {"model", to_json_value(c.model)},
              {"train", to_json_value(c.train)},
              {"base_seed", c.base_seed},
              {"run_count", c.run_count},
              {"shared_degree", c.shared_degree}};
    j["output_dir"] = c.output_dir ? json(*c.output_dir) : json(nullptr);
    return j;
}

/// Parses and validates a full experiment definition. Unknown keys anywhere
/// are rejected.
inline ExperimentConfig experiment_from_json(const json& j, ExperimentConfig c = {}) {
    const std::string w = "experiment config";
    detail::require_keys(j, {"data", "model", "train", "base_seed", "run_count", "shared_degree", "output_dir"}, w);
    if (j.contains("data")) c.data = data_spec_from_json(j.at("data"), c.data);
    if (j.contains("model")) c.model = model_spec_from_json(j.at("model"), c.model);
    if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
    detail::get_opt(j, "base_seed", c.base_seed, w);
    detail::get_opt(j, "run_count", c.run_count, w);
    detail::get_opt(j, "shared_degree", c.shared_degree, w);
    if (j.contains("output_dir")) {
        if (j.at("output_dir").is_null())
            c.output_dir.reset();
        else
            c.output_dir = detail::get<std::string>(j, "output_dir", w);
    }
    c.validate();
    return c;
}

struct Summary {
    double mean = 0.0;
    double std = 0.0;  // sample standard deviation, 0 for a single value
    std::size_t count = 0;
};

inline Summary summarize(std::span<const double> v) {
    Summary s;
    s.count = v.size();
    if (v.empty()) return s;
    for (double x : v) s.mean += x;
    s.mean /= static_cast<double>(v.size());
    if (v.size() > 1) {
        double ss = 0.0;
        for (double x : v) ss += (x - s.mean) * (x - s.mean);
        s.std = std::sqrt(ss / static_cast<double>(v.size() - 1));
    }
    return s;
}

inline json to_json_value(const Summary& s) { return {{"mean", s.mean}, {"std", s.std}, {"count", s.count}}; }

/// Runs job(i) for i in [0, count) on up to `jobs` threads. Results are
/// indexed by i, so the outcome does not depend on scheduling. The first
/// exception is rethrown after all workers stop.
template <class R>
std::vector<R> run_indexed(std::size_t count, std::size_t jobs, const std::function<R(std::size_t)>& job) {
    std::vector<R> out(count);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= count) return;
            try {
                out[i] = job(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = count;
            }
        }
    };
    const std::size_t n = std::max<std::size_t>(1, std::min(jobs, count));
    if (n == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < n; ++t) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
    return out;
}

/// Outcome of one seeded single-cell training run.
struct RunOutcome {
    std::uint64_t seed = 0;
    TrainResult train;
    double test_rmse = std::numeric_limits<double>::quiet_NaN();
    double learned_degree = 0.0;  // mean degree over the test forecasts for SubNet
};

inline RunOutcome run_single_cell(const SeriesDataset& ds, const ExperimentConfig& cfg, std::uint64_t seed) {
    TrainConfig tc = cfg.train;
    tc.seed = seed;
    RunOutcome out;
    out.seed = seed;
    out.train = train_single_cell(ds, cfg.model, tc);
    const auto fr = rolling_forecast(out.train.best, ds);
    out.test_rmse = fr.rmse;
    const auto& degree = std::get<ForecastModel>(out.train.best.model).core.degree;
    out.learned_degree = degree.mode == DegreeMode::SubNet ? fr.mean_degree : degree.value;
    return out;
}

struct HistoryRow {
    std::size_t history = 1;
    std::vector<double> test_rmse;
    Summary summary;
};

/// Test RMSE mean and std of single-cell runs for each history depth D_h.
/// Run i of every setting uses seed base_seed + i.
inline std::vector<HistoryRow> history_sweep(const SeriesDataset& ds, const ExperimentConfig& cfg,
                                             std::span<const std::size_t> histories, std::size_t jobs = 1) {
    std::vector<HistoryRow> rows;
    for (std::size_t dh : histories) {
        ExperimentConfig c = cfg;
        c.model.history = dh;
        c.validate();
        HistoryRow row;
        row.history = dh;
        const auto runs = run_indexed<RunOutcome>(c.run_count, jobs, [&](std::size_t i) {
            return run_single_cell(ds, c, c.base_seed + i);
        });
        for (const auto& r : runs) row.test_rmse.push_back(r.test_rmse);
        row.summary = summarize(row.test_rmse);
        rows.push_back(std::move(row));
    }
    return rows;
}

struct GridPoint {
    double learning_rate = 0.0;
    std::size_t hidden_dim = 0;
    double mean_val_rmse = 0.0;  // infinite if any run diverged
};

struct GridResult {
    std::vector<GridPoint> points;  // learning rates vary fastest
    std::size_t best = 0;
};

/// Scores every (learning_rate, hidden_dim) pair by the mean best validation
/// RMSE of `cfg.run_count` seeded runs. Test data is never touched. Ties keep
/// the earlier point.
inline GridResult grid_search(const SeriesDataset& ds, const ExperimentConfig& cfg,
                              std::span<const double> learning_rates, std::span<const std::size_t> hidden_dims,
                              bool seq2seq, std::size_t jobs = 1) {
    if (learning_rates.empty() || hidden_dims.empty()) throw ArgumentError("grid_search: empty grid");
    GridResult out;
    for (std::size_t m : hidden_dims) {
        for (double lr : learning_rates) {
            ExperimentConfig c = cfg;
            c.model.hidden_dim = m;
            c.train.learning_rate = lr;
            c.validate();
            const auto scores = run_indexed<double>(c.run_count, jobs, [&](std::size_t i) {
                TrainConfig tc = c.train;
                tc.seed = c.base_seed + i;
                if (seq2seq) {
                    const auto r = seq2seq_train_and_forecast(ds, c.model, tc, c.shared_degree);
                    double best = std::numeric_limits<double>::infinity();
                    for (const auto& e : r.log) best = std::min(best, e.val_rmse);
                    return best;
                }
                return train_single_cell(ds, c.model, tc).best_val_rmse;
            });
            double mean = 0.0;
            for (double v : scores) mean += v / static_cast<double>(scores.size());
            if (!std::isfinite(mean)) mean = std::numeric_limits<double>::infinity();
            out.points.push_back({lr, m, mean});
        }
    }
    for (std::size_t i = 1; i < out.points.size(); ++i)
        if (out.points[i].mean_val_rmse < out.points[out.best].mean_val_rmse) out.best = i;
    return out;
}

}  // namespace tprec
