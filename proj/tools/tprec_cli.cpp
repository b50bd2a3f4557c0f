// tprec: command-line front end for the tprec library.

#include <CLI11.hpp>
#include <json.hpp>

#include "tprec/tprec.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using tprec::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUser = 1;
constexpr int kExitNumeric = 2;

// ---------------------------------------------------------------------------
// Flat JSON config files: {"flag-name": value, ...}. Options given on the
// command line keep their values.

std::string config_scalar(const json& v) {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw CLI::ConversionError("config values must be scalars or arrays of scalars");
}

void apply_json_config(CLI::App* app, const std::string& file) {
    std::ifstream in(file);
    if (!in) throw CLI::FileError::Missing(file);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw CLI::ConversionError("config file is not valid JSON: " + std::string(e.what()));
    }
    if (!j.is_object()) throw CLI::ConversionError("config file must hold a JSON object");
    for (const auto& [key, value] : j.items()) {
        CLI::Option* opt = key == "config" ? nullptr : app->get_option_no_throw("--" + key);
        if (opt == nullptr) throw CLI::ConfigError::Extras(key);
        if (opt->count() > 0) continue;
        if (value.is_null()) continue;
        if (value.is_array()) {
            for (const auto& e : value) opt->add_result(config_scalar(e));
        } else {
            opt->add_result(config_scalar(value));
        }
        opt->run_callback();
    }
}

/// Adds --config last so that its callback runs after the command-line options.
void enable_json_config(CLI::App* app) {
    app->add_option_function<std::string>(
        "--config", [app](const std::string& file) { apply_json_config(app, file); },
        "JSON config file; keys are long flag names, command-line flags take precedence");
}

// ---------------------------------------------------------------------------
// Output helpers

fs::path output_root(const std::string& flag, const std::optional<std::string>& from_config = std::nullopt) {
    if (!flag.empty()) return flag;
    if (from_config) return *from_config;
    if (const char* env = std::getenv("TPREC_OUT_DIR"); env && *env) return env;
    return ".";
}

void write_json(const fs::path& path, const json& j) { tprec::atomic_write(path, j.dump(2) + "\n"); }

/// Timestamps live only in this sidecar so every other artifact stays byte-stable.
void log_sidecar(const fs::path& dir, const std::string& line) {
    const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    std::ofstream(dir / "run.log", std::ios::app) << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ") << ' ' << line << '\n';
}

std::string fmt(double v, int precision = 6) {
    std::ostringstream os;
    os << std::setprecision(precision) << v;
    return os.str();
}

std::vector<double> parse_doubles(const std::string& text, const std::string& what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = tprec::detail::trim(item);
        if (item.empty()) continue;
        try {
            std::size_t used = 0;
            out.push_back(std::stod(item, &used));
            if (used != item.size()) throw std::invalid_argument(item);
        } catch (const std::exception&) {
            throw tprec::ArgumentError(what + ": '" + item + "' is not a number");
        }
    }
    return out;
}

std::vector<std::size_t> parse_sizes(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (double v : parse_doubles(text, what)) {
        if (v < 1.0 || v != std::floor(v)) throw tprec::ArgumentError(what + ": expected positive integers");
        out.push_back(static_cast<std::size_t>(v));
    }
    return out;
}

json read_json_file(const fs::path& path) {
    const std::string text = tprec::read_file(path);
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw tprec::ArgumentError("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

tprec::SymTensor random_symmetric_tensor(std::size_t n, std::size_t m, std::size_t p, std::size_t rank,
                                         std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> g(0.0, 1.0);
    std::vector<tprec::Vector> f(rank, tprec::Vector(n)), o(rank, tprec::Vector(m));
    for (std::size_t r = 0; r < rank; ++r) {
        for (double& v : f[r]) v = g(rng);
        for (double& v : o[r]) v = g(rng);
    }
    return tprec::build_from_factors(f, o, p);
}

// ---------------------------------------------------------------------------
// Experiment flags (train, seq2seq, repro-table3, forecast)

struct ExperimentFlags {
    std::string config;
    std::string out_dir;
    std::size_t jobs = 1;
    // data
    std::optional<std::string> data_kind, csv_path, value_col, timestamp_col, genz_family, normalize;
    std::optional<double> d, genz_c, genz_w, train_fraction, val_fraction;
    std::optional<std::size_t> length, points;
    std::optional<std::uint64_t> data_seed;
    // model
    std::optional<std::string> cell, gating, degree_mode;
    std::optional<double> degree_init, degree_min, degree_max;
    std::optional<std::size_t> hidden, rank, history;
    // training
    std::optional<std::string> loss, optimizer, precision;
    std::optional<double> lr, clip;
    bool no_clip = false;
    std::optional<std::size_t> epochs, window, run_count, prefix, horizon, batch;
    std::optional<std::uint64_t> seed;
    std::optional<bool> shared_degree;
    // validation grid search
    std::string grid_lr, grid_hidden;
};

void add_data_flags(CLI::App* app, ExperimentFlags& f) {
    app->add_option("--data", f.data_kind, "Data source: arfima, genz or csv");
    app->add_option("--csv", f.csv_path, "CSV file for --data csv");
    app->add_option("--value-col", f.value_col, "CSV value column (name or zero-based index)");
    app->add_option("--timestamp-col", f.timestamp_col, "CSV timestamp column to ignore");
    app->add_option("--d", f.d, "ARFIMA fractional order, |d| < 0.5");
    app->add_option("--T", f.length, "ARFIMA series length");
    app->add_option("--data-seed", f.data_seed, "Seed of the synthetic series");
    app->add_option("--family", f.genz_family, "Genz family");
    app->add_option("--genz-c", f.genz_c, "Genz shape parameter c");
    app->add_option("--genz-w", f.genz_w, "Genz shift parameter w");
    app->add_option("--points", f.points, "Genz grid size");
    app->add_option("--train-fraction", f.train_fraction, "Training split fraction");
    app->add_option("--val-fraction", f.val_fraction, "Validation split fraction");
    app->add_option("--normalize", f.normalize, "zscore or none");
}

void add_experiment_flags(CLI::App* app, ExperimentFlags& f) {
    app->add_option("--config", f.config, "JSON experiment config {data, model, train, base_seed, run_count, ...}");
    app->add_option("--out-dir", f.out_dir, "Output directory (default: config output_dir, $TPREC_OUT_DIR, then .)");
    app->add_option("--jobs", f.jobs, "Worker threads for multi-seed runs")->check(CLI::PositiveNumber);
    add_data_flags(app, f);
    app->add_option("--cell", f.cell, "Cell: tp-rnn, tp-lstm or exact-tp");
    app->add_option("--gating", f.gating, "LSTM gating: minimal or standard");
    app->add_option("--hidden", f.hidden, "Hidden size m");
    app->add_option("--rank", f.rank, "Number of branches R");
    app->add_option("--history", f.history, "History depth D_h");
    app->add_option("--degree-mode", f.degree_mode, "Degree control: fixed, trainable or subnet");
    app->add_option("--degree-init", f.degree_init, "Initial degree p");
    app->add_option("--degree-min", f.degree_min, "Lower degree bound");
    app->add_option("--degree-max", f.degree_max, "Upper degree bound");
    app->add_option("--loss", f.loss, "Loss: mse or sse");
    app->add_option("--optimizer", f.optimizer, "Optimizer: adam or rmsprop");
    app->add_option("--lr", f.lr, "Learning rate");
    app->add_option("--epochs", f.epochs, "Training epochs");
    app->add_option("--clip", f.clip, "Global gradient-norm clip");
    app->add_flag("--no-clip", f.no_clip, "Disable gradient clipping");
    app->add_option("--window", f.window, "Truncated BPTT window length");
    app->add_option("--precision", f.precision, "f64 or f32");
    app->add_option("--prefix", f.prefix, "Seq2seq observed prefix length");
    app->add_option("--horizon", f.horizon, "Seq2seq forecast horizon");
    app->add_option("--batch", f.batch, "Seq2seq windows per update");
    app->add_option("--seed", f.seed, "Base seed; run i uses seed + i");
    app->add_option("--run-count", f.run_count, "Number of seeded runs");
    app->add_option("--shared-degree", f.shared_degree, "Seq2seq decoder shares the encoder's degree controller");
}

template <class T>
void put(json& j, const char* key, const std::optional<T>& v) {
    if (v) j[key] = *v;
}

tprec::ExperimentConfig resolve_experiment(const ExperimentFlags& f, const tprec::ExperimentConfig& defaults) {
    json j = f.config.empty() ? json::object() : read_json_file(f.config);
    if (!j.is_object()) throw tprec::ArgumentError("experiment config must be a JSON object");
    json& data = j["data"];
    if (data.is_null()) data = json::object();
    put(data, "kind", f.data_kind);
    put(data, "path", f.csv_path);
    if (f.value_col) data["value_columns"] = std::vector<std::string>{*f.value_col};
    put(data, "timestamp_column", f.timestamp_col);
    put(data, "d", f.d);
    put(data, "length", f.length);
    put(data, "seed", f.data_seed);
    put(data, "family", f.genz_family);
    put(data, "c", f.genz_c);
    put(data, "w", f.genz_w);
    put(data, "points", f.points);
    put(data, "train_fraction", f.train_fraction);
    put(data, "val_fraction", f.val_fraction);
    put(data, "normalize", f.normalize);
    json& model = j["model"];
    if (model.is_null()) model = json::object();
    put(model, "cell", f.cell);
    put(model, "gating", f.gating);
    put(model, "hidden_dim", f.hidden);
    put(model, "rank", f.rank);
    put(model, "history", f.history);
    put(model, "degree_mode", f.degree_mode);
    put(model, "degree_init", f.degree_init);
    put(model, "degree_min", f.degree_min);
    put(model, "degree_max", f.degree_max);
    json& train = j["train"];
    if (train.is_null()) train = json::object();
    put(train, "loss", f.loss);
    put(train, "optimizer", f.optimizer);
    put(train, "learning_rate", f.lr);
    put(train, "epochs", f.epochs);
    put(train, "grad_clip_norm", f.clip);
    if (f.no_clip) train["grad_clip_norm"] = nullptr;
    put(train, "bptt_window", f.window);
    put(train, "precision", f.precision);
    put(train, "prefix_length", f.prefix);
    put(train, "horizon", f.horizon);
    put(train, "batch_windows", f.batch);
    put(j, "base_seed", f.seed);
    put(j, "run_count", f.run_count);
    put(j, "shared_degree", f.shared_degree);
    auto cfg = tprec::experiment_from_json(j, defaults);
    if (cfg.model.input_dim != 1 && cfg.data.kind != tprec::DataKind::Csv)
        throw tprec::ArgumentError("synthetic series are univariate; set model input_dim to 1");
    return cfg;
}

void add_grid_flags(CLI::App* app, ExperimentFlags& f) {
    app->add_option("--grid-lr", f.grid_lr, "Comma-separated learning rates to search on validation RMSE");
    app->add_option("--grid-hidden", f.grid_hidden, "Comma-separated hidden sizes to search on validation RMSE");
}

/// Runs the validation grid when requested and adopts its best point.
void maybe_grid_search(const ExperimentFlags& f, tprec::ExperimentConfig& cfg, const tprec::SeriesDataset& ds,
                       bool seq2seq, const fs::path& out) {
    if (f.grid_lr.empty() && f.grid_hidden.empty()) return;
    const auto lrs = f.grid_lr.empty() ? std::vector<double>{cfg.train.learning_rate} : parse_doubles(f.grid_lr, "--grid-lr");
    const auto hs = f.grid_hidden.empty() ? std::vector<std::size_t>{cfg.model.hidden_dim}
                                          : parse_sizes(f.grid_hidden, "--grid-hidden");
    for (double lr : lrs)
        if (!(lr > 0.0)) throw tprec::ArgumentError("--grid-lr values must be positive");
    const auto grid = tprec::grid_search(ds, cfg, lrs, hs, seq2seq, f.jobs);
    json points = json::array();
    for (const auto& p : grid.points) {
        points.push_back({{"learning_rate", p.learning_rate}, {"hidden_dim", p.hidden_dim},
                          {"mean_val_rmse", std::isfinite(p.mean_val_rmse) ? json(p.mean_val_rmse) : json(nullptr)}});
        std::cout << "grid lr " << fmt(p.learning_rate) << ", m " << p.hidden_dim << ": val RMSE "
                  << fmt(p.mean_val_rmse) << '\n';
    }
    const auto& best = grid.points[grid.best];
    if (!std::isfinite(best.mean_val_rmse)) throw tprec::NumericError("grid search: every setting diverged");
    cfg.train.learning_rate = best.learning_rate;
    cfg.model.hidden_dim = best.hidden_dim;
    write_json(out / "grid.json", {{"points", points}, {"best", grid.best}});
    std::cout << "selected lr " << fmt(best.learning_rate) << ", m " << best.hidden_dim << '\n';
}

tprec::ExperimentConfig single_cell_defaults() {
    tprec::ExperimentConfig c;
    c.model.degree_mode = tprec::DegreeMode::TrainableScalar;
    return c;
}

tprec::ExperimentConfig seq2seq_defaults() {
    tprec::ExperimentConfig c;
    c.data.kind = tprec::DataKind::Genz;
    c.data.genz_c = 60.0;
    c.model.cell = tprec::CellKind::TPLstm;
    c.model.gating = tprec::LstmGating::Standard;
    c.model.degree_mode = tprec::DegreeMode::SubNet;
    c.train.loss = tprec::LossKind::SSE;
    c.train.optimizer = tprec::OptimizerKind::RMSprop;
    c.train.epochs = 200;
    return c;
}

/// Multi-channel CSV data sets the model input size from the data.
void fit_input_dim(tprec::ExperimentConfig& cfg, const tprec::SeriesDataset& ds) {
    if (cfg.data.kind == tprec::DataKind::Csv) cfg.model.input_dim = ds.channels();
}

// ---------------------------------------------------------------------------
// train

int cmd_train(const ExperimentFlags& f) {
    auto cfg = resolve_experiment(f, single_cell_defaults());
    const auto ds = tprec::load_dataset(cfg.data);
    fit_input_dim(cfg, ds);
    cfg.validate();
    const fs::path out = output_root(f.out_dir, cfg.output_dir);
    fs::create_directories(out);
    log_sidecar(out, "train start: " + std::to_string(cfg.run_count) + " runs");
    maybe_grid_search(f, cfg, ds, false, out);

    const auto runs = tprec::run_indexed<tprec::RunOutcome>(cfg.run_count, f.jobs, [&](std::size_t i) {
        const std::uint64_t seed = cfg.base_seed + i;
        auto r = tprec::run_single_cell(ds, cfg, seed);
        const std::string tag = "seed" + std::to_string(seed);
        tprec::atomic_write(out / ("metrics_" + tag + ".jsonl"), tprec::metrics_jsonl(r.train.log));
        tprec::save_checkpoint(out / ("checkpoint_" + tag + ".json"), r.train.best);
        return r;
    });

    json run_list = json::array();
    std::vector<double> rmses;
    std::size_t diverged = 0;
    for (const auto& r : runs) {
        json jr = {{"seed", r.seed},
                   {"test_rmse", r.test_rmse},
                   {"best_val_rmse", r.train.best_val_rmse},
                   {"best_epoch", r.train.best.epoch},
                   {"learned_degree", r.learned_degree},
                   {"diverged", r.train.diverged}};
        if (r.train.diverged) {
            jr["divergence_report"] = r.train.divergence_report;
            ++diverged;
        }
        run_list.push_back(jr);
        rmses.push_back(r.test_rmse);
        std::cout << "seed " << r.seed << ": test RMSE " << fmt(r.test_rmse) << ", p " << fmt(r.learned_degree)
                  << (r.train.diverged ? " (diverged: " + r.train.divergence_report + ")" : "") << '\n';
    }
    const auto s = tprec::summarize(rmses);
    write_json(out / "summary.json", {{"command", "train"},
                                      {"config", tprec::to_json_value(cfg)},
                                      {"config_hash", tprec::config_hash(cfg.model, cfg.train)},
                                      {"runs", run_list},
                                      {"test_rmse", tprec::to_json_value(s)}});
    std::cout << "test RMSE " << fmt(s.mean) << " +/- " << fmt(s.std) << " over " << s.count << " runs\n";
    log_sidecar(out, "train done");
    if (diverged > 0) {
        std::cerr << "error: " << diverged << " run(s) diverged; best finite checkpoints were kept\n";
        return kExitNumeric;
    }
    return kExitOk;
}

// ---------------------------------------------------------------------------
// seq2seq

int cmd_seq2seq(const ExperimentFlags& f) {
    auto cfg = resolve_experiment(f, seq2seq_defaults());
    const auto ds = tprec::load_dataset(cfg.data);
    fit_input_dim(cfg, ds);
    cfg.validate();
    const fs::path out = output_root(f.out_dir, cfg.output_dir);
    fs::create_directories(out);
    log_sidecar(out, "seq2seq start");
    maybe_grid_search(f, cfg, ds, true, out);

    const auto runs = tprec::run_indexed<tprec::Seq2SeqResult>(cfg.run_count, f.jobs, [&](std::size_t i) {
        const std::uint64_t seed = cfg.base_seed + i;
        tprec::TrainConfig tc = cfg.train;
        tc.seed = seed;
        auto r = tprec::seq2seq_train_and_forecast(ds, cfg.model, tc, cfg.shared_degree);
        const std::string tag = "seed" + std::to_string(seed);
        tprec::atomic_write(out / ("metrics_" + tag + ".jsonl"), tprec::metrics_jsonl(r.log));
        tprec::save_checkpoint(out / ("checkpoint_" + tag + ".json"), r.best);
        std::ostringstream csv;
        csv << "window,step,prediction\n";
        for (std::size_t w = 0; w < r.test_predictions.size(); ++w)
            for (std::size_t k = 0; k < r.test_predictions[w].size(); ++k)
                csv << w << ',' << k << ',' << tprec::detail::format_double(r.test_predictions[w][k][0]) << '\n';
        tprec::atomic_write(out / ("predictions_" + tag + ".csv"), csv.str());
        return r;
    });

    json run_list = json::array();
    std::vector<double> rmses;
    bool any_diverged = false;
    for (std::size_t i = 0; i < runs.size(); ++i) {
        const auto& r = runs[i];
        const double ratio = r.untrained_test_rmse / r.test_rmse;
        run_list.push_back({{"seed", cfg.base_seed + i},
                            {"test_rmse", r.test_rmse},
                            {"untrained_test_rmse", r.untrained_test_rmse},
                            {"improvement", ratio},
                            {"best_epoch", r.best.epoch},
                            {"diverged", r.diverged}});
        rmses.push_back(r.test_rmse);
        any_diverged = any_diverged || r.diverged;
        std::cout << "seed " << cfg.base_seed + i << ": horizon RMSE " << fmt(r.test_rmse) << " (untrained "
                  << fmt(r.untrained_test_rmse) << ", " << fmt(ratio, 4) << "x)\n";
    }
    const auto s = tprec::summarize(rmses);
    write_json(out / "summary.json", {{"command", "seq2seq"},
                                      {"config", tprec::to_json_value(cfg)},
                                      {"config_hash", tprec::config_hash(cfg.model, cfg.train)},
                                      {"runs", run_list},
                                      {"test_rmse", tprec::to_json_value(s)}});
    log_sidecar(out, "seq2seq done");
    return any_diverged ? kExitNumeric : kExitOk;
}

// ---------------------------------------------------------------------------
// forecast

struct ForecastFlags {
    ExperimentFlags data;
    std::string checkpoint;
};

int cmd_forecast(ForecastFlags& f) {
    const auto ckpt = tprec::load_checkpoint(f.checkpoint);
    auto cfg = resolve_experiment(f.data, single_cell_defaults());
    const auto ds = tprec::load_dataset(cfg.data);
    const fs::path out = output_root(f.data.out_dir, cfg.output_dir);
    fs::create_directories(out);
    std::ostringstream csv;
    json result = {{"checkpoint", f.checkpoint}, {"config_hash", ckpt.config_hash}};
    if (std::holds_alternative<tprec::ForecastModel>(ckpt.model)) {
        const auto fr = tprec::rolling_forecast(ckpt, ds);
        csv << "t,actual,prediction\n";
        for (std::size_t i = 0; i < fr.predictions.size(); ++i) {
            const std::size_t t = ds.val_end + i;
            csv << t << ',' << tprec::detail::format_double(ds.raw(t, 0)) << ','
                << tprec::detail::format_double(fr.predictions[i][0]) << '\n';
        }
        result["test_rmse"] = fr.rmse;
        result["mean_degree"] = fr.mean_degree;
        std::cout << "test RMSE " << fmt(fr.rmse) << " over " << fr.predictions.size() << " one-step forecasts\n";
    } else {
        const auto& model = std::get<tprec::Seq2SeqModel>(ckpt.model);
        const auto& tc = ckpt.config;
        tprec::Matrix values(ds.length(), ds.channels());
        for (std::size_t t = 0; t < ds.length(); ++t)
            for (std::size_t c = 0; c < ds.channels(); ++c) values(t, c) = ckpt.norm_stats.normalize(ds.raw(t, c), c);
        const auto starts = tprec::seq2seq_windows(ds.val_end, ds.length(), tc.prefix_length, tc.horizon);
        const auto ev = tprec::seq2seq_evaluate(model, ckpt.norm_stats, values, starts, tc.prefix_length, tc.horizon);
        csv << "window,step,prediction\n";
        for (std::size_t w = 0; w < ev.predictions.size(); ++w)
            for (std::size_t k = 0; k < ev.predictions[w].size(); ++k)
                csv << w << ',' << k << ',' << tprec::detail::format_double(ev.predictions[w][k][0]) << '\n';
        result["test_rmse"] = ev.rmse;
        std::cout << "horizon RMSE " << fmt(ev.rmse) << " over " << ev.predictions.size() << " windows\n";
    }
    tprec::atomic_write(out / "forecast.csv", csv.str());
    write_json(out / "forecast.json", result);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// repro-table3

struct Table3Flags {
    ExperimentFlags exp;
    std::string histories = "1,2,3,5,10";
};

int cmd_repro_table3(Table3Flags& f) {
    auto cfg = resolve_experiment(f.exp, single_cell_defaults());
    const auto histories = parse_sizes(f.histories, "--histories");
    const auto ds = tprec::load_dataset(cfg.data);
    fit_input_dim(cfg, ds);
    const fs::path out = output_root(f.exp.out_dir, cfg.output_dir);
    fs::create_directories(out);
    log_sidecar(out, "repro-table3 start");
    const auto rows = tprec::history_sweep(ds, cfg, histories, f.exp.jobs);

    json table = json::array();
    std::ostringstream csv;
    csv << "history,mean_rmse,std_rmse,runs\n";
    std::cout << "D_h   mean RMSE   std\n";
    for (const auto& r : rows) {
        table.push_back({{"history", r.history}, {"test_rmse", r.test_rmse}, {"summary", tprec::to_json_value(r.summary)}});
        csv << r.history << ',' << tprec::detail::format_double(r.summary.mean) << ','
            << tprec::detail::format_double(r.summary.std) << ',' << r.summary.count << '\n';
        std::cout << std::setw(3) << r.history << "   " << std::setw(9) << fmt(r.summary.mean) << "   "
                  << fmt(r.summary.std) << '\n';
    }
    write_json(out / "table3.json", {{"command", "repro-table3"}, {"config", tprec::to_json_value(cfg)}, {"rows", table}});
    tprec::atomic_write(out / "table3.csv", csv.str());
    log_sidecar(out, "repro-table3 done");
    return kExitOk;
}

// ---------------------------------------------------------------------------
// gen-data

struct GenDataFlags {
    tprec::ArfimaSpec arfima;
    std::string family = "oscillatory";
    double w = 0.0, c = 60.0, start = 0.0, stop = 1.0;
    std::size_t points = 600;
    std::string input, value_col, timestamp_col;
    std::string out;
    std::string out_dir;
};

int cmd_gen_data(const std::string& kind, const GenDataFlags& f) {
    const fs::path out = f.out.empty() ? output_root(f.out_dir) / (kind + ".csv") : fs::path(f.out);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    std::ostringstream csv;
    if (kind == "arfima") {
        const auto x = tprec::arfima_series(f.arfima);
        tprec::write_csv(csv, {"value"}, tprec::column(x));
    } else if (kind == "genz") {
        tprec::GenzSpec spec{tprec::genz_family_from_string(f.family), f.w, f.c,
                             tprec::uniform_grid(f.start, f.stop, f.points)};
        const auto v = tprec::genz_series(spec);
        tprec::Matrix m(v.size(), 2);
        for (std::size_t i = 0; i < v.size(); ++i) {
            m(i, 0) = spec.grid[i];
            m(i, 1) = v[i];
        }
        tprec::write_csv(csv, {"x", "value"}, m);
    } else {
        tprec::CsvOptions opt;
        if (!f.value_col.empty()) opt.value_columns = {f.value_col};
        if (!f.timestamp_col.empty()) opt.timestamp_column = f.timestamp_col;
        const auto table = tprec::load_csv(f.input, opt);
        tprec::write_csv(csv, table.names, table.values);
    }
    tprec::atomic_write(out, csv.str());
    std::cout << "wrote " << out.string() << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// Process flags shared by simulate-rnp and memory-diag

struct ProcessFlags {
    std::size_t n = 2;
    std::size_t p = 1;
    double m_sigma = 1.0;
    std::uint64_t m_seed = 0;
    std::string m_file;
    std::optional<double> norm;
    std::string noise = "gaussian";
    double noise_sigma = 1.0, noise_a = -1.0, noise_b = 1.0;
    std::size_t active_dims = 1;
    std::optional<double> kappa;
    std::size_t steps = 10000, burn_in = 1000, runs = 1;
    std::uint64_t seed = 0;
};

void add_process_flags(CLI::App* app, ProcessFlags& f) {
    app->add_option("--n", f.n, "State dimension n")->capture_default_str();
    app->add_option("--p", f.p, "Integer degree p")->capture_default_str();
    app->add_option("--m-sigma", f.m_sigma, "Entry scale of the sampled tensor M")->capture_default_str();
    app->add_option("--m-seed", f.m_seed, "Seed of the sampled tensor M")->capture_default_str();
    app->add_option("--m-file", f.m_file, "JSON tensor for M instead of sampling");
    app->add_option("--norm", f.norm, "Rescale M to this spectral norm");
    app->add_option("--noise", f.noise, "gaussian or uniform")->capture_default_str();
    app->add_option("--noise-sigma", f.noise_sigma, "Gaussian noise std")->capture_default_str();
    app->add_option("--noise-a", f.noise_a, "Uniform noise lower bound")->capture_default_str();
    app->add_option("--noise-b", f.noise_b, "Uniform noise upper bound")->capture_default_str();
    app->add_option("--active-dims", f.active_dims, "Number of noisy leading coordinates")->capture_default_str();
    app->add_option("--kappa", f.kappa, "Noise moment order (recorded only)");
    app->add_option("--steps", f.steps, "Recorded steps")->capture_default_str();
    app->add_option("--burn-in", f.burn_in, "Discarded initial steps")->capture_default_str();
    app->add_option("--seed", f.seed, "Noise seed of the first path")->capture_default_str();
    app->add_option("--runs", f.runs, "Paths for the divergence rate")->capture_default_str();
}

tprec::ProcessSpec build_process(const ProcessFlags& f) {
    tprec::ProcessSpec spec;
    if (!f.m_file.empty()) {
        spec.m = tprec::sym_tensor_from_json(read_json_file(f.m_file));
        if (spec.m.order() < 2) throw tprec::ArgumentError("--m-file: tensor needs at least two indices");
        spec.p = spec.m.order() - 1;
        spec.n = spec.m.dims()[0];
    } else {
        spec.n = f.n;
        spec.p = f.p;
        spec.m = tprec::sample_subgaussian_M(f.n, f.p, f.m_sigma, f.m_seed);
    }
    if (f.norm) {
        if (!(*f.norm > 0.0)) throw tprec::ArgumentError("--norm must be positive");
        const double cur = tprec::spectral_norm(spec.m).value;
        if (cur == 0.0) throw tprec::ArgumentError("--norm: M is zero and cannot be rescaled");
        spec.m = spec.m.scaled(*f.norm / cur);
    }
    if (f.noise == "gaussian")
        spec.noise.kind = tprec::NoiseKind::Gaussian;
    else if (f.noise == "uniform")
        spec.noise.kind = tprec::NoiseKind::Uniform;
    else
        throw tprec::ArgumentError("--noise must be gaussian or uniform");
    spec.noise.sigma = f.noise_sigma;
    spec.noise.a = f.noise_a;
    spec.noise.b = f.noise_b;
    spec.noise.active_dims = f.active_dims;
    spec.noise.kappa = f.kappa;
    spec.validate();
    if (f.runs == 0) throw tprec::ArgumentError("--runs must be positive");
    return spec;
}

// ---------------------------------------------------------------------------
// simulate-rnp

struct SimulateFlags {
    ProcessFlags proc;
    std::string out_dir;
};

int cmd_simulate(const SimulateFlags& f) {
    const auto spec = build_process(f.proc);
    const fs::path out = output_root(f.out_dir);
    fs::create_directories(out);
    const auto sim = tprec::simulate_tprnp(spec, f.proc.steps, f.proc.burn_in, f.proc.seed);
    const double rate = tprec::divergence_rate(spec, f.proc.steps, f.proc.burn_in, f.proc.seed, f.proc.runs);
    std::vector<std::string> names;
    for (std::size_t i = 0; i < spec.n; ++i) names.push_back("s" + std::to_string(i));
    std::ostringstream csv;
    tprec::write_csv(csv, names, sim.path);
    tprec::atomic_write(out / "path.csv", csv.str());
    const double norm = tprec::spectral_norm(spec.m).value;
    write_json(out / "simulation.json", {{"n", spec.n},
                                         {"p", spec.p},
                                         {"norm_estimate", norm},
                                         {"steps_recorded", sim.path.rows},
                                         {"diverged", sim.diverged},
                                         {"divergence_step", sim.diverged ? json(sim.divergence_step) : json(nullptr)},
                                         {"divergence_rate", rate},
                                         {"runs", f.proc.runs},
                                         {"M", tprec::to_json_value(spec.m)}});
    std::cout << "norm estimate " << fmt(norm) << ", divergence rate " << fmt(rate) << " over " << f.proc.runs
              << " paths";
    if (sim.diverged) std::cout << "; first path diverged at step " << sim.divergence_step;
    std::cout << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// memory-diag

struct MemoryFlags {
    ProcessFlags proc;
    std::string input, value_col;
    std::size_t coordinate = 0;
    tprec::MemoryConfig mem;
    bool check_short = false;
    bool csv = false;
    std::string out_dir;
};

int cmd_memory(const MemoryFlags& f) {
    const fs::path out = output_root(f.out_dir);
    fs::create_directories(out);
    tprec::Vector series;
    json result = json::object();
    if (!f.input.empty()) {
        tprec::CsvOptions opt;
        if (!f.value_col.empty()) opt.value_columns = {f.value_col};
        const auto table = tprec::load_csv(f.input, opt);
        if (f.coordinate >= table.values.cols) throw tprec::ArgumentError("--coordinate exceeds the CSV column count");
        series = tprec::path_column(table.values, f.coordinate);
        result["source"] = f.input;
    } else {
        const auto spec = build_process(f.proc);
        if (f.coordinate >= spec.n) throw tprec::ArgumentError("--coordinate exceeds the state dimension");
        result["divergence_rate"] =
            tprec::divergence_rate(spec, f.proc.steps, f.proc.burn_in, f.proc.seed, f.proc.runs);
        if (f.check_short) {
            tprec::Lemma1Options lo;
            lo.steps = f.proc.steps;
            lo.burn_in = f.proc.burn_in;
            lo.seed = f.proc.seed;
            lo.coordinate = f.coordinate;
            lo.memory = f.mem;
            const auto rep = tprec::lemma1_check(spec, lo);
            result["short_memory_check"] = {
                {"norm_estimate", rep.norm_estimate},
                {"applicable", rep.applicable},
                {"verdict", rep.verdict ? json(tprec::to_string(*rep.verdict)) : json(nullptr)},
                {"agreement", rep.agreement},
                {"message", rep.message}};
            std::cout << rep.message << '\n';
        }
        const auto sim = tprec::simulate_tprnp(spec, f.proc.steps, f.proc.burn_in, f.proc.seed);
        if (sim.diverged) {
            write_json(out / "memory.json", result);
            std::cerr << "error: the simulated path diverged at step " << sim.divergence_step
                      << "; see divergence_rate in memory.json\n";
            return kExitNumeric;
        }
        series = tprec::path_column(sim.path, f.coordinate);
    }
    const auto rep = tprec::memory_diagnostic(series, f.mem);
    result["autocov"] = rep.autocov;
    result["partial_sums"] = rep.partial_sums;
    result["hurst"] = rep.hurst;
    result["plateau"] = rep.plateau;
    result["verdict"] = tprec::to_string(rep.verdict);
    write_json(out / "memory.json", result);
    if (f.csv) {
        std::ostringstream csv;
        csv << "lag,autocov,partial_sum\n";
        for (std::size_t k = 0; k < rep.autocov.size(); ++k)
            csv << k << ',' << tprec::detail::format_double(rep.autocov[k]) << ','
                << tprec::detail::format_double(rep.partial_sums[k]) << '\n';
        tprec::atomic_write(out / "autocov.csv", csv.str());
    }
    std::cout << "verdict " << tprec::to_string(rep.verdict) << ", Hurst " << fmt(rep.hurst) << ", plateau "
              << (rep.plateau ? "yes" : "no") << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// jacobian-check

struct JacobianFlags {
    std::size_t l = 1, m = 3, p = 2, rank = 2, seeds = 20;
    std::uint64_t seed = 0;
    double step = 1e-6, tol = 1e-5;
    std::string out_dir;
};

int cmd_jacobian(const JacobianFlags& f) {
    if (f.p == 0 || f.m == 0 || f.rank == 0 || f.seeds == 0) throw tprec::ArgumentError("sizes must be positive");
    double worst = 0.0;
    json per_seed = json::array();
    for (std::size_t s = 0; s < f.seeds; ++s) {
        const std::uint64_t seed = f.seed + s;
        const auto g = random_symmetric_tensor(f.l + f.m, f.m, f.p, f.rank, seed);
        std::mt19937_64 rng(seed ^ 0x5bd1e995ULL);
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        tprec::Vector b(f.m), x(f.l), h(f.m);
        for (double& v : b) v = u(rng);
        for (double& v : x) v = u(rng);
        for (double& v : h) v = u(rng);
        const auto j = tprec::jacobian_analytic(g, b, x, h, f.p);
        double scale = 0.0, err = 0.0;
        for (std::size_t k = 0; k < f.m; ++k) {
            auto hp = h, hm = h;
            hp[k] += f.step;
            hm[k] -= f.step;
            const auto yp = tprec::tp_cell_exact(g, b, x, hp, f.p), ym = tprec::tp_cell_exact(g, b, x, hm, f.p);
            for (std::size_t r = 0; r < f.m; ++r) {
                const double fd = (yp[r] - ym[r]) / (2.0 * f.step);
                err = std::max(err, std::abs(fd - j(r, k)));
                scale = std::max(scale, std::abs(fd));
            }
        }
        const double rel = err / std::max(scale, 1e-12);
        worst = std::max(worst, rel);
        per_seed.push_back({{"seed", seed}, {"relative_error", rel}});
    }
    const bool pass = worst < f.tol;
    const fs::path out = output_root(f.out_dir);
    fs::create_directories(out);
    write_json(out / "jacobian_check.json",
               {{"p", f.p}, {"l", f.l}, {"m", f.m}, {"max_relative_error", worst}, {"tolerance", f.tol},
                {"pass", pass}, {"seeds", per_seed}});
    std::cout << "max relative error " << fmt(worst, 3) << " (tolerance " << fmt(f.tol, 3) << "): "
              << (pass ? "pass" : "FAIL") << '\n';
    return pass ? kExitOk : kExitNumeric;
}

// ---------------------------------------------------------------------------
// spectral-norm

struct NormFlags {
    std::string tensor_file, dims;
    std::uint64_t seed = 0;
    int restarts = 20, max_iters = 500;
    double tol = 1e-8;
    bool bruteforce = false;
    double resolution = 0.01;
    std::string out_dir;
};

int cmd_spectral_norm(const NormFlags& f) {
    tprec::SymTensor g;
    if (!f.tensor_file.empty()) {
        g = tprec::sym_tensor_from_json(read_json_file(f.tensor_file));
    } else {
        if (f.dims.empty()) throw tprec::ArgumentError("give --tensor or --dims");
        const auto dims = parse_sizes(f.dims, "--dims");
        std::size_t total = 1;
        for (auto d : dims) total *= d;
        std::mt19937_64 rng(f.seed);
        std::normal_distribution<double> n(0.0, 1.0);
        std::vector<double> data(total);
        for (double& v : data) v = n(rng);
        g = tprec::SymTensor(dims, std::move(data), 0);
    }
    const auto cert = tprec::spectral_norm(g, {f.restarts, f.tol, f.max_iters, f.seed});
    json result = {{"value", cert.value},
                   {"witnesses", cert.witnesses},
                   {"iterations", cert.iterations},
                   {"converged", cert.converged}};
    std::cout << "spectral norm " << fmt(cert.value, 12) << (cert.converged ? "" : " (not converged)") << '\n';
    if (f.bruteforce) {
        const double bf = tprec::spectral_norm_bruteforce(g, f.resolution);
        result["bruteforce"] = bf;
        std::cout << "grid search  " << fmt(bf, 12) << '\n';
    }
    const fs::path out = output_root(f.out_dir);
    fs::create_directories(out);
    write_json(out / "spectral_norm.json", result);
    return kExitOk;
}

// ---------------------------------------------------------------------------
// degree-bound

int cmd_degree_bound(const tprec::DegreeBoundInputs& in) {
    const double bound = tprec::degree_bound(in);
    std::cout << "degree bound " << fmt(bound, 10) << '\n';
    return kExitOk;
}

// ---------------------------------------------------------------------------
// stability-probe

struct ProbeFlags {
    std::string tensor_file;
    std::size_t l = 1, m = 3, p = 2, rank = 2;
    std::uint64_t seed = 21;
    std::string x;
    double k = 1e6;
    tprec::ProbeOptions opt;
    std::string out_dir;
};

int cmd_probe(const ProbeFlags& f) {
    tprec::SymTensor g;
    std::size_t p = f.p, l = f.l;
    if (!f.tensor_file.empty()) {
        g = tprec::sym_tensor_from_json(read_json_file(f.tensor_file));
        if (g.order() < 2) throw tprec::ArgumentError("--tensor needs at least two indices");
        p = g.order() - 1;
        l = g.dims()[0] - g.dims()[p];
    } else {
        g = random_symmetric_tensor(f.l + f.m, f.m, f.p, f.rank, f.seed);
    }
    tprec::Vector x = f.x.empty() ? tprec::Vector(l, 0.0) : parse_doubles(f.x, "--x");
    if (x.size() != l) throw tprec::ArgumentError("--x must have " + std::to_string(l) + " entries");
    const auto res = tprec::stability_probe(g, x, f.k, p, f.opt);
    const fs::path out = output_root(f.out_dir);
    fs::create_directories(out);
    write_json(out / "stability_probe.json",
               {{"p", p}, {"threshold", f.k}, {"norm_value", res.norm_value}, {"doublings", res.doublings},
                {"h_witness", res.h_witness}});
    std::cout << "Jacobian norm " << fmt(res.norm_value) << " > " << fmt(f.k) << " after " << res.doublings
              << " doublings\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Tensor-power recurrent models: training, forecasting and stability analysis"};
    app.require_subcommand(1);
    app.fallthrough(false);

    // gen-data
    GenDataFlags gen;
    auto* gen_cmd = app.add_subcommand("gen-data", "Write a synthetic or cleaned series as CSV");
    gen_cmd->require_subcommand(1);
    auto add_gen_common = [&](CLI::App* c) {
        c->add_option("--out", gen.out, "Output CSV path (default <out-dir>/<kind>.csv)");
        c->add_option("--out-dir", gen.out_dir, "Output directory when --out is not given");
        enable_json_config(c);
    };
    auto* gen_arfima = gen_cmd->add_subcommand("arfima", "ARFIMA(0, d, 0) series");
    gen_arfima->add_option("--d", gen.arfima.d, "Fractional order, |d| < 0.5")->capture_default_str();
    gen_arfima->add_option("--T", gen.arfima.length, "Length")->capture_default_str();
    gen_arfima->add_option("--sigma", gen.arfima.sigma, "Innovation std")->capture_default_str();
    gen_arfima->add_option("--truncation", gen.arfima.truncation, "MA truncation")->capture_default_str();
    gen_arfima->add_option("--seed", gen.arfima.seed, "Seed")->capture_default_str();
    add_gen_common(gen_arfima);
    auto* gen_genz = gen_cmd->add_subcommand("genz", "Genz test function on a uniform grid");
    gen_genz->add_option("--family", gen.family, "Genz family")->capture_default_str();
    gen_genz->add_option("--w", gen.w, "Shift w")->capture_default_str();
    gen_genz->add_option("--c", gen.c, "Shape c")->capture_default_str();
    gen_genz->add_option("--points", gen.points, "Grid size")->capture_default_str();
    gen_genz->add_option("--start", gen.start, "Grid start")->capture_default_str();
    gen_genz->add_option("--stop", gen.stop, "Grid stop")->capture_default_str();
    add_gen_common(gen_genz);
    auto* gen_csv = gen_cmd->add_subcommand("csv", "Select value columns of a CSV file");
    gen_csv->add_option("--input", gen.input, "Input CSV")->required();
    gen_csv->add_option("--value-col", gen.value_col, "Value column (name or index)");
    gen_csv->add_option("--timestamp-col", gen.timestamp_col, "Timestamp column to drop");
    add_gen_common(gen_csv);

    // experiments
    ExperimentFlags train_f;
    auto* train_cmd = app.add_subcommand("train", "Train single-cell forecasters over seeded runs");
    add_experiment_flags(train_cmd, train_f);
    add_grid_flags(train_cmd, train_f);

    ExperimentFlags s2s_f;
    auto* s2s_cmd = app.add_subcommand("seq2seq", "Train encoder-decoder forecasters over seeded runs");
    add_experiment_flags(s2s_cmd, s2s_f);
    add_grid_flags(s2s_cmd, s2s_f);

    ForecastFlags fc_f;
    auto* fc_cmd = app.add_subcommand("forecast", "Score a checkpoint on the test split");
    fc_cmd->add_option("--checkpoint", fc_f.checkpoint, "Checkpoint JSON")->required();
    fc_cmd->add_option("--config", fc_f.data.config, "JSON experiment config (its data section is used)");
    fc_cmd->add_option("--out-dir", fc_f.data.out_dir, "Output directory");
    add_data_flags(fc_cmd, fc_f.data);

    Table3Flags t3_f;
    auto* t3_cmd = app.add_subcommand("repro-table3", "Test RMSE mean/std over history depths D_h");
    add_experiment_flags(t3_cmd, t3_f.exp);
    t3_cmd->add_option("--histories", t3_f.histories, "Comma-separated D_h values")->capture_default_str();

    // analysis
    SimulateFlags sim_f;
    auto* sim_cmd = app.add_subcommand("simulate-rnp", "Simulate a tensor-power recurrent process");
    add_process_flags(sim_cmd, sim_f.proc);
    sim_cmd->add_option("--out-dir", sim_f.out_dir, "Output directory");
    enable_json_config(sim_cmd);

    MemoryFlags mem_f;
    auto* mem_cmd = app.add_subcommand("memory-diag", "Autocovariance, Hurst exponent and memory verdict");
    add_process_flags(mem_cmd, mem_f.proc);
    mem_cmd->add_option("--input", mem_f.input, "CSV series instead of a simulated process");
    mem_cmd->add_option("--value-col", mem_f.value_col, "CSV value column");
    mem_cmd->add_option("--coordinate", mem_f.coordinate, "Analysed coordinate")->capture_default_str();
    mem_cmd->add_option("--max-lag", mem_f.mem.max_lag, "Largest autocovariance lag")->capture_default_str();
    mem_cmd->add_option("--tail-lags", mem_f.mem.tail_lags, "Lags checked for a plateau")->capture_default_str();
    mem_cmd->add_option("--plateau-tol", mem_f.mem.plateau_tol, "Relative plateau tolerance")->capture_default_str();
    mem_cmd->add_option("--noise-band-z", mem_f.mem.noise_band_z, "White-noise band width in std units")
        ->capture_default_str();
    mem_cmd->add_option("--short-hurst-max", mem_f.mem.short_hurst_max, "Hurst ceiling for short memory")
        ->capture_default_str();
    mem_cmd->add_option("--long-hurst-min", mem_f.mem.long_hurst_min, "Hurst floor for long memory")
        ->capture_default_str();
    mem_cmd->add_flag("--check-short-memory", mem_f.check_short, "Compare the verdict with the norm < 1 criterion");
    mem_cmd->add_flag("--csv", mem_f.csv, "Also write autocov.csv (lag, autocov, partial_sum)");
    mem_cmd->add_option("--out-dir", mem_f.out_dir, "Output directory");
    enable_json_config(mem_cmd);

    JacobianFlags jac_f;
    auto* jac_cmd = app.add_subcommand("jacobian-check", "Analytic Jacobian against finite differences");
    jac_cmd->add_option("--l", jac_f.l, "Input size")->capture_default_str();
    jac_cmd->add_option("--m", jac_f.m, "Hidden size")->capture_default_str();
    jac_cmd->add_option("--p", jac_f.p, "Degree")->capture_default_str();
    jac_cmd->add_option("--rank", jac_f.rank, "Rank of the random tensor")->capture_default_str();
    jac_cmd->add_option("--seeds", jac_f.seeds, "Number of random cases")->capture_default_str();
    jac_cmd->add_option("--seed", jac_f.seed, "First seed")->capture_default_str();
    jac_cmd->add_option("--step", jac_f.step, "Finite-difference step")->capture_default_str();
    jac_cmd->add_option("--tol", jac_f.tol, "Relative error tolerance")->capture_default_str();
    jac_cmd->add_option("--out-dir", jac_f.out_dir, "Output directory");
    enable_json_config(jac_cmd);

    NormFlags norm_f;
    auto* norm_cmd = app.add_subcommand("spectral-norm", "Tensor spectral norm with witnesses");
    norm_cmd->add_option("--tensor", norm_f.tensor_file, "JSON tensor {dims, data, sym_prefix, symmetry}");
    norm_cmd->add_option("--dims", norm_f.dims, "Dimensions of a random Gaussian tensor, e.g. 3,3,3");
    norm_cmd->add_option("--seed", norm_f.seed, "Seed for the random tensor and restarts")->capture_default_str();
    norm_cmd->add_option("--restarts", norm_f.restarts, "Power-method restarts")->capture_default_str();
    norm_cmd->add_option("--tol", norm_f.tol, "Relative convergence tolerance")->capture_default_str();
    norm_cmd->add_option("--max-iters", norm_f.max_iters, "Iterations per restart")->capture_default_str();
    norm_cmd->add_flag("--bruteforce", norm_f.bruteforce, "Also run the grid search");
    norm_cmd->add_option("--resolution", norm_f.resolution, "Grid resolution in radians")->capture_default_str();
    norm_cmd->add_option("--out-dir", norm_f.out_dir, "Output directory");
    enable_json_config(norm_cmd);

    tprec::DegreeBoundInputs bound_in;
    auto* bound_cmd = app.add_subcommand("degree-bound", "Lower bound on the degree of a long-memory process");
    bound_cmd->add_option("--n", bound_in.n, "State dimension l + m")->required();
    bound_cmd->add_option("--sigma2", bound_in.sigma2, "Sub-Gaussian variance proxy")->required();
    bound_cmd->add_option("--c1", bound_in.c1, "Constant C1")->required();
    bound_cmd->add_option("--c2", bound_in.c2, "Constant C2")->required();
    enable_json_config(bound_cmd);

    ProbeFlags probe_f;
    auto* probe_cmd = app.add_subcommand("stability-probe", "Search for a hidden state with a large Jacobian");
    probe_cmd->add_option("--tensor", probe_f.tensor_file, "JSON tensor G");
    probe_cmd->add_option("--l", probe_f.l, "Input size of the random tensor")->capture_default_str();
    probe_cmd->add_option("--m", probe_f.m, "Hidden size of the random tensor")->capture_default_str();
    probe_cmd->add_option("--p", probe_f.p, "Degree of the random tensor")->capture_default_str();
    probe_cmd->add_option("--rank", probe_f.rank, "Rank of the random tensor")->capture_default_str();
    probe_cmd->add_option("--seed", probe_f.seed, "Seed of the random tensor")->capture_default_str();
    probe_cmd->add_option("--x", probe_f.x, "Comma-separated input x (default zeros)");
    probe_cmd->add_option("--k", probe_f.k, "Norm threshold K")->capture_default_str();
    probe_cmd->add_option("--max-doublings", probe_f.opt.max_doublings, "Doubling budget")->capture_default_str();
    probe_cmd->add_option("--candidates", probe_f.opt.direction_candidates, "Random directions tried")
        ->capture_default_str();
    probe_cmd->add_option("--probe-seed", probe_f.opt.seed, "Seed of the direction search")->capture_default_str();
    probe_cmd->add_option("--out-dir", probe_f.out_dir, "Output directory");
    enable_json_config(probe_cmd);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e) == 0 ? kExitOk : kExitUser;
    }

    try {
        if (*gen_arfima) return cmd_gen_data("arfima", gen);
        if (*gen_genz) return cmd_gen_data("genz", gen);
        if (*gen_csv) return cmd_gen_data("csv", gen);
        if (*train_cmd) return cmd_train(train_f);
        if (*s2s_cmd) return cmd_seq2seq(s2s_f);
        if (*fc_cmd) return cmd_forecast(fc_f);
        if (*t3_cmd) return cmd_repro_table3(t3_f);
        if (*sim_cmd) return cmd_simulate(sim_f);
        if (*mem_cmd) return cmd_memory(mem_f);
        if (*jac_cmd) return cmd_jacobian(jac_f);
        if (*norm_cmd) return cmd_spectral_norm(norm_f);
        if (*bound_cmd) return cmd_degree_bound(bound_in);
        if (*probe_cmd) return cmd_probe(probe_f);
    } catch (const tprec::NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const tprec::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUser;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUser;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kExitUser;
    }
    std::cerr << app.help();
    return kExitUser;
}
