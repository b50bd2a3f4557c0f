#pragma once

#include "tprec/data.hpp"
#include "tprec/errors.hpp"
#include "tprec/model.hpp"
#include "tprec/optim.hpp"
#include "tprec/seq2seq.hpp"

#include <json.hpp>

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <initializer_list>
#include <optional>
#include <sstream>
#include <string>
#include <variant>

namespace tprec {

using json = nlohmann::json;

enum class Precision { F64, F32 };

struct TrainConfig {
    LossKind loss = LossKind::MSE;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double learning_rate = 0.01;
    std::size_t epochs = 1000;
    std::optional<double> grad_clip_norm = 1.0;
    std::uint64_t seed = 0;
    std::size_t bptt_window = 50;
    Precision precision = Precision::F64;
    // Encoder-decoder windowing.
    std::size_t prefix_length = 20;
    std::size_t horizon = 10;
    std::size_t batch_windows = 16;

    void validate() const {
        if (!(learning_rate > 0.0)) throw ArgumentError("train config: learning_rate must be positive");
        if (epochs == 0) throw ArgumentError("train config: epochs must be at least 1");
        if (grad_clip_norm && !(*grad_clip_norm > 0.0))
            throw ArgumentError("train config: grad_clip_norm must be positive or null");
        if (bptt_window == 0) throw ArgumentError("train config: bptt_window must be at least 1");
        if (prefix_length == 0 || horizon == 0 || batch_windows == 0)
            throw ArgumentError("train config: prefix_length, horizon and batch_windows must be positive");
    }

    bool operator==(const TrainConfig&) const = default;
};

using AnyModel = std::variant<ForecastModel, Seq2SeqModel>;

struct Checkpoint {
    AnyModel model;
    TrainConfig config;
    OptimizerState optimizer;
    std::size_t epoch = 0;
    NormStats norm_stats;
    std::string config_hash;

    bool operator==(const Checkpoint&) const = default;
};

// ---------------------------------------------------------------------------
// JSON helpers

namespace detail {

inline void require_keys(const json& j, std::initializer_list<const char*> allowed, const std::string& where) {
    if (!j.is_object()) throw ArgumentError(where + ": expected a JSON object");
    for (const auto& [key, _] : j.items()) {
        bool ok = false;
        for (const char* a : allowed) ok = ok || key == a;
        if (!ok) throw ArgumentError(where + ": unknown key '" + key + "'");
    }
}

template <class T>
T get(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw ArgumentError(where + ": missing key '" + std::string(key) + "'");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        throw ArgumentError(where + ": bad value for '" + std::string(key) + "': " + e.what());
    }
}

template <class T>
void get_opt(const json& j, const char* key, T& out, const std::string& where) {
    if (j.contains(key)) out = get<T>(j, key, where);
}

}  // namespace detail

inline json to_json_value(const Matrix& m) { return {{"rows", m.rows}, {"cols", m.cols}, {"data", m.data}}; }

inline Matrix matrix_from_json(const json& j) {
    detail::require_keys(j, {"rows", "cols", "data"}, "matrix");
    Matrix m(detail::get<std::size_t>(j, "rows", "matrix"), detail::get<std::size_t>(j, "cols", "matrix"));
    m.data = detail::get<Vector>(j, "data", "matrix");
    if (m.data.size() != m.rows * m.cols) throw ShapeError("matrix JSON: data length does not match rows x cols");
    return m;
}

inline json to_json_value(const ModelSpec& s) {
    return {{"cell", to_string(s.cell)},           {"input_dim", s.input_dim},     {"hidden_dim", s.hidden_dim},
            {"rank", s.rank},                      {"history", s.history},         {"gating", to_string(s.gating)},
            {"degree_mode", to_string(s.degree_mode)}, {"degree_init", s.degree_init}, {"degree_min", s.degree_min},
            {"degree_max", s.degree_max}};
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline ModelSpec model_spec_from_json(const json& j, ModelSpec s = {}) {
    const std::string w = "model spec";
    detail::require_keys(j,
                         {"cell", "input_dim", "hidden_dim", "rank", "history", "gating", "degree_mode", "degree_init",
                          "degree_min", "degree_max"},
                         w);
    if (j.contains("cell")) s.cell = cell_kind_from_string(detail::get<std::string>(j, "cell", w));
    detail::get_opt(j, "input_dim", s.input_dim, w);
    detail::get_opt(j, "hidden_dim", s.hidden_dim, w);
    detail::get_opt(j, "rank", s.rank, w);
    detail::get_opt(j, "history", s.history, w);
    if (j.contains("gating")) s.gating = gating_from_string(detail::get<std::string>(j, "gating", w));
    if (j.contains("degree_mode")) s.degree_mode = degree_mode_from_string(detail::get<std::string>(j, "degree_mode", w));
    detail::get_opt(j, "degree_init", s.degree_init, w);
    detail::get_opt(j, "degree_min", s.degree_min, w);
    detail::get_opt(j, "degree_max", s.degree_max, w);
    return s;
}

inline json to_json_value(const TrainConfig& c) {
    json j = {{"loss", to_string(c.loss)},
              {"optimizer", to_string(c.optimizer)},
              {"learning_rate", c.learning_rate},
              {"epochs", c.epochs},
              {"seed", c.seed},
              {"bptt_window", c.bptt_window},
              {"precision", c.precision == Precision::F64 ? "f64" : "f32"},
              {"prefix_length", c.prefix_length},
              {"horizon", c.horizon},
              {"batch_windows", c.batch_windows}};
    j["grad_clip_norm"] = c.grad_clip_norm ? json(*c.grad_clip_norm) : json(nullptr);
    return j;
}

inline TrainConfig train_config_from_json(const json& j, TrainConfig c = {}) {
    const std::string w = "train config";
    detail::require_keys(j,
                         {"loss", "optimizer", "learning_rate", "epochs", "grad_clip_norm", "seed", "bptt_window",
                          "precision", "prefix_length", "horizon", "batch_windows"},
                         w);
    if (j.contains("loss")) c.loss = loss_kind_from_string(detail::get<std::string>(j, "loss", w));
    if (j.contains("optimizer")) c.optimizer = optimizer_kind_from_string(detail::get<std::string>(j, "optimizer", w));
    detail::get_opt(j, "learning_rate", c.learning_rate, w);
    detail::get_opt(j, "epochs", c.epochs, w);
    if (j.contains("grad_clip_norm")) {
        if (j.at("grad_clip_norm").is_null())
            c.grad_clip_norm.reset();
        else
            c.grad_clip_norm = detail::get<double>(j, "grad_clip_norm", w);
    }
    detail::get_opt(j, "seed", c.seed, w);
    detail::get_opt(j, "bptt_window", c.bptt_window, w);
    if (j.contains("precision")) {
        const auto p = detail::get<std::string>(j, "precision", w);
        if (p != "f64" && p != "f32") throw ArgumentError(w + ": precision must be f64 or f32");
        c.precision = p == "f64" ? Precision::F64 : Precision::F32;
    }
    detail::get_opt(j, "prefix_length", c.prefix_length, w);
    detail::get_opt(j, "horizon", c.horizon, w);
    detail::get_opt(j, "batch_windows", c.batch_windows, w);
    return c;
}

inline json to_json_value(const DegreeParam& d) {
    json j = {{"mode", to_string(d.mode)}, {"value", d.value}, {"p_min", d.p_min}, {"p_max", d.p_max}};
    if (d.subnet)
        j["subnet"] = {{"w1", to_json_value(d.subnet->w1)},
                       {"b1", d.subnet->b1},
                       {"w2", to_json_value(d.subnet->w2)},
                       {"b2", d.subnet->b2}};
    return j;
}

inline DegreeParam degree_from_json(const json& j) {
    const std::string w = "degree";
    detail::require_keys(j, {"mode", "value", "p_min", "p_max", "subnet"}, w);
    DegreeParam d;
    d.mode = degree_mode_from_string(detail::get<std::string>(j, "mode", w));
    d.value = detail::get<double>(j, "value", w);
    d.p_min = detail::get<double>(j, "p_min", w);
    d.p_max = detail::get<double>(j, "p_max", w);
    if (j.contains("subnet")) {
        const json& s = j.at("subnet");
        detail::require_keys(s, {"w1", "b1", "w2", "b2"}, "degree subnet");
        d.subnet = MlpParams{matrix_from_json(s.at("w1")), detail::get<Vector>(s, "b1", w),
                             matrix_from_json(s.at("w2")), detail::get<Vector>(s, "b2", w)};
    }
    d.validate();
    return d;
}

inline json to_json_value(const RecurrentCore& core) {
    json cell = std::visit(
        [](const auto& c) -> json {
            using T = std::decay_t<decltype(c)>;
            json j = {{"input_dim", c.input_dim}, {"hidden_dim", c.hidden_dim}, {"history", c.history}};
            if constexpr (std::is_same_v<T, ExactCellParams>) {
                j["kind"] = "exact-tp";
                j["degree"] = c.degree;
                j["g"] = to_json_value(c.g);
                j["b"] = c.b;
            } else {
                j["kind"] = std::is_same_v<T, TPCellParams> ? "tp-rnn" : "tp-lstm";
                json hh = json::array(), hx = json::array();
                for (const auto& m : c.w_hh) hh.push_back(to_json_value(m));
                for (const auto& m : c.w_hx) hx.push_back(to_json_value(m));
                j["w_hh"] = hh;
                j["w_hx"] = hx;
                j["b"] = c.b;
            }
            return j;
        },
        core.cell);
    return {{"cell", cell}, {"degree", to_json_value(core.degree)}, {"gating", to_string(core.gating)}};
}

inline RecurrentCore core_from_json(const json& j) {
    detail::require_keys(j, {"cell", "degree", "gating"}, "core");
    RecurrentCore core;
    core.gating = gating_from_string(detail::get<std::string>(j, "gating", "core"));
    core.degree = degree_from_json(j.at("degree"));
    const json& c = j.at("cell");
    const std::string w = "cell";
    const auto kind = cell_kind_from_string(detail::get<std::string>(c, "kind", w));
    if (kind == CellKind::ExactTP) {
        detail::require_keys(c, {"kind", "input_dim", "hidden_dim", "history", "degree", "g", "b"}, w);
        ExactCellParams p;
        p.input_dim = detail::get<std::size_t>(c, "input_dim", w);
        p.hidden_dim = detail::get<std::size_t>(c, "hidden_dim", w);
        p.history = detail::get<std::size_t>(c, "history", w);
        p.degree = detail::get<std::size_t>(c, "degree", w);
        p.g = sym_tensor_from_json(c.at("g"));
        p.b = detail::get<Vector>(c, "b", w);
        p.validate();
        core.cell = std::move(p);
    } else {
        detail::require_keys(c, {"kind", "input_dim", "hidden_dim", "history", "w_hh", "w_hx", "b"}, w);
        BranchStack s;
        s.input_dim = detail::get<std::size_t>(c, "input_dim", w);
        s.hidden_dim = detail::get<std::size_t>(c, "hidden_dim", w);
        s.history = detail::get<std::size_t>(c, "history", w);
        for (const auto& m : c.at("w_hh")) s.w_hh.push_back(matrix_from_json(m));
        for (const auto& m : c.at("w_hx")) s.w_hx.push_back(matrix_from_json(m));
        s.b = detail::get<Vector>(c, "b", w);
        if (kind == CellKind::TPRnn) {
            TPCellParams p{s};
            p.validate();
            core.cell = std::move(p);
        } else {
            TPLSTMParams p{s};
            p.validate();
            core.cell = std::move(p);
        }
    }
    return core;
}

inline json to_json_value(const ForecastModel& m) {
    return {{"kind", "forecast"},
            {"spec", to_json_value(m.spec)},
            {"core", to_json_value(m.core)},
            {"w_out", to_json_value(m.w_out)},
            {"b_out", m.b_out}};
}

inline json to_json_value(const Seq2SeqModel& m) {
    return {{"kind", "seq2seq"},
            {"spec", to_json_value(m.spec)},
            {"encoder", to_json_value(m.encoder)},
            {"decoder", to_json_value(m.decoder)},
            {"shared_degree", m.shared_degree},
            {"w_out", to_json_value(m.w_out)},
            {"b_out", m.b_out}};
}

inline AnyModel model_from_json(const json& j) {
    const auto kind = detail::get<std::string>(j, "kind", "model");
    if (kind == "forecast") {
        detail::require_keys(j, {"kind", "spec", "core", "w_out", "b_out"}, "model");
        ForecastModel m;
        m.spec = model_spec_from_json(j.at("spec"));
        m.core = core_from_json(j.at("core"));
        m.w_out = matrix_from_json(j.at("w_out"));
        m.b_out = detail::get<Vector>(j, "b_out", "model");
        return m;
    }
    if (kind == "seq2seq") {
        detail::require_keys(j, {"kind", "spec", "encoder", "decoder", "shared_degree", "w_out", "b_out"}, "model");
        Seq2SeqModel m;
        m.spec = model_spec_from_json(j.at("spec"));
        m.encoder = core_from_json(j.at("encoder"));
        m.decoder = core_from_json(j.at("decoder"));
        m.shared_degree = detail::get<bool>(j, "shared_degree", "model");
        m.w_out = matrix_from_json(j.at("w_out"));
        m.b_out = detail::get<Vector>(j, "b_out", "model");
        return m;
    }
    throw ArgumentError("model JSON: unknown kind '" + kind + "'");
}

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string config_hash(const ModelSpec& spec, const TrainConfig& cfg) {
    const json j = {{"model", to_json_value(spec)}, {"train", to_json_value(cfg)}};
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(j.dump())));
    return buf;
}

inline json to_json_value(const Checkpoint& c) {
    return {{"format", "tprec-checkpoint"},
            {"version", 1},
            {"model", std::visit([](const auto& m) { return to_json_value(m); }, c.model)},
            {"train_config", to_json_value(c.config)},
            {"optimizer",
             {{"kind", to_string(c.optimizer.kind)},
              {"step", c.optimizer.step},
              {"first", c.optimizer.first},
              {"second", c.optimizer.second}}},
            {"epoch", c.epoch},
            {"norm_stats", {{"mean", c.norm_stats.mean}, {"std", c.norm_stats.std}}},
            {"config_hash", c.config_hash}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
    const std::string w = "checkpoint";
    detail::require_keys(j, {"format", "version", "model", "train_config", "optimizer", "epoch", "norm_stats", "config_hash"},
                         w);
    if (detail::get<std::string>(j, "format", w) != "tprec-checkpoint") throw ArgumentError(w + ": wrong format tag");
    if (detail::get<int>(j, "version", w) != 1) throw ArgumentError(w + ": unsupported version");
    Checkpoint c;
    c.model = model_from_json(j.at("model"));
    c.config = train_config_from_json(j.at("train_config"));
    const json& o = j.at("optimizer");
    detail::require_keys(o, {"kind", "step", "first", "second"}, "optimizer");
    c.optimizer.kind = optimizer_kind_from_string(detail::get<std::string>(o, "kind", "optimizer"));
    c.optimizer.step = detail::get<std::uint64_t>(o, "step", "optimizer");
    c.optimizer.first = detail::get<Vector>(o, "first", "optimizer");
    c.optimizer.second = detail::get<Vector>(o, "second", "optimizer");
    c.epoch = detail::get<std::size_t>(j, "epoch", w);
    const json& n = j.at("norm_stats");
    detail::require_keys(n, {"mean", "std"}, "norm_stats");
    c.norm_stats.mean = detail::get<Vector>(n, "mean", "norm_stats");
    c.norm_stats.std = detail::get<Vector>(n, "std", "norm_stats");
    c.config_hash = detail::get<std::string>(j, "config_hash", w);
    return c;
}

inline std::string serialize_checkpoint(const Checkpoint& c) { return to_json_value(c).dump(2) + "\n"; }

inline Checkpoint parse_checkpoint(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(std::string("checkpoint: ") + e.what(), 1, e.byte);
    }
    return checkpoint_from_json(j);
}

/// Writes to a sibling temporary file and renames it into place, so readers
/// never see a partial file.
inline void atomic_write(const std::filesystem::path& path, const std::string& content) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ResourceError("cannot open '" + tmp.string() + "' for writing");
        out << content;
        out.flush();
        if (!out) {
            out.close();
            std::filesystem::remove(tmp);
            throw ResourceError("failed writing '" + tmp.string() + "'");
        }
    }
    std::filesystem::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ArgumentError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    atomic_write(path, serialize_checkpoint(c));
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_file(path)); }

}  // namespace tprec
