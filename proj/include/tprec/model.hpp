#pragma once

#include "tprec/cells.hpp"
#include "tprec/degree.hpp"
#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"
#include "tprec/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <type_traits>
#include <variant>
#include <vector>

namespace tprec {

enum class CellKind { TPRnn, TPLstm, ExactTP };

inline const char* to_string(CellKind k) {
    switch (k) {
    case CellKind::TPRnn: return "tp-rnn";
    case CellKind::TPLstm: return "tp-lstm";
    case CellKind::ExactTP: return "exact-tp";
    }
    return "?";
}

inline CellKind cell_kind_from_string(const std::string& s) {
    if (s == "tp-rnn") return CellKind::TPRnn;
    if (s == "tp-lstm") return CellKind::TPLstm;
    if (s == "exact-tp") return CellKind::ExactTP;
    throw ArgumentError("unknown cell '" + s + "' (expected tp-rnn, tp-lstm or exact-tp)");
}

inline const char* to_string(LstmGating g) { return g == LstmGating::Minimal ? "minimal" : "standard"; }

inline LstmGating gating_from_string(const std::string& s) {
    if (s == "minimal") return LstmGating::Minimal;
    if (s == "standard") return LstmGating::Standard;
    throw ArgumentError("unknown LSTM gating '" + s + "' (expected minimal or standard)");
}

/// Architecture of a recurrent forecaster. The exact cell takes its integer
/// degree from `degree_init` and needs a fixed degree.
struct ModelSpec {
    CellKind cell = CellKind::TPRnn;
    std::size_t input_dim = 1;
    std::size_t hidden_dim = 8;
    std::size_t rank = 1;
    std::size_t history = 1;
    LstmGating gating = LstmGating::Minimal;
    DegreeMode degree_mode = DegreeMode::Fixed;
    double degree_init = 1.0;
    double degree_min = 0.1;
    double degree_max = 3.0;

    void validate() const {
        if (input_dim == 0 || hidden_dim == 0) throw ArgumentError("model: input and hidden sizes must be positive");
        if (rank == 0) throw ArgumentError("model: rank must be at least 1");
        if (history == 0) throw ArgumentError("model: history depth must be at least 1");
        if (!(degree_min <= degree_init && degree_init <= degree_max))
            throw ArgumentError("model: degree init must lie in [degree_min, degree_max]");
        if (!(degree_min > 0.0)) throw ArgumentError("model: degree_min must be positive");
        if (cell == CellKind::ExactTP) {
            if (degree_mode != DegreeMode::Fixed)
                throw ArgumentError("model: the exact cell needs a fixed integer degree");
            if (degree_init != std::round(degree_init) || degree_init < 1.0)
                throw ArgumentError("model: the exact cell needs a positive integer degree");
        }
    }

    bool operator==(const ModelSpec&) const = default;
};

using CellParams = std::variant<TPCellParams, TPLSTMParams, ExactCellParams>;

/// A cell plus its degree controller.
struct RecurrentCore {
    CellParams cell;
    DegreeParam degree;
    LstmGating gating = LstmGating::Minimal;

    [[nodiscard]] CellKind kind() const { return static_cast<CellKind>(cell.index()); }

    [[nodiscard]] std::size_t input_dim() const {
        return std::visit([](const auto& c) { return c.input_dim; }, cell);
    }
    [[nodiscard]] std::size_t hidden_dim() const {
        return std::visit([](const auto& c) { return c.hidden_dim; }, cell);
    }
    [[nodiscard]] std::size_t history() const {
        return std::visit([](const auto& c) { return c.history; }, cell);
    }

    bool operator==(const RecurrentCore&) const = default;
};

/// Seeds for the cell weights and the degree sub-network are separate streams,
/// so models that differ only in degree mode share their cell weights.
inline RecurrentCore make_core(const ModelSpec& spec, std::mt19937_64& cell_rng, std::mt19937_64& degree_rng) {
    spec.validate();
    RecurrentCore core;
    core.gating = spec.gating;
    const std::size_t l = spec.input_dim, m = spec.hidden_dim;
    switch (spec.cell) {
    case CellKind::TPRnn: {
        auto p = TPCellParams::zeros(l, m, spec.rank, spec.history);
        p.init_uniform(cell_rng);
        core.cell = std::move(p);
        break;
    }
    case CellKind::TPLstm: {
        auto p = TPLSTMParams::zeros(l, m, spec.rank, spec.history);
        p.init_uniform(cell_rng);
        core.cell = std::move(p);
        break;
    }
    case CellKind::ExactTP: {
        const auto deg = static_cast<std::size_t>(spec.degree_init);
        const std::size_t n = l + m * spec.history;
        std::uniform_real_distribution<double> uf(-1.0 / std::sqrt(static_cast<double>(n)),
                                                  1.0 / std::sqrt(static_cast<double>(n)));
        std::uniform_real_distribution<double> uo(-1.0 / std::sqrt(static_cast<double>(spec.rank)),
                                                  1.0 / std::sqrt(static_cast<double>(spec.rank)));
        std::vector<Vector> factors(spec.rank, Vector(n)), outs(spec.rank, Vector(m));
        for (std::size_t r = 0; r < spec.rank; ++r) {
            for (double& v : factors[r]) v = uf(cell_rng);
            for (double& v : outs[r]) v = uo(cell_rng);
        }
        ExactCellParams p;
        p.input_dim = l;
        p.hidden_dim = m;
        p.history = spec.history;
        p.degree = deg;
        p.g = build_from_factors(factors, outs, deg);
        p.b.assign(m, 0.0);
        for (double& v : p.b) v = uf(cell_rng);
        core.cell = std::move(p);
        break;
    }
    }
    core.degree = make_degree(spec.degree_mode, spec.degree_init, spec.degree_min, spec.degree_max, m, l, degree_rng);
    return core;
}

/// Same shapes as `core`, every trainable entry zero.
inline RecurrentCore zeros_like(const RecurrentCore& core) {
    RecurrentCore z = core;
    std::visit(
        [](auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, ExactCellParams>) {
                c.g = SymTensor::zeros(c.g.dims(), c.g.sym_prefix(), c.g.symmetry());
                std::fill(c.b.begin(), c.b.end(), 0.0);
            } else {
                for (auto& w : c.w_hh) std::fill(w.data.begin(), w.data.end(), 0.0);
                for (auto& w : c.w_hx) std::fill(w.data.begin(), w.data.end(), 0.0);
                std::fill(c.b.begin(), c.b.end(), 0.0);
            }
        },
        z.cell);
    z.degree.value = 0.0;
    if (z.degree.subnet) z.degree.subnet = MlpParams::zeros(z.degree.subnet->input_dim(), z.degree.subnet->w1.rows);
    return z;
}

/// Calls f(name, span) for every trainable block of the cell, in a fixed order.
template <class Core, class F>
void visit_cell_params(Core& core, const std::string& prefix, F&& f) {
    std::visit(
        [&](auto& c) {
            using T = std::decay_t<decltype(c)>;
            if constexpr (std::is_same_v<T, ExactCellParams>) {
                if constexpr (std::is_const_v<Core>)
                    f(prefix + "g", c.g.data());
                else
                    f(prefix + "g", c.g.mutable_data());
                f(prefix + "b", std::span(c.b));
            } else {
                for (std::size_t r = 0; r < c.rank(); ++r) {
                    f(prefix + "w_hh[" + std::to_string(r) + "]", std::span(c.w_hh[r].data));
                    f(prefix + "w_hx[" + std::to_string(r) + "]", std::span(c.w_hx[r].data));
                }
                f(prefix + "b", std::span(c.b));
            }
        },
        core.cell);
}

/// Trainable degree quantities: the scalar p or the sub-network weights.
template <class Deg, class F>
void visit_degree_params(Deg& d, const std::string& prefix, F&& f) {
    if (d.mode == DegreeMode::TrainableScalar) {
        f(prefix + "value", std::span(&d.value, 1));
    } else if (d.mode == DegreeMode::SubNet) {
        auto& s = *d.subnet;
        f(prefix + "subnet.w1", std::span(s.w1.data));
        f(prefix + "subnet.b1", std::span(s.b1));
        f(prefix + "subnet.w2", std::span(s.w2.data));
        f(prefix + "subnet.b2", std::span(s.b2));
    }
}

// ---------------------------------------------------------------------------
// One recurrent step with its reverse

struct RunState {
    CellState cell;
    double p_prev = 1.0;

    bool operator==(const RunState&) const = default;
};

inline RunState initial_state(const RecurrentCore& core) {
    return {CellState::zeros(core.hidden_dim(), core.history(), core.kind() == CellKind::TPLstm), core.degree.value};
}

struct StepCache {
    DegreeCache degree;
    double p = 1.0;
    BranchCache branch;
    LstmCache lstm;
    ExactCache exact;
};

/// Advances `st` by one input and returns the new hidden state. `deg` may
/// belong to another core (shared degree).
inline const Vector& core_step(const RecurrentCore& core, const DegreeParam& deg, std::span<const double> x,
                               RunState& st, StepCache* cache = nullptr) {
    const double p = controller_step(deg, st.p_prev, st.cell.h(), x, cache ? &cache->degree : nullptr);
    switch (core.kind()) {
    case CellKind::TPRnn: {
        Vector h = tp_cell_decomposed(std::get<TPCellParams>(core.cell), x, st.cell, p, cache ? &cache->branch : nullptr);
        st.cell.push(std::move(h));
        break;
    }
    case CellKind::TPLstm:
        st.cell = tp_lstm_step(std::get<TPLSTMParams>(core.cell), x, st.cell, p, core.gating,
                               cache ? &cache->lstm : nullptr);
        break;
    case CellKind::ExactTP: {
        Vector h = exact_forward(std::get<ExactCellParams>(core.cell), x, st.cell, cache ? &cache->exact : nullptr);
        st.cell.push(std::move(h));
        break;
    }
    }
    st.p_prev = p;
    if (cache) cache->p = p;
    return st.cell.h();
}

/// Adjoint of a RunState: dL/dh^(t-k), dL/dc and dL/dp_prev.
struct StateAdjoint {
    std::vector<Vector> hist;
    Vector c;
    double p = 0.0;

    static StateAdjoint zeros(const RecurrentCore& core) {
        const std::size_t m = core.hidden_dim();
        return {std::vector<Vector>(core.history(), Vector(m, 0.0)), Vector(m, 0.0), 0.0};
    }
};

/// Reverse of core_step. On entry `adj` holds the adjoint of the state after
/// the step; on exit, of the state before it. Parameter gradients accumulate
/// into `grad` / `grad_deg`; returns dL/dx.
inline Vector core_step_backward(const RecurrentCore& core, const DegreeParam& deg, const StepCache& cache,
                                 StateAdjoint& adj, RecurrentCore& grad, DegreeParam& grad_deg) {
    const std::size_t m = core.hidden_dim();
    const std::size_t l = core.input_dim();
    const std::size_t dh = core.history();
    const Vector g_h_new = adj.hist[0];
    std::vector<Vector> before(dh, Vector(m, 0.0));
    for (std::size_t k = 1; k < dh; ++k) before[k - 1] = std::move(adj.hist[k]);

    Vector g_x(l, 0.0);
    Vector g_hcat(m * dh, 0.0);
    double g_p = adj.p;
    switch (core.kind()) {
    case CellKind::TPRnn:
        g_p += branch_backward(std::get<TPCellParams>(core.cell), cache.branch, g_h_new,
                               std::get<TPCellParams>(grad.cell), g_x, g_hcat);
        break;
    case CellKind::TPLstm: {
        Vector g_c_prev(m, 0.0);
        const Vector ga = lstm_gate_backward(cache.lstm, g_h_new, adj.c, core.gating, g_c_prev);
        g_p += branch_backward(std::get<TPLSTMParams>(core.cell), cache.lstm.branch, ga,
                               std::get<TPLSTMParams>(grad.cell), g_x, g_hcat);
        adj.c = std::move(g_c_prev);
        break;
    }
    case CellKind::ExactTP: {
        const Vector gz =
            exact_backward(std::get<ExactCellParams>(core.cell), cache.exact, g_h_new, std::get<ExactCellParams>(grad.cell));
        std::copy(gz.begin(), gz.begin() + static_cast<long>(l), g_x.begin());
        std::copy(gz.begin() + static_cast<long>(l), gz.end(), g_hcat.begin());
        break;
    }
    }
    for (std::size_t k = 0; k < dh; ++k)
        for (std::size_t i = 0; i < m; ++i) before[k][i] += g_hcat[k * m + i];

    adj.p = 0.0;
    if (deg.mode == DegreeMode::TrainableScalar) {
        grad_deg.value += g_p;
    } else if (deg.mode == DegreeMode::SubNet) {
        const Vector g_in = controller_backward(deg, cache.degree, g_p, *grad_deg.subnet);
        adj.p = g_in[0];
        for (std::size_t i = 0; i < m; ++i) before[0][i] += g_in[1 + i];
        for (std::size_t i = 0; i < l; ++i) g_x[i] += g_in[1 + m + i];
    }
    adj.hist = std::move(before);
    return g_x;
}

// ---------------------------------------------------------------------------
// Single-cell forecaster: y_t = W_out h_t + b_out predicts x_{t+1}

enum class LossKind { MSE, SSE };

inline const char* to_string(LossKind k) { return k == LossKind::MSE ? "mse" : "sse"; }

inline LossKind loss_kind_from_string(const std::string& s) {
    if (s == "mse") return LossKind::MSE;
    if (s == "sse") return LossKind::SSE;
    throw ArgumentError("unknown loss '" + s + "' (expected mse or sse)");
}

/// Loss over a set of residuals and its derivative scale: MSE averages over
/// all entries, SSE sums.
inline double loss_scale(LossKind k, std::size_t entries) {
    return k == LossKind::MSE ? 1.0 / static_cast<double>(entries) : 1.0;
}

struct ForecastModel {
    ModelSpec spec;
    RecurrentCore core;
    Matrix w_out;  // l x m
    Vector b_out;  // l

    bool operator==(const ForecastModel&) const = default;
};

inline void init_readout(std::size_t l, std::size_t m, Matrix& w, Vector& b, std::mt19937_64& rng) {
    w = Matrix(l, m);
    b.assign(l, 0.0);
    const double bound = 1.0 / std::sqrt(static_cast<double>(m));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (double& v : w.data) v = u(rng);
}

/// Fresh model. The degree sub-network draws from its own stream derived from
/// `seed`, so a fixed-degree twin with the same seed has identical weights.
inline ForecastModel make_forecast_model(const ModelSpec& spec, std::uint64_t seed) {
    std::mt19937_64 cell_rng(seed);
    std::mt19937_64 degree_rng(seed ^ 0x9E3779B97F4A7C15ULL);
    ForecastModel model;
    model.spec = spec;
    model.core = make_core(spec, cell_rng, degree_rng);
    init_readout(spec.input_dim, spec.hidden_dim, model.w_out, model.b_out, cell_rng);
    return model;
}

template <class Model, class F>
    requires std::is_same_v<std::remove_const_t<Model>, ForecastModel>
void visit_params(Model& model, F&& f) {
    visit_cell_params(model.core, "cell.", f);
    visit_degree_params(model.core.degree, "degree.", f);
    f(std::string("readout.w"), std::span(model.w_out.data));
    f(std::string("readout.b"), std::span(model.b_out));
}

template <class Model>
std::size_t param_count(const Model& model) {
    std::size_t n = 0;
    visit_params(model, [&](const std::string&, auto s) { n += s.size(); });
    return n;
}

template <class Model>
Vector flatten_params(const Model& model) {
    Vector out;
    visit_params(model, [&](const std::string&, auto s) { out.insert(out.end(), s.begin(), s.end()); });
    return out;
}

template <class Model>
void unflatten_params(Model& model, std::span<const double> flat) {
    std::size_t at = 0;
    visit_params(model, [&](const std::string&, std::span<double> s) {
        if (at + s.size() > flat.size()) throw ShapeError("unflatten_params: flat vector too short");
        std::copy(flat.begin() + static_cast<long>(at), flat.begin() + static_cast<long>(at + s.size()), s.begin());
        at += s.size();
    });
    if (at != flat.size()) throw ShapeError("unflatten_params: flat vector too long");
}

/// Throws NumericError naming the first block with a non-finite entry.
template <class Model>
void check_finite_gradients(const Model& grad) {
    visit_params(grad, [](const std::string& name, auto s) {
        if (!all_finite(s)) throw NumericError("non-finite gradient in parameter '" + name + "'");
    });
}

/// Re-establishes the degree bounds after an update.
inline void clamp_degree(DegreeParam& d) { d.value = d.clamp(d.value); }

inline Vector readout(const Matrix& w, const Vector& b, std::span<const double> h) {
    Vector y = b;
    matvec_add(w, h, y);
    return y;
}

struct WindowGradients {
    ForecastModel grad;
    double loss = 0.0;
    double mean_degree = 0.0;
    RunState final_state;
};

/// Loss of predicting targets[t] from inputs[0..t] starting at `start`.
inline double window_loss(const ForecastModel& model, std::span<const Vector> inputs, std::span<const Vector> targets,
                          LossKind loss, RunState start) {
    if (inputs.size() != targets.size()) throw ShapeError("window: inputs and targets differ in length");
    double sse = 0.0;
    std::size_t entries = 0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const Vector& h = core_step(model.core, model.core.degree, inputs[t], start);
        const Vector y = readout(model.w_out, model.b_out, h);
        for (std::size_t i = 0; i < y.size(); ++i) sse += (y[i] - targets[t][i]) * (y[i] - targets[t][i]);
        entries += y.size();
    }
    return sse * loss_scale(loss, entries);
}

/// Exact reverse-mode gradients of the window loss. The incoming state is
/// treated as a constant (truncated BPTT).
inline WindowGradients bptt_gradients(const ForecastModel& model, std::span<const Vector> inputs,
                                      std::span<const Vector> targets, LossKind loss, RunState start) {
    if (inputs.size() != targets.size()) throw ShapeError("bptt: inputs and targets differ in length");
    if (inputs.empty()) throw ArgumentError("bptt: empty window");
    const std::size_t l = model.spec.input_dim;
    for (std::size_t t = 0; t < inputs.size(); ++t)
        if (inputs[t].size() != l || targets[t].size() != l)
            throw ShapeError("bptt: step " + std::to_string(t) + " has the wrong input or target length");

    const std::size_t steps = inputs.size();
    std::vector<StepCache> caches(steps);
    std::vector<Vector> hs(steps), residuals(steps);
    RunState st = std::move(start);
    double sse = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        hs[t] = core_step(model.core, model.core.degree, inputs[t], st, &caches[t]);
        Vector y = readout(model.w_out, model.b_out, hs[t]);
        for (std::size_t i = 0; i < l; ++i) {
            y[i] -= targets[t][i];
            sse += y[i] * y[i];
        }
        residuals[t] = std::move(y);
    }
    const double scale = loss_scale(loss, steps * l);

    WindowGradients out;
    out.loss = sse * scale;
    for (const auto& c : caches) out.mean_degree += c.p / static_cast<double>(steps);
    out.final_state = std::move(st);
    out.grad = model;
    out.grad.core = zeros_like(model.core);
    out.grad.w_out = Matrix(l, model.spec.hidden_dim);
    out.grad.b_out.assign(l, 0.0);

    StateAdjoint adj = StateAdjoint::zeros(model.core);
    for (std::size_t t = steps; t-- > 0;) {
        Vector gy = residuals[t];
        for (double& v : gy) v *= 2.0 * scale;
        outer_add(gy, hs[t], out.grad.w_out);
        axpy(1.0, gy, out.grad.b_out);
        matvec_t_add(model.w_out, gy, adj.hist[0]);
        core_step_backward(model.core, model.core.degree, caches[t], adj, out.grad.core, out.grad.core.degree);
    }
    check_finite_gradients(out.grad);
    return out;
}

}  // namespace tprec
