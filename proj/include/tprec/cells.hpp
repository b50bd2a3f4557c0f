#pragma once

#include "tprec/degree.hpp"
#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"
#include "tprec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tprec {

/// Rank-R multi-branch weights: a = sum_r phi_p(W_hh[r] hcat + W_hx[r] x) + b,
/// where hcat = (h^(t-1); ...; h^(t-D_h)).
struct BranchStack {
    std::size_t input_dim = 0;   // l
    std::size_t hidden_dim = 0;  // m
    std::size_t history = 1;     // D_h
    std::vector<Matrix> w_hh;    // out x (m * D_h), one per branch
    std::vector<Matrix> w_hx;    // out x l, one per branch
    Vector b;                    // out

    [[nodiscard]] std::size_t rank() const noexcept { return w_hh.size(); }
    [[nodiscard]] std::size_t out_dim() const noexcept { return b.size(); }

    void validate(std::size_t expected_out) const {
        if (rank() == 0) throw ArgumentError("cell parameters: rank must be at least 1");
        if (history == 0) throw ArgumentError("cell parameters: history depth must be at least 1");
        if (w_hx.size() != rank()) throw ShapeError("cell parameters: W_hh and W_hx branch counts differ");
        if (b.size() != expected_out)
            throw ShapeError("cell parameters: bias has length " + std::to_string(b.size()) + ", expected " +
                             std::to_string(expected_out));
        for (std::size_t r = 0; r < rank(); ++r) {
            if (w_hh[r].rows != expected_out || w_hh[r].cols != hidden_dim * history)
                throw ShapeError("cell parameters: W_hh[" + std::to_string(r) + "] has the wrong shape");
            if (w_hx[r].rows != expected_out || w_hx[r].cols != input_dim)
                throw ShapeError("cell parameters: W_hx[" + std::to_string(r) + "] has the wrong shape");
            if (!all_finite(w_hh[r].data) || !all_finite(w_hx[r].data))
                throw NumericError("cell parameters: non-finite weight in branch " + std::to_string(r));
        }
        if (!all_finite(b)) throw NumericError("cell parameters: non-finite bias");
    }

    static BranchStack zeros(std::size_t l, std::size_t m, std::size_t out, std::size_t rank, std::size_t history) {
        BranchStack s;
        s.input_dim = l;
        s.hidden_dim = m;
        s.history = history;
        for (std::size_t r = 0; r < rank; ++r) {
            s.w_hh.emplace_back(out, m * history);
            s.w_hx.emplace_back(out, l);
        }
        s.b.assign(out, 0.0);
        return s;
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) with fan_in = l + m * D_h.
    void init_uniform(std::mt19937_64& rng) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim + hidden_dim * history));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (std::size_t r = 0; r < rank(); ++r) {
            for (double& w : w_hh[r].data) w = u(rng);
            for (double& w : w_hx[r].data) w = u(rng);
        }
        for (double& w : b) w = u(rng);
    }

    bool operator==(const BranchStack&) const = default;
};

/// Degree-learnable TP-RNN cell weights (output width m).
struct TPCellParams : BranchStack {
    static TPCellParams zeros(std::size_t l, std::size_t m, std::size_t rank, std::size_t history = 1) {
        return {BranchStack::zeros(l, m, m, rank, history)};
    }
    void validate() const { BranchStack::validate(hidden_dim); }
};

/// TP-LSTM weights: the stacked pre-activation has width 4m, split as (i, g, f, o).
struct TPLSTMParams : BranchStack {
    static TPLSTMParams zeros(std::size_t l, std::size_t m, std::size_t rank, std::size_t history = 1) {
        return {BranchStack::zeros(l, m, 4 * m, rank, history)};
    }
    void validate() const { BranchStack::validate(4 * hidden_dim); }
};

enum class LstmGating {
    Minimal,  // c' = c o f, h' = c' o o, gates unsquashed
    Standard,       // c' = c o sig(f) + sig(i) o tanh(g), h' = tanh(c') o sig(o)
};

/// Exact (undecomposed) TP cell: h' = G . z^{(x)p} + b with z = (x; hcat).
struct ExactCellParams {
    std::size_t input_dim = 0;
    std::size_t hidden_dim = 0;
    std::size_t history = 1;
    std::size_t degree = 1;
    SymTensor g;  // (l + m D_h)^p x m, fully symmetric over the first p indices
    Vector b;

    void validate() const {
        const std::size_t n = input_dim + hidden_dim * history;
        if (degree == 0) throw ArgumentError("exact cell: degree must be a positive integer");
        if (g.order() != degree + 1) throw ShapeError("exact cell: tensor order does not match degree");
        for (std::size_t k = 0; k < degree; ++k)
            if (g.dims()[k] != n) throw ShapeError("exact cell: tensor dimension mismatch", k);
        if (g.dims()[degree] != hidden_dim || b.size() != hidden_dim)
            throw ShapeError("exact cell: output dimension mismatch", degree);
    }

    bool operator==(const ExactCellParams&) const = default;
};

/// Last D_h hidden states (most recent first) plus the optional LSTM memory.
struct CellState {
    std::vector<Vector> h_history;
    std::optional<Vector> c;

    static CellState zeros(std::size_t m, std::size_t history, bool with_memory = false) {
        CellState s;
        s.h_history.assign(history, Vector(m, 0.0));
        if (with_memory) s.c = Vector(m, 0.0);
        return s;
    }

    [[nodiscard]] const Vector& h() const { return h_history.front(); }

    /// (h^(t-1); ...; h^(t-D_h)).
    [[nodiscard]] Vector concat() const {
        Vector out;
        for (const auto& h : h_history) out.insert(out.end(), h.begin(), h.end());
        return out;
    }

    void push(Vector h) {
        for (std::size_t k = h_history.size(); k-- > 1;) h_history[k] = std::move(h_history[k - 1]);
        h_history.front() = std::move(h);
    }

    bool operator==(const CellState&) const = default;
};

// ---------------------------------------------------------------------------
// Multi-branch forward / backward

struct BranchCache {
    Vector x;
    Vector hcat;
    std::vector<Vector> pre;  // per-branch pre-activation
    double p = 1.0;
};

inline Vector branch_forward(const BranchStack& w, std::span<const double> x, std::span<const double> hcat, double p,
                             BranchCache* cache = nullptr) {
    if (x.size() != w.input_dim)
        throw ShapeError("cell: input has length " + std::to_string(x.size()) + ", expected " + std::to_string(w.input_dim));
    if (hcat.size() != w.hidden_dim * w.history) throw ShapeError("cell: hidden history has the wrong length");
    Vector a = w.b;
    if (cache) {
        cache->x.assign(x.begin(), x.end());
        cache->hcat.assign(hcat.begin(), hcat.end());
        cache->pre.clear();
        cache->p = p;
    }
    for (std::size_t r = 0; r < w.rank(); ++r) {
        Vector u = matvec(w.w_hh[r], hcat);
        matvec_add(w.w_hx[r], x, u);
        for (std::size_t j = 0; j < u.size(); ++j) {
            const double v = phi(u[j], p);
            if (!std::isfinite(v)) throw NumericError("cell: non-finite output in branch " + std::to_string(r));
            a[j] += v;
        }
        if (cache) cache->pre.push_back(std::move(u));
    }
    return a;
}

/// Accumulates weight gradients into `grad`, input gradients into g_x and
/// g_hcat, and returns d/dp.
inline double branch_backward(const BranchStack& w, const BranchCache& cache, std::span<const double> ga,
                              BranchStack& grad, std::span<double> g_x, std::span<double> g_hcat) {
    double g_p = 0.0;
    axpy(1.0, ga, grad.b);
    Vector gu(ga.size());
    for (std::size_t r = 0; r < w.rank(); ++r) {
        for (std::size_t j = 0; j < ga.size(); ++j) {
            const auto d = phi_grad(cache.pre[r][j], cache.p);
            gu[j] = ga[j] * d.d_s;
            g_p += ga[j] * d.d_p;
        }
        outer_add(gu, cache.hcat, grad.w_hh[r]);
        outer_add(gu, cache.x, grad.w_hx[r]);
        matvec_t_add(w.w_hh[r], gu, g_hcat);
        matvec_t_add(w.w_hx[r], gu, g_x);
    }
    return g_p;
}

// ---------------------------------------------------------------------------
// Cells

/// G . (x; h)^{(x)p} + b, the reference cell for integer degrees.
inline Vector tp_cell_exact(const SymTensor& g, std::span<const double> b, std::span<const double> x,
                            std::span<const double> h, std::size_t p) {
    Vector z(x.begin(), x.end());
    z.insert(z.end(), h.begin(), h.end());
    Vector out = tp_contract(g, z, p);
    if (b.size() != out.size()) throw ShapeError("tp_cell_exact: bias length mismatch", p);
    axpy(1.0, b, out);
    return out;
}

/// h' = sum_r phi_p(W_hh[r] hcat + W_hx[r] x) + b.
inline Vector tp_cell_decomposed(const TPCellParams& params, std::span<const double> x, const CellState& state,
                                 double p, BranchCache* cache = nullptr) {
    if (state.h_history.size() != params.history)
        throw ShapeError("tp_cell_decomposed: state holds " + std::to_string(state.h_history.size()) +
                         " hidden states, cell expects " + std::to_string(params.history));
    return branch_forward(params, x, state.concat(), p, cache);
}

struct LstmCache {
    BranchCache branch;
    Vector a;       // stacked pre-activation (i, g, f, o)
    Vector c_prev;
    Vector c_new;
};

/// One TP-LSTM step. Minimal gating uses the raw f and o blocks and
/// ignores i and g.
inline CellState tp_lstm_step(const TPLSTMParams& params, std::span<const double> x, const CellState& state, double p,
                              LstmGating gating = LstmGating::Minimal, LstmCache* cache = nullptr) {
    if (!state.c) throw ArgumentError("tp_lstm_step: state has no cell memory");
    if (state.h_history.size() != params.history) throw ShapeError("tp_lstm_step: history depth mismatch");
    const std::size_t m = params.hidden_dim;
    Vector a = branch_forward(params, x, state.concat(), p, cache ? &cache->branch : nullptr);
    const Vector& c = *state.c;
    Vector c_new(m), h_new(m);
    for (std::size_t j = 0; j < m; ++j) {
        const double ai = a[j], ag = a[m + j], af = a[2 * m + j], ao = a[3 * m + j];
        if (gating == LstmGating::Minimal) {
            c_new[j] = c[j] * af;
            h_new[j] = c_new[j] * ao;
        } else {
            const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
            c_new[j] = c[j] * sig(af) + sig(ai) * std::tanh(ag);
            h_new[j] = std::tanh(c_new[j]) * sig(ao);
        }
    }
    if (cache) {
        cache->a = a;
        cache->c_prev = c;
        cache->c_new = c_new;
    }
    CellState next = state;
    next.push(std::move(h_new));
    next.c = std::move(c_new);
    return next;
}

/// Given dL/dh' and dL/dc', returns dL/da (stacked) and writes dL/dc into g_c_prev.
inline Vector lstm_gate_backward(const LstmCache& cache, std::span<const double> gh, std::span<const double> gc,
                                 LstmGating gating, std::span<double> g_c_prev) {
    const std::size_t m = cache.c_new.size();
    Vector ga(4 * m, 0.0);
    for (std::size_t j = 0; j < m; ++j) {
        const double ai = cache.a[j], ag = cache.a[m + j], af = cache.a[2 * m + j], ao = cache.a[3 * m + j];
        const double c = cache.c_prev[j];
        const double cn = cache.c_new[j];
        if (gating == LstmGating::Minimal) {
            const double gc_total = gc[j] + gh[j] * ao;
            ga[3 * m + j] = gh[j] * cn;
            ga[2 * m + j] = gc_total * c;
            g_c_prev[j] += gc_total * af;
        } else {
            const auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
            const double si = sig(ai), tg = std::tanh(ag), sf = sig(af), so = sig(ao), tc = std::tanh(cn);
            const double gc_total = gc[j] + gh[j] * so * (1.0 - tc * tc);
            ga[3 * m + j] = gh[j] * tc * so * (1.0 - so);
            ga[2 * m + j] = gc_total * c * sf * (1.0 - sf);
            ga[j] = gc_total * tg * si * (1.0 - si);
            ga[m + j] = gc_total * si * (1.0 - tg * tg);
            g_c_prev[j] += gc_total * sf;
        }
    }
    return ga;
}

// ---------------------------------------------------------------------------
// Exact cell derivatives

/// d(G . z^{(x)p}) / dz as an m x n matrix. Uses p (G . z^{(x)(p-1)}) when G is
/// fully symmetric over its first p indices and the sum over the free mode
/// otherwise.
inline Matrix exact_input_jacobian(const SymTensor& g, std::span<const double> z, std::size_t p) {
    if (g.order() != p + 1) throw ShapeError("jacobian: tensor order does not match degree");
    const std::size_t n = z.size();
    for (std::size_t k = 0; k < p; ++k)
        if (g.dims()[k] != n) throw ShapeError("jacobian: dimension mismatch", k);
    const std::size_t m = g.dims()[p];
    const bool symmetric = g.sym_prefix() >= p && g.fully_symmetric();
    const std::size_t terms = symmetric ? 1 : p;
    Matrix j(m, n);
    for (std::size_t k = 0; k < terms; ++k) {
        std::vector<std::size_t> dims = g.dims();
        std::vector<double> cur(g.data().begin(), g.data().end());
        for (std::size_t mode = p; mode-- > 0;) {
            if (mode == k) continue;
            cur = detail::contract_mode(dims, cur, mode, z);
            dims.erase(dims.begin() + static_cast<long>(mode));
        }
        // cur is n x m (free mode k, output mode).
        const double scale = symmetric ? static_cast<double>(p) : 1.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t jj = 0; jj < m; ++jj) j(jj, i) += scale * cur[i * m + jj];
    }
    return j;
}

struct ExactCache {
    Vector z;
};

inline Vector exact_forward(const ExactCellParams& w, std::span<const double> x, const CellState& state,
                            ExactCache* cache = nullptr) {
    if (x.size() != w.input_dim) throw ShapeError("exact cell: input length mismatch");
    if (state.h_history.size() != w.history) throw ShapeError("exact cell: history depth mismatch");
    Vector z(x.begin(), x.end());
    const Vector hcat = state.concat();
    z.insert(z.end(), hcat.begin(), hcat.end());
    Vector out = tp_contract(w.g, z, w.degree);
    axpy(1.0, w.b, out);
    if (!all_finite(out)) throw NumericError("exact cell: non-finite output");
    if (cache) cache->z = std::move(z);
    return out;
}

/// Gradient of the exact cell: dG += z^{(x)p} (x) gh, db += gh, returns dL/dz.
inline Vector exact_backward(const ExactCellParams& w, const ExactCache& cache, std::span<const double> gh,
                             ExactCellParams& grad) {
    axpy(1.0, gh, grad.b);
    const std::size_t p = w.degree;
    const std::size_t m = w.hidden_dim;
    auto gdata = grad.g.mutable_data();
    std::vector<std::size_t> idx(p + 1);
    for (std::size_t flat = 0; flat < gdata.size(); flat += m) {
        w.g.unravel(flat, idx);
        // Sorted order keeps the gradient exactly symmetric over permuted indices.
        std::sort(idx.begin(), idx.begin() + static_cast<long>(p));
        double prod = 1.0;
        for (std::size_t k = 0; k < p; ++k) prod *= cache.z[idx[k]];
        if (prod == 0.0) continue;
        for (std::size_t jj = 0; jj < m; ++jj) gdata[flat + jj] += prod * gh[jj];
    }
    const Matrix jz = exact_input_jacobian(w.g, cache.z, p);
    Vector gz(cache.z.size(), 0.0);
    matvec_t_add(jz, gh, gz);
    return gz;
}

/// Decomposed cell equal to the exact cell built by build_from_factors for odd
/// p: row j of branch r is phi_{1/p}(out_weights[r][j]) * factors[r], split
/// into its x part (first l entries) and h part.
inline TPCellParams decomposed_from_factors(std::span<const Vector> factors, std::span<const Vector> out_weights,
                                            double p, std::size_t input_dim) {
    if (factors.empty()) throw ArgumentError("decomposed_from_factors: factor list is empty");
    const std::size_t n = factors[0].size();
    const std::size_t m = out_weights[0].size();
    if (n != input_dim + m) throw ShapeError("decomposed_from_factors: factor length must equal l + m");
    auto params = TPCellParams::zeros(input_dim, m, factors.size(), 1);
    for (std::size_t r = 0; r < factors.size(); ++r)
        for (std::size_t j = 0; j < m; ++j) {
            const double scale = phi(out_weights[r][j], 1.0 / p);
            for (std::size_t i = 0; i < input_dim; ++i) params.w_hx[r](j, i) = scale * factors[r][i];
            for (std::size_t i = 0; i < m; ++i) params.w_hh[r](j, i) = scale * factors[r][input_dim + i];
        }
    return params;
}

}  // namespace tprec
