#pragma once

#include "tprec/cells.hpp"
#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"
#include "tprec/spectral_norm.hpp"
#include "tprec/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace tprec {

/// dh'/dh of h' = G . (x; h)^{(x)p} + b, an m x m matrix with entry (j, k) =
/// dh'_j / dh_k. The symmetric shortcut p (G . z^{(x)(p-1)}) applies when G is
/// fully symmetric over its first p indices; otherwise the p single-mode terms
/// are summed.
inline Matrix jacobian_analytic(const SymTensor& g, std::span<const double> b, std::span<const double> x,
                                std::span<const double> h, std::size_t p) {
    if (p == 0) throw ArgumentError("jacobian_analytic: degree must be positive");
    if (g.order() != p + 1) throw ShapeError("jacobian_analytic: tensor order does not match degree");
    const std::size_t l = x.size();
    const std::size_t m = h.size();
    if (g.dims()[p] != m) throw ShapeError("jacobian_analytic: output dimension must equal hidden size", p);
    if (b.size() != m) throw ShapeError("jacobian_analytic: bias length mismatch");
    Vector z(x.begin(), x.end());
    z.insert(z.end(), h.begin(), h.end());
    const Matrix jz = exact_input_jacobian(g, z, p);
    Matrix j(m, m);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t c = 0; c < m; ++c) j(r, c) = jz(r, l + c);
    return j;
}

struct ProbeResult {
    Vector h_witness;
    double norm_value = 0.0;
    int doublings = 0;
};

struct ProbeOptions {
    int max_doublings = 200;
    int direction_candidates = 8;
    std::uint64_t seed = 0;
};

/// The h-only block G . U^{(x)p}, U = (0_l; I_m), as an m^p x m tensor.
inline SymTensor hidden_block(const SymTensor& g, std::size_t l, std::size_t p) {
    const std::size_t m = g.dims()[p];
    std::vector<std::size_t> dims(p, m);
    dims.push_back(m);
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    std::vector<double> data(total);
    std::vector<std::size_t> idx(p + 1), src(p + 1);
    for (std::size_t flat = 0; flat < total; ++flat) {
        std::size_t rem = flat;
        for (std::size_t k = p + 1; k-- > 0;) {
            idx[k] = rem % dims[k];
            rem /= dims[k];
        }
        for (std::size_t k = 0; k < p; ++k) src[k] = idx[k] + l;
        src[p] = idx[p];
        data[flat] = g.at(src);
    }
    return SymTensor(std::move(dims), std::move(data), 0);
}

/// Searches for a hidden state whose Jacobian has spectral norm above K: picks
/// a direction h0 with nonzero hidden-block response, then doubles t until
/// ||J(t h0; x)||_2 > K.
inline ProbeResult stability_probe(const SymTensor& g, std::span<const double> x, double k_threshold, std::size_t p,
                                   const ProbeOptions& opt = {}) {
    if (p <= 1)
        throw PreconditionError(
            "stability_probe: degree must exceed 1; the Jacobian of a degree-1 cell is constant, so the probe does not "
            "apply");
    if (!(k_threshold > 0.0)) throw ArgumentError("stability_probe: K must be positive");
    if (g.order() != p + 1) throw ShapeError("stability_probe: tensor order does not match degree");
    const std::size_t m = g.dims()[p];
    const std::size_t l = x.size();
    if (g.dims()[0] != l + m) throw ShapeError("stability_probe: leading dimension must equal l + m", 0);

    const SymTensor block = hidden_block(g, l, p);
    if (norm2(block.data()) == 0.0)
        throw PreconditionError("stability_probe: the hidden-state block of G is zero; the model may be stable and the "
                                "instability theorem does not apply");

    // Leading coefficient of the Jacobian along h0 is p (G_U . h0^{(x)(p-1)}).
    std::mt19937_64 rng(opt.seed);
    const Vector zeros_b(m, 0.0);
    const Vector zeros_x(0);
    Vector h0;
    double best = -1.0;
    for (int c = 0; c < opt.direction_candidates; ++c) {
        Vector cand = detail::random_unit(m, rng);
        const double lead = frobenius(jacobian_analytic(block, zeros_b, zeros_x, cand, p));
        if (lead > best) {
            best = lead;
            h0 = std::move(cand);
        }
    }
    if (best <= 0.0) throw PreconditionError("stability_probe: no direction with nonzero hidden-block response found");

    ProbeResult res;
    double t = 1.0;
    double last_finite = 0.0;
    const Vector bias(m, 0.0);
    for (int d = 0; d <= opt.max_doublings; ++d) {
        Vector h = h0;
        for (double& v : h) v *= t;
        const Matrix j = jacobian_analytic(g, bias, x, h, p);
        if (!all_finite(j.data))
            throw NumericError("stability_probe: Jacobian overflowed before exceeding K; last finite norm " +
                               std::to_string(last_finite));
        const double nrm = spectral_norm(SymTensor::from_matrix(j)).value;
        if (!std::isfinite(nrm))
            throw NumericError("stability_probe: norm overflowed before exceeding K; last finite norm " +
                               std::to_string(last_finite));
        last_finite = nrm;
        if (nrm > k_threshold) {
            res.h_witness = std::move(h);
            res.norm_value = nrm;
            res.doublings = d;
            return res;
        }
        t *= 2.0;
    }
    throw NumericError("stability_probe: norm did not exceed K within " + std::to_string(opt.max_doublings) +
                       " doublings; last norm " + std::to_string(last_finite));
}

}  // namespace tprec
