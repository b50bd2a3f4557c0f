#pragma once

#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"
#include "tprec/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

namespace tprec {

/// Lower-bound certificate for the tensor spectral norm: `value` equals
/// |G x_1 w_1 ... x_q w_q| for the unit witnesses.
struct NormCertificate {
    double value = 0.0;
    std::vector<Vector> witnesses;
    int iterations = 0;
    bool converged = false;
};

struct SpectralNormOptions {
    int restarts = 20;
    double tol = 1e-8;
    int max_iters = 500;
    std::uint64_t seed = 0;
};

namespace detail {

inline Vector random_unit(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Vector v(n);
    double nrm = 0.0;
    while (nrm == 0.0) {
        for (double& x : v) x = normal(rng);
        nrm = norm2(v);
    }
    for (double& x : v) x /= nrm;
    return v;
}

inline Vector unit_basis(std::size_t n, std::size_t k = 0) {
    Vector v(n, 0.0);
    v[k] = 1.0;
    return v;
}

inline NormCertificate matrix_certificate(const SymTensor& g) {
    Matrix a(g.dims()[0], g.dims()[1]);
    std::copy(g.data().begin(), g.data().end(), a.data.begin());
    const auto top = top_singular(a);
    NormCertificate cert;
    cert.witnesses = {top.left, top.right};
    cert.value = std::abs(contract_all(g, cert.witnesses));
    cert.iterations = top.sweeps;
    cert.converged = true;
    return cert;
}

/// One higher-order power iteration run (alternating maximization).
inline NormCertificate hopm(const SymTensor& g, std::vector<Vector> us, double tol, int max_iters) {
    const std::size_t q = g.order();
    NormCertificate cert;
    double prev = -1.0;
    for (int it = 1; it <= max_iters; ++it) {
        double value = 0.0;
        for (std::size_t k = 0; k < q; ++k) {
            Vector v = contract_all_but(g, us, k);
            const double nrm = norm2(v);
            if (nrm > 0.0) {
                for (double& x : v) x /= nrm;
                us[k] = std::move(v);
            }
            value = nrm;
        }
        cert.iterations = it;
        if (prev >= 0.0 && std::abs(value - prev) <= tol * value) {
            cert.converged = true;
            break;
        }
        prev = value;
    }
    cert.value = std::abs(contract_all(g, us));
    cert.witnesses = std::move(us);
    return cert;
}

}  // namespace detail

/// Estimates sup |G x_1 u_1 ... x_q u_q| over unit vectors. Two-index tensors
/// are solved exactly; higher orders run HOPM from `restarts` random unit
/// starts and keep the best certificate, which is a lower bound on the norm.
inline NormCertificate spectral_norm(const SymTensor& g, const SpectralNormOptions& opt = {}) {
    if (g.size() == 0) throw ArgumentError("spectral_norm: empty tensor");
    if (opt.restarts < 1) throw ArgumentError("spectral_norm: restarts must be at least 1");
    if (!all_finite(g.data())) throw NumericError("spectral_norm: tensor has non-finite entries");

    const std::size_t q = g.order();
    bool zero = true;
    for (double v : g.data()) zero = zero && v == 0.0;
    if (zero) {
        NormCertificate cert;
        for (std::size_t k = 0; k < q; ++k) cert.witnesses.push_back(detail::unit_basis(g.dims()[k]));
        cert.converged = true;
        return cert;
    }
    if (q == 1) {
        NormCertificate cert;
        Vector w(g.data().begin(), g.data().end());
        const double nrm = norm2(w);
        for (double& x : w) x /= nrm;
        cert.witnesses = {w};
        cert.value = std::abs(dot(g.data(), w));
        cert.converged = true;
        return cert;
    }
    if (q == 2) return detail::matrix_certificate(g);

    std::mt19937_64 rng(opt.seed);
    NormCertificate best;
    best.value = -1.0;
    for (int r = 0; r < opt.restarts; ++r) {
        std::vector<Vector> us;
        for (std::size_t k = 0; k < q; ++k) us.push_back(detail::random_unit(g.dims()[k], rng));
        auto cert = detail::hopm(g, std::move(us), opt.tol, opt.max_iters);
        if (cert.value > best.value) best = std::move(cert);
    }
    return best;
}

inline NormCertificate spectral_norm(const SymTensor& g, int restarts, double tol, int max_iters) {
    return spectral_norm(g, SpectralNormOptions{restarts, tol, max_iters, 0});
}

namespace detail {

/// Points of the closed half-sphere {u in S^{d-1} : u_0 >= 0} on a
/// hyperspherical-coordinate grid with arc spacing close to `step`.
inline void half_sphere_grid(std::size_t d, double step, const std::function<void(const Vector&)>& visit) {
    Vector u(d, 0.0);
    if (d == 1) {
        u[0] = 1.0;
        visit(u);
        return;
    }
    // u = (cos a_0, sin a_0 cos a_1, sin a_0 sin a_1 cos a_2, ...); the last
    // angle spans [0, 2pi), the others [0, pi], the first [0, pi/2].
    std::function<void(std::size_t, double)> rec = [&](std::size_t k, double radius) {
        if (k == d - 1) {
            u[k] = radius;
            visit(u);
            return;
        }
        const bool last_angle = k == d - 2;
        const double span = last_angle ? 2.0 * std::numbers::pi : (k == 0 ? std::numbers::pi / 2 : std::numbers::pi);
        const double local = radius > 0.0 ? step / radius : span;
        std::size_t count = static_cast<std::size_t>(std::ceil(span / local));
        if (count == 0) count = 1;
        const double da = span / static_cast<double>(count);
        const std::size_t stop = last_angle ? count : count + 1;
        for (std::size_t i = 0; i < stop; ++i) {
            const double a = da * static_cast<double>(i);
            u[k] = radius * std::cos(a);
            if (last_angle) {
                u[k + 1] = radius * std::sin(a);
                visit(u);
            } else {
                rec(k + 1, radius * std::sin(a));
            }
            if (radius == 0.0) break;
        }
    };
    rec(0, 1.0);
}

}  // namespace detail

/// Exhaustive grid maximisation of the multilinear form. All but the last
/// one (order <= 2) or two (order >= 3) modes are swept over half-sphere
/// grids at `grid_resolution` radians; the remaining modes are maximised in
/// closed form (vector norm, or the exact matrix 2-norm).
inline double spectral_norm_bruteforce(const SymTensor& g, double grid_resolution = 0.01) {
    std::size_t total = 1;
    for (auto d : g.dims()) total *= d;
    if (total > 100000) throw ResourceError("spectral_norm_bruteforce: dimension product exceeds 1e5");
    if (!(grid_resolution > 0.0)) throw ArgumentError("spectral_norm_bruteforce: grid resolution must be positive");
    if (!all_finite(g.data())) throw NumericError("spectral_norm_bruteforce: non-finite entries");

    const std::size_t q = g.order();
    if (q == 1) return norm2(g.data());
    const std::size_t swept = q <= 2 ? q - 1 : q - 2;

    double best = 0.0;
    std::vector<std::size_t> dims = g.dims();
    std::function<void(std::size_t, const std::vector<double>&)> sweep = [&](std::size_t k,
                                                                              const std::vector<double>& cur) {
        std::vector<std::size_t> rest(dims.begin() + static_cast<long>(k), dims.end());
        if (k == swept) {
            if (rest.size() == 1) {
                best = std::max(best, norm2(cur));
            } else {
                Matrix a(rest[0], rest[1]);
                std::copy(cur.begin(), cur.end(), a.data.begin());
                best = std::max(best, operator_norm(a));
            }
            return;
        }
        detail::half_sphere_grid(rest[0], grid_resolution, [&](const Vector& u) {
            sweep(k + 1, detail::contract_mode(rest, cur, 0, u));
        });
    };
    sweep(0, std::vector<double>(g.data().begin(), g.data().end()));
    return best;
}

}  // namespace tprec
