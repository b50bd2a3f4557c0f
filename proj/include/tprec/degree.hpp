#pragma once

#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <random>
#include <span>
#include <string>

namespace tprec {

/// Sign-preserving power sgn(s)|s|^p. phi(0, p) is 0 for every p, including
/// p <= 0 where |0|^p is undefined.
inline double phi(double s, double p) {
    if (std::isnan(s) || std::isnan(p)) throw NumericError("phi: NaN input");
    if (s == 0.0) return 0.0;
    const double mag = std::pow(std::abs(s), p);
    return s > 0.0 ? mag : -mag;
}

/// Magnitudes below this are clamped when differentiating phi.
inline constexpr double kPhiGradEps = 1e-6;

struct PhiGrad {
    double d_s = 0.0;
    double d_p = 0.0;
};

/// Partial derivatives of phi. d_s = p|s|^{p-1}, d_p = sgn(s)|s|^p ln|s|, with
/// |s| clamped below at kPhiGradEps.
inline PhiGrad phi_grad(double s, double p) {
    if (std::isnan(s) || std::isnan(p)) throw NumericError("phi_grad: NaN input");
    const double a = std::max(std::abs(s), kPhiGradEps);
    const double sign = s > 0.0 ? 1.0 : (s < 0.0 ? -1.0 : 0.0);
    const double pw = std::pow(a, p);
    PhiGrad g;
    g.d_s = p * std::pow(a, p - 1.0);
    g.d_p = sign * pw * std::log(a);
    return g;
}

/// ln(3/2).
inline constexpr double kDegreeBoundP0 = 0.40546510810816438198;

struct DegreeBoundInputs {
    double n = 1.0;       // state dimension l + m
    double sigma2 = 1.0;  // sub-Gaussian variance proxy
    double c1 = 1.0;
    double c2 = 1.0;
};

/// Lower bound on the degree of a long-memory TP-RNP:
/// (p0 / 2)(1 + sqrt(1 + C1/(n sigma^2) - C2/n)) - 1 with p0 = ln(3/2).
inline double degree_bound(const DegreeBoundInputs& in) {
    if (!(in.n > 0.0)) throw DomainError("degree_bound: n must be positive");
    if (!(in.sigma2 > 0.0)) throw DomainError("degree_bound: sigma2 must be positive");
    if (!(in.c1 > 0.0) || !(in.c2 >= 0.0)) throw DomainError("degree_bound: C1 must be positive and C2 nonnegative");
    const double radicand = 1.0 + in.c1 / (in.n * in.sigma2) - in.c2 / in.n;
    if (radicand < 0.0)
        throw DomainError("degree_bound: 1 + C1/(n*sigma2) - C2/n must be nonnegative, got " + std::to_string(radicand));
    return kDegreeBoundP0 / 2.0 * (1.0 + std::sqrt(radicand)) - 1.0;
}

// ---------------------------------------------------------------------------
// Degree controllers

enum class DegreeMode { Fixed, TrainableScalar, SubNet };

inline constexpr std::size_t kDegreeMlpHidden = 3;

/// Two-layer perceptron p = W2 tanh(W1 [p_prev; h_prev; x] + b1) + b2.
struct MlpParams {
    Matrix w1;  // hidden x (1 + m + l)
    Vector b1;  // hidden
    Matrix w2;  // 1 x hidden
    Vector b2;  // 1

    static MlpParams zeros(std::size_t input_dim, std::size_t hidden = kDegreeMlpHidden) {
        return {Matrix(hidden, input_dim), Vector(hidden, 0.0), Matrix(1, hidden), Vector(1, 0.0)};
    }

    [[nodiscard]] std::size_t input_dim() const noexcept { return w1.cols; }

    void validate() const {
        if (w1.rows == 0 || b1.size() != w1.rows || w2.rows != 1 || w2.cols != w1.rows || b2.size() != 1)
            throw ShapeError("MlpParams: inconsistent shapes");
        if (!all_finite(w1.data) || !all_finite(b1) || !all_finite(w2.data) || !all_finite(b2))
            throw NumericError("MlpParams: non-finite entries");
    }

    bool operator==(const MlpParams&) const = default;
};

struct DegreeParam {
    DegreeMode mode = DegreeMode::Fixed;
    double value = 1.0;
    double p_min = 0.1;
    double p_max = 3.0;
    std::optional<MlpParams> subnet;

    static DegreeParam fixed(double p) {
        DegreeParam d;
        d.value = p;
        d.p_min = std::min(d.p_min, p);
        d.p_max = std::max(d.p_max, p);
        return d;
    }

    [[nodiscard]] double clamp(double p) const { return std::clamp(p, p_min, p_max); }

    void validate() const {
        if (!(p_min <= p_max)) throw ArgumentError("DegreeParam: p_min must not exceed p_max");
        if (!(value >= p_min && value <= p_max)) throw ArgumentError("DegreeParam: value outside [p_min, p_max]");
        if ((mode == DegreeMode::SubNet) != subnet.has_value())
            throw ArgumentError("DegreeParam: a sub-network is present exactly when mode is SubNet");
        if (subnet) subnet->validate();
    }

    bool operator==(const DegreeParam&) const = default;
};

inline const char* to_string(DegreeMode m) {
    switch (m) {
    case DegreeMode::Fixed: return "fixed";
    case DegreeMode::TrainableScalar: return "trainable";
    case DegreeMode::SubNet: return "subnet";
    }
    return "?";
}

inline DegreeMode degree_mode_from_string(const std::string& s) {
    if (s == "fixed") return DegreeMode::Fixed;
    if (s == "trainable") return DegreeMode::TrainableScalar;
    if (s == "subnet") return DegreeMode::SubNet;
    throw ArgumentError("unknown degree mode '" + s + "' (expected fixed, trainable or subnet)");
}

/// Fresh controller starting at p = `init`. The sub-network's output layer
/// starts at zero with bias `init`, so p^(t) = init until training moves it.
inline DegreeParam make_degree(DegreeMode mode, double init, double p_min, double p_max, std::size_t hidden_dim,
                               std::size_t input_dim, std::mt19937_64& rng) {
    DegreeParam d;
    d.mode = mode;
    d.value = init;
    d.p_min = p_min;
    d.p_max = p_max;
    if (mode == DegreeMode::SubNet) {
        auto mlp = MlpParams::zeros(1 + hidden_dim + input_dim);
        const double bound = 1.0 / std::sqrt(static_cast<double>(mlp.input_dim()));
        std::uniform_real_distribution<double> u(-bound, bound);
        for (double& w : mlp.w1.data) w = u(rng);
        for (double& w : mlp.b1) w = u(rng);
        mlp.b2[0] = init;
        d.subnet = std::move(mlp);
    }
    d.validate();
    return d;
}

/// Intermediate values of one sub-network evaluation, kept for backprop.
struct DegreeCache {
    Vector input;
    Vector hidden;
    double raw = 0.0;
    bool clamped = false;
};

/// One controller step: the degree in effect at time t.
inline double controller_step(const DegreeParam& ctrl, double p_prev, std::span<const double> h_prev,
                              std::span<const double> x, DegreeCache* cache = nullptr) {
    if (ctrl.mode != DegreeMode::SubNet) return ctrl.value;
    const MlpParams& mlp = *ctrl.subnet;
    if (1 + h_prev.size() + x.size() != mlp.input_dim())
        throw ShapeError("controller_step: sub-network expects input of size " + std::to_string(mlp.input_dim()) +
                         ", got " + std::to_string(1 + h_prev.size() + x.size()));
    Vector in;
    in.reserve(mlp.input_dim());
    in.push_back(p_prev);
    in.insert(in.end(), h_prev.begin(), h_prev.end());
    in.insert(in.end(), x.begin(), x.end());
    Vector hid = matvec(mlp.w1, in);
    for (std::size_t i = 0; i < hid.size(); ++i) hid[i] = std::tanh(hid[i] + mlp.b1[i]);
    const double raw = dot(mlp.w2.row(0), hid) + mlp.b2[0];
    const double p = ctrl.clamp(raw);
    if (cache) {
        cache->input = std::move(in);
        cache->hidden = std::move(hid);
        cache->raw = raw;
        cache->clamped = p != raw;
    }
    return p;
}

/// Backward pass of controller_step for the sub-network. Accumulates parameter
/// gradients into `grad` and returns d/d[p_prev; h_prev; x]. Gradients are
/// zero when the output was clamped.
inline Vector controller_backward(const DegreeParam& ctrl, const DegreeCache& cache, double g_p, MlpParams& grad) {
    const MlpParams& mlp = *ctrl.subnet;
    Vector g_in(mlp.input_dim(), 0.0);
    if (cache.clamped || g_p == 0.0) return g_in;
    grad.b2[0] += g_p;
    Vector g_hid(cache.hidden.size());
    for (std::size_t i = 0; i < g_hid.size(); ++i) {
        grad.w2(0, i) += g_p * cache.hidden[i];
        g_hid[i] = g_p * mlp.w2(0, i) * (1.0 - cache.hidden[i] * cache.hidden[i]);
    }
    outer_add(g_hid, cache.input, grad.w1);
    axpy(1.0, g_hid, grad.b1);
    matvec_t_add(mlp.w1, g_hid, g_in);
    return g_in;
}

}  // namespace tprec
