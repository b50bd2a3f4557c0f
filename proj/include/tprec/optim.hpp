#pragma once

#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"

#include <cmath>
#include <cstdint>
#include <span>
#include <string>

namespace tprec {

enum class OptimizerKind { Adam, RMSprop };

inline const char* to_string(OptimizerKind k) { return k == OptimizerKind::Adam ? "adam" : "rmsprop"; }

inline OptimizerKind optimizer_kind_from_string(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "rmsprop") return OptimizerKind::RMSprop;
    throw ArgumentError("unknown optimizer '" + s + "' (expected adam or rmsprop)");
}

struct AdamHyper {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct RmspropHyper {
    double rho = 0.9;
    double eps = 1e-8;
};

/// Moment buffers over a flat parameter vector. RMSprop uses only `second`.
struct OptimizerState {
    OptimizerKind kind = OptimizerKind::Adam;
    std::uint64_t step = 0;
    Vector first;
    Vector second;

    static OptimizerState fresh(OptimizerKind kind, std::size_t n) { return {kind, 0, Vector(n, 0.0), Vector(n, 0.0)}; }

    bool operator==(const OptimizerState&) const = default;
};

/// One in-place update of `params`.
inline void optimizer_step(std::span<double> params, std::span<const double> grads, OptimizerState& st, double lr) {
    if (params.size() != grads.size() || st.first.size() != params.size() || st.second.size() != params.size())
        throw ShapeError("optimizer_step: parameter, gradient and moment sizes differ");
    ++st.step;
    if (st.kind == OptimizerKind::Adam) {
        const AdamHyper hp;
        const double t = static_cast<double>(st.step);
        const double c1 = 1.0 - std::pow(hp.beta1, t);
        const double c2 = 1.0 - std::pow(hp.beta2, t);
        for (std::size_t i = 0; i < params.size(); ++i) {
            st.first[i] = hp.beta1 * st.first[i] + (1.0 - hp.beta1) * grads[i];
            st.second[i] = hp.beta2 * st.second[i] + (1.0 - hp.beta2) * grads[i] * grads[i];
            const double m_hat = st.first[i] / c1;
            const double v_hat = st.second[i] / c2;
            params[i] -= lr * m_hat / (std::sqrt(v_hat) + hp.eps);
        }
    } else {
        const RmspropHyper hp;
        for (std::size_t i = 0; i < params.size(); ++i) {
            st.second[i] = hp.rho * st.second[i] + (1.0 - hp.rho) * grads[i] * grads[i];
            params[i] -= lr * grads[i] / (std::sqrt(st.second[i]) + hp.eps);
        }
    }
}

/// Rescales `grads` to global norm `max_norm` when it is larger. Returns true
/// when clipping happened.
inline bool clip_global_norm(std::span<double> grads, double max_norm) {
    if (!(max_norm > 0.0)) throw ArgumentError("clip_global_norm: max norm must be positive");
    const double nrm = norm2(grads);
    if (!(nrm > max_norm)) return false;
    const double scale = max_norm / nrm;
    for (double& g : grads) g *= scale;
    return true;
}

}  // namespace tprec
