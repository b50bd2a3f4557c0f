#pragma once

#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"
#include "tprec/spectral_norm.hpp"
#include "tprec/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace tprec {

enum class NoiseKind { Gaussian, Uniform };

struct NoiseSpec {
    NoiseKind kind = NoiseKind::Gaussian;
    double sigma = 1.0;  // Gaussian
    double a = -1.0;     // Uniform lower
    double b = 1.0;      // Uniform upper
    std::size_t active_dims = 1;
    std::optional<double> kappa;  // diagnostic only

    void validate(std::size_t n) const {
        if (kind == NoiseKind::Gaussian && !(sigma >= 0.0)) throw ArgumentError("noise: sigma must be nonnegative");
        if (kind == NoiseKind::Uniform && !(a <= b)) throw ArgumentError("noise: need a <= b");
        if (active_dims > n) throw ArgumentError("noise: active_dims exceeds state dimension");
        if (kappa && !(*kappa >= 2.0)) throw ArgumentError("noise: kappa must be at least 2");
    }
};

/// s^(t) = M . (s^(t-1))^{(x)p} + (eps^(t); 0).
struct ProcessSpec {
    SymTensor m;
    std::size_t p = 1;
    NoiseSpec noise;
    std::size_t n = 1;

    void validate() const {
        if (p == 0) throw ArgumentError("process: degree must be positive");
        if (m.order() != p + 1) throw ShapeError("process: M must have p + 1 indices");
        for (std::size_t k = 0; k <= p; ++k)
            if (m.dims()[k] != n) throw ShapeError("process: every dimension of M must equal n", k);
        if (m.sym_prefix() != p && p > 1) throw ArgumentError("process: M must be symmetric over its first p indices");
        noise.validate(n);
    }
};

inline constexpr double kDivergenceThreshold = 1e12;

struct Simulation {
    Matrix path;  // rows are s^(t) after burn-in; truncated on divergence
    bool diverged = false;
    std::size_t divergence_step = 0;  // counted from the first step, burn-in included
};

/// Iterates the process from s = 0. A path whose coordinates exceed 1e12 in
/// magnitude is flagged and truncated.
inline Simulation simulate_tprnp(const ProcessSpec& spec, std::size_t steps, std::size_t burn_in, std::uint64_t seed) {
    spec.validate();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> gauss(0.0, spec.noise.kind == NoiseKind::Gaussian ? spec.noise.sigma : 1.0);
    std::uniform_real_distribution<double> unif(spec.noise.a, spec.noise.b);
    const std::size_t n = spec.n;
    Simulation sim;
    std::vector<double> rows;
    rows.reserve(steps * n);
    Vector s(n, 0.0);
    for (std::size_t t = 1; t <= burn_in + steps; ++t) {
        Vector next = tp_contract(spec.m, s, spec.p);
        for (std::size_t i = 0; i < spec.noise.active_dims; ++i) {
            if (spec.noise.kind == NoiseKind::Gaussian)
                next[i] += spec.noise.sigma > 0.0 ? gauss(rng) : 0.0;
            else
                next[i] += unif(rng);
        }
        bool blown = false;
        for (double v : next) blown = blown || !(std::abs(v) <= kDivergenceThreshold);
        if (blown) {
            sim.diverged = true;
            sim.divergence_step = t;
            break;
        }
        s = std::move(next);
        if (t > burn_in) rows.insert(rows.end(), s.begin(), s.end());
    }
    sim.path = Matrix(rows.size() / n, n);
    sim.path.data = std::move(rows);
    return sim;
}

/// Fraction of `runs` paths (seeds base_seed + i) that diverge.
inline double divergence_rate(const ProcessSpec& spec, std::size_t steps, std::size_t burn_in, std::uint64_t base_seed,
                              std::size_t runs) {
    if (runs == 0) throw ArgumentError("divergence_rate: runs must be positive");
    std::size_t diverged = 0;
    for (std::size_t i = 0; i < runs; ++i) diverged += simulate_tprnp(spec, steps, burn_in, base_seed + i).diverged;
    return static_cast<double>(diverged) / static_cast<double>(runs);
}

/// i.i.d. N(0, sigma^2) entries on n^(p+1) followed by cyclic symmetrization.
inline SymTensor sample_subgaussian_M(std::size_t n, std::size_t p, double sigma, std::uint64_t seed) {
    if (!(sigma > 0.0)) throw ArgumentError("sample_subgaussian_M: sigma must be positive");
    if (n == 0 || p == 0) throw ArgumentError("sample_subgaussian_M: n and p must be positive");
    std::vector<std::size_t> dims(p + 1, n);
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, sigma);
    std::vector<double> data(total);
    for (double& v : data) v = normal(rng);
    return symmetrize_first_p(SymTensor(dims, std::move(data), 0), p, SymmetrizeMode::Cyclic);
}

inline Vector path_column(const Matrix& path, std::size_t col) {
    if (col >= path.cols) throw ArgumentError("path_column: column out of range");
    Vector out(path.rows);
    for (std::size_t r = 0; r < path.rows; ++r) out[r] = path(r, col);
    return out;
}

/// Biased estimator gamma(k) = (1/T) sum_t (s_t - mean)(s_{t+k} - mean), k = 0..max_lag.
inline Vector autocovariance(std::span<const double> s, std::size_t max_lag) {
    const std::size_t t = s.size();
    if (t <= 10 * max_lag || t == 0)
        throw ArgumentError("autocovariance: series length " + std::to_string(t) + " must exceed 10 * max_lag = " +
                            std::to_string(10 * max_lag));
    double mean = 0.0;
    for (double v : s) mean += v;
    mean /= static_cast<double>(t);
    Vector d(t);
    for (std::size_t i = 0; i < t; ++i) d[i] = s[i] - mean;
    Vector gamma(max_lag + 1);
    for (std::size_t k = 0; k <= max_lag; ++k) {
        double acc = 0.0;
        for (std::size_t i = 0; i + k < t; ++i) acc += d[i] * d[i + k];
        gamma[k] = acc / static_cast<double>(t);
    }
    return gamma;
}

/// Rescaled-range Hurst estimate: mean R/S over non-overlapping blocks of
/// size 16, 32, ... up to T/4, then the slope of log(R/S) on log(size).
inline double hurst_rs(std::span<const double> s) {
    const std::size_t t = s.size();
    if (t < 64) throw ArgumentError("hurst_rs: series needs at least 64 points");
    std::vector<double> xs, ys;
    for (std::size_t size = 16; size <= t / 4; size *= 2) {
        double sum_rs = 0.0;
        std::size_t blocks = 0;
        for (std::size_t start = 0; start + size <= t; start += size) {
            double mean = 0.0;
            for (std::size_t i = 0; i < size; ++i) mean += s[start + i];
            mean /= static_cast<double>(size);
            double z = 0.0, lo = 0.0, hi = 0.0, ss = 0.0;
            for (std::size_t i = 0; i < size; ++i) {
                const double dv = s[start + i] - mean;
                z += dv;
                lo = std::min(lo, z);
                hi = std::max(hi, z);
                ss += dv * dv;
            }
            const double sd = std::sqrt(ss / static_cast<double>(size));
            if (sd > 0.0) {
                sum_rs += (hi - lo) / sd;
                ++blocks;
            }
        }
        if (blocks > 0) {
            xs.push_back(std::log(static_cast<double>(size)));
            ys.push_back(std::log(sum_rs / static_cast<double>(blocks)));
        }
    }
    if (xs.size() < 2) return std::numeric_limits<double>::quiet_NaN();
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += xs[i];
        my += ys[i];
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0.0, sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        sxy += (xs[i] - mx) * (ys[i] - my);
        sxx += (xs[i] - mx) * (xs[i] - mx);
    }
    return sxy / sxx;
}

enum class MemoryVerdict { ShortMemory, LongMemory, Inconclusive };

inline const char* to_string(MemoryVerdict v) {
    switch (v) {
    case MemoryVerdict::ShortMemory: return "short-memory-consistent";
    case MemoryVerdict::LongMemory: return "long-memory-consistent";
    case MemoryVerdict::Inconclusive: return "inconclusive";
    }
    return "?";
}

/// Heuristic thresholds. The plateau test looks at the cumulative sum of
/// |gamma(k)| in excess of a white-noise band z * gamma(0) / sqrt(T); a
/// relative increase below `plateau_tol` over the last `tail_lags` lags
/// counts as a plateau. noise_band_z = 0 uses the raw sums.
struct MemoryConfig {
    std::size_t max_lag = 100;
    std::size_t tail_lags = 10;
    double plateau_tol = 0.01;
    double noise_band_z = 1.96;
    double short_hurst_max = 0.6;
    double long_hurst_min = 0.65;
};

struct MemoryReport {
    Vector autocov;
    Vector partial_sums;  // cumulative sum of |gamma(k)|
    double hurst = 0.0;
    bool plateau = false;
    MemoryVerdict verdict = MemoryVerdict::Inconclusive;
    double divergence_rate = 0.0;
};

inline MemoryReport memory_diagnostic(std::span<const double> s, const MemoryConfig& cfg = {}) {
    if (!all_finite(s))
        throw NumericError("memory_diagnostic: series is non-finite; for diverging simulations consult divergence_rate "
                           "of the batch run instead");
    if (cfg.tail_lags == 0 || cfg.tail_lags > cfg.max_lag)
        throw ArgumentError("memory_diagnostic: tail_lags must lie in [1, max_lag]");
    MemoryReport rep;
    rep.autocov = autocovariance(s, cfg.max_lag);
    rep.partial_sums.resize(rep.autocov.size());
    const double band = cfg.noise_band_z * rep.autocov[0] / std::sqrt(static_cast<double>(s.size()));
    Vector excess(rep.autocov.size());
    double raw = 0.0, ex = 0.0;
    for (std::size_t k = 0; k < rep.autocov.size(); ++k) {
        const double a = std::abs(rep.autocov[k]);
        raw += a;
        ex += k == 0 ? a : std::max(0.0, a - band);
        rep.partial_sums[k] = raw;
        excess[k] = ex;
    }
    const double last = excess.back();
    const double before = excess[excess.size() - 1 - cfg.tail_lags];
    rep.plateau = last == 0.0 || (last - before) / last < cfg.plateau_tol;
    rep.hurst = hurst_rs(s);
    if (rep.plateau && rep.hurst < cfg.short_hurst_max)
        rep.verdict = MemoryVerdict::ShortMemory;
    else if (!rep.plateau && rep.hurst > cfg.long_hurst_min)
        rep.verdict = MemoryVerdict::LongMemory;
    else
        rep.verdict = MemoryVerdict::Inconclusive;
    return rep;
}

struct Lemma1Report {
    double norm_estimate = 0.0;
    bool applicable = false;  // norm < 1
    std::optional<MemoryVerdict> verdict;
    bool agreement = true;  // verdict is short memory whenever applicable
    bool diverged = false;
    std::string message;
};

struct Lemma1Options {
    std::size_t steps = 100000;
    std::size_t burn_in = 1000;
    std::uint64_t seed = 0;
    std::size_t coordinate = 0;
    MemoryConfig memory;
    SpectralNormOptions norm;
};

/// When the spectral norm estimate of M is below 1, simulates the process
/// and checks that coordinate `coordinate` looks short-memory. Norms >= 1
/// produce no assertion.
inline Lemma1Report lemma1_check(const ProcessSpec& spec, const Lemma1Options& opt = {}) {
    spec.validate();
    Lemma1Report rep;
    rep.norm_estimate = spectral_norm(spec.m, opt.norm).value;
    rep.applicable = rep.norm_estimate < 1.0;
    if (!rep.applicable) {
        rep.message = "short-memory criterion inapplicable: spectral norm estimate " + std::to_string(rep.norm_estimate) + " >= 1";
        return rep;
    }
    const auto sim = simulate_tprnp(spec, opt.steps, opt.burn_in, opt.seed);
    if (sim.diverged) {
        rep.diverged = true;
        rep.agreement = false;
        rep.message = "simulation diverged at step " + std::to_string(sim.divergence_step);
        return rep;
    }
    const auto mem = memory_diagnostic(path_column(sim.path, opt.coordinate), opt.memory);
    rep.verdict = mem.verdict;
    rep.agreement = mem.verdict == MemoryVerdict::ShortMemory;
    rep.message = std::string("norm < 1, verdict ") + to_string(mem.verdict);
    return rep;
}

}  // namespace tprec
