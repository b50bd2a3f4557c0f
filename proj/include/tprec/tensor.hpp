#pragma once

#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"

#include <json.hpp>

#include <algorithm>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

namespace tprec {

/// How the leading `sym_prefix` indices of a SymTensor relate.
enum class Symmetry {
    Full,    // invariant under every permutation of the prefix
    Cyclic,  // invariant under rotations of the prefix only
};

/// Dense row-major tensor of shape n x ... x n x m whose first `sym_prefix`
/// indices are mutually symmetric. The symmetry is verified exactly on
/// construction.
///
/// `mutable_data()` hands out raw storage for optimizers and finite-difference
/// probes; callers that write through it own the symmetry invariant and can
/// re-check it with `is_symmetric()`.
class SymTensor {
public:
    SymTensor() = default;

    SymTensor(std::vector<std::size_t> dims, std::vector<double> data, std::size_t sym_prefix = 0,
              Symmetry kind = Symmetry::Full)
        : dims_(std::move(dims)), data_(std::move(data)), sym_prefix_(sym_prefix), kind_(kind) {
        validate_shape();
        if (!is_symmetric())
            throw ArgumentError("SymTensor: data is not symmetric over the first " + std::to_string(sym_prefix_) +
                                " indices");
    }

    static SymTensor zeros(std::vector<std::size_t> dims, std::size_t sym_prefix = 0,
                           Symmetry kind = Symmetry::Full) {
        std::size_t n = 1;
        for (auto d : dims) n *= d;
        return SymTensor(std::move(dims), std::vector<double>(n, 0.0), sym_prefix, kind);
    }

    /// Wraps a matrix as a 2-index tensor (rows x cols).
    static SymTensor from_matrix(const Matrix& m) { return SymTensor({m.rows, m.cols}, m.data, 0); }

    [[nodiscard]] const std::vector<std::size_t>& dims() const noexcept { return dims_; }
    [[nodiscard]] std::size_t order() const noexcept { return dims_.size(); }
    [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
    [[nodiscard]] std::size_t sym_prefix() const noexcept { return sym_prefix_; }
    [[nodiscard]] Symmetry symmetry() const noexcept { return kind_; }
    [[nodiscard]] bool fully_symmetric() const noexcept { return sym_prefix_ < 2 || kind_ == Symmetry::Full; }
    [[nodiscard]] std::span<const double> data() const noexcept { return data_; }
    [[nodiscard]] std::span<double> mutable_data() noexcept { return data_; }

    [[nodiscard]] std::size_t offset(std::span<const std::size_t> idx) const {
        std::size_t off = 0;
        for (std::size_t k = 0; k < dims_.size(); ++k) off = off * dims_[k] + idx[k];
        return off;
    }
    [[nodiscard]] double at(std::span<const std::size_t> idx) const { return data_[offset(idx)]; }
    [[nodiscard]] double at(std::initializer_list<std::size_t> idx) const {
        return at(std::span<const std::size_t>(idx.begin(), idx.size()));
    }

    /// Exact check of the declared symmetry: adjacent transpositions generate
    /// the full group, one rotation generates the cyclic one.
    [[nodiscard]] bool is_symmetric() const {
        if (sym_prefix_ < 2) return true;
        std::vector<std::size_t> idx(dims_.size(), 0);
        std::vector<std::size_t> moved(dims_.size());
        for (std::size_t flat = 0; flat < data_.size(); ++flat) {
            unravel(flat, idx);
            if (kind_ == Symmetry::Full) {
                for (std::size_t k = 0; k + 1 < sym_prefix_; ++k) {
                    moved = idx;
                    std::swap(moved[k], moved[k + 1]);
                    if (data_[offset(moved)] != data_[flat]) return false;
                }
            } else {
                moved = idx;
                std::rotate(moved.begin(), moved.begin() + 1, moved.begin() + static_cast<long>(sym_prefix_));
                if (data_[offset(moved)] != data_[flat]) return false;
            }
        }
        return true;
    }

    void unravel(std::size_t flat, std::span<std::size_t> idx) const {
        for (std::size_t k = dims_.size(); k-- > 0;) {
            idx[k] = flat % dims_[k];
            flat /= dims_[k];
        }
    }

    SymTensor scaled(double c) const {
        SymTensor out = *this;
        for (double& v : out.data_) v *= c;
        return out;
    }

    bool operator==(const SymTensor&) const = default;

private:
    void validate_shape() const {
        if (dims_.empty()) throw ShapeError("SymTensor: at least one index is required");
        std::size_t n = 1;
        for (std::size_t k = 0; k < dims_.size(); ++k) {
            if (dims_[k] == 0) throw ShapeError("SymTensor: zero-length dimension", k);
            n *= dims_[k];
        }
        if (n != data_.size())
            throw ShapeError("SymTensor: data length " + std::to_string(data_.size()) + " does not match dims product " +
                             std::to_string(n));
        if (sym_prefix_ > dims_.size())
            throw ShapeError("SymTensor: sym_prefix exceeds the number of indices");
        for (std::size_t k = 1; k < sym_prefix_; ++k)
            if (dims_[k] != dims_[0]) throw ShapeError("SymTensor: symmetric indices must share a dimension", k);
    }

    std::vector<std::size_t> dims_;
    std::vector<double> data_;
    std::size_t sym_prefix_ = 0;
    Symmetry kind_ = Symmetry::Full;
};

namespace detail {

/// Contracts mode `mode` of the tensor (dims, data) with `v`.
inline std::vector<double> contract_mode(std::span<const std::size_t> dims, std::span<const double> data,
                                         std::size_t mode, std::span<const double> v) {
    std::size_t outer = 1;
    for (std::size_t k = 0; k < mode; ++k) outer *= dims[k];
    std::size_t inner = 1;
    for (std::size_t k = mode + 1; k < dims.size(); ++k) inner *= dims[k];
    const std::size_t len = dims[mode];
    std::vector<double> out(outer * inner, 0.0);
    for (std::size_t o = 0; o < outer; ++o)
        for (std::size_t i = 0; i < len; ++i) {
            const double w = v[i];
            if (w == 0.0) continue;
            const double* src = data.data() + (o * len + i) * inner;
            double* dst = out.data() + o * inner;
            for (std::size_t r = 0; r < inner; ++r) dst[r] += w * src[r];
        }
    return out;
}

inline constexpr std::size_t kNoMode = static_cast<std::size_t>(-1);

/// Contracts every mode of `g` except `keep` with the matching vector of
/// `vecs`. Pass kNoMode to contract all modes (the result has one entry).
inline std::vector<double> contract_modes(const SymTensor& g, std::span<const Vector> vecs, std::size_t keep) {
    std::vector<std::size_t> dims = g.dims();
    std::vector<double> cur(g.data().begin(), g.data().end());
    for (std::size_t k = dims.size(); k-- > 0;) {
        if (k == keep) continue;
        cur = contract_mode(dims, cur, k, vecs[k]);
        dims.erase(dims.begin() + static_cast<long>(k));
    }
    return cur;
}

}  // namespace detail

/// G . z^{(x)p}: contracts modes 1..p of a (p+1)-index tensor with z, leaving a
/// vector over the last index.
inline Vector tp_contract(const SymTensor& g, std::span<const double> z, std::size_t p) {
    if (p == 0) throw ArgumentError("tp_contract: degree must be positive");
    if (g.order() != p + 1)
        throw ShapeError("tp_contract: tensor has " + std::to_string(g.order()) + " indices, degree " +
                         std::to_string(p) + " needs " + std::to_string(p + 1));
    for (std::size_t k = 0; k < p; ++k)
        if (g.dims()[k] != z.size())
            throw ShapeError("tp_contract: dimension " + std::to_string(g.dims()[k]) + " does not match vector length " +
                                 std::to_string(z.size()),
                             k);
    std::vector<std::size_t> dims = g.dims();
    std::vector<double> cur(g.data().begin(), g.data().end());
    while (dims.size() > 1) {
        cur = detail::contract_mode(dims, cur, 0, z);
        dims.erase(dims.begin());
    }
    return cur;
}

/// Full multilinear form G x_1 u_1 ... x_q u_q.
inline double contract_all(const SymTensor& g, std::span<const Vector> us) {
    if (us.size() != g.order()) throw ShapeError("contract_all: need one vector per mode");
    for (std::size_t k = 0; k < us.size(); ++k)
        if (us[k].size() != g.dims()[k]) throw ShapeError("contract_all: vector length mismatch", k);
    return detail::contract_modes(g, us, detail::kNoMode)[0];
}

/// The vector G x_{i != keep} u_i.
inline Vector contract_all_but(const SymTensor& g, std::span<const Vector> us, std::size_t keep) {
    return detail::contract_modes(g, us, keep);
}

namespace detail {

/// Visits every multi-index of `dims` in row-major order.
inline void for_each_index(std::span<const std::size_t> dims, const std::function<void(std::span<const std::size_t>, std::size_t)>& f) {
    std::size_t total = 1;
    for (auto d : dims) total *= d;
    std::vector<std::size_t> idx(dims.size(), 0);
    for (std::size_t flat = 0; flat < total; ++flat) {
        f(idx, flat);
        for (std::size_t k = dims.size(); k-- > 0;) {
            if (++idx[k] < dims[k]) break;
            idx[k] = 0;
        }
    }
}

}  // namespace detail

/// G = sum_r out_weights[r] (x) w_r^{(x)p}, i.e. G_j = sum_r out_weights[r][j] w_r^{(x)p}.
/// Every entry is evaluated on the sorted index tuple so permuted entries are
/// bitwise equal.
inline SymTensor build_from_factors(std::span<const Vector> factors, std::span<const Vector> out_weights,
                                    std::size_t p) {
    if (factors.empty()) throw ArgumentError("build_from_factors: factor list is empty");
    if (p == 0) throw ArgumentError("build_from_factors: degree must be positive");
    if (out_weights.size() != factors.size())
        throw ShapeError("build_from_factors: need one output weight vector per factor");
    const std::size_t n = factors[0].size();
    const std::size_t m = out_weights[0].size();
    if (n == 0 || m == 0) throw ShapeError("build_from_factors: empty factor");
    for (std::size_t r = 0; r < factors.size(); ++r) {
        if (factors[r].size() != n) throw ShapeError("build_from_factors: factor " + std::to_string(r) + " has wrong length");
        if (out_weights[r].size() != m)
            throw ShapeError("build_from_factors: output weight " + std::to_string(r) + " has wrong length");
    }
    std::vector<std::size_t> dims(p, n);
    dims.push_back(m);
    std::vector<double> data;
    {
        std::size_t total = 1;
        for (auto d : dims) total *= d;
        data.assign(total, 0.0);
    }
    std::vector<std::size_t> sorted(p);
    detail::for_each_index(dims, [&](std::span<const std::size_t> idx, std::size_t flat) {
        std::copy(idx.begin(), idx.begin() + static_cast<long>(p), sorted.begin());
        std::sort(sorted.begin(), sorted.end());
        const std::size_t j = idx[p];
        double s = 0.0;
        for (std::size_t r = 0; r < factors.size(); ++r) {
            double prod = out_weights[r][j];
            for (auto i : sorted) prod *= factors[r][i];
            s += prod;
        }
        data[flat] = s;
    });
    return SymTensor(std::move(dims), std::move(data), p, Symmetry::Full);
}

enum class SymmetrizeMode {
    Cyclic,           // average of the p rotations of the leading indices
    FullPermutation,  // average over all p! permutations
};

/// Averages A over index shifts (or all permutations) of its first p indices.
/// Entries in one orbit are computed from the orbit's canonical representative
/// so the result is exactly invariant.
inline SymTensor symmetrize_first_p(const SymTensor& a, std::size_t p, SymmetrizeMode mode = SymmetrizeMode::Cyclic) {
    if (p == 0) throw ArgumentError("symmetrize_first_p: degree must be positive");
    if (a.order() != p + 1)
        throw ShapeError("symmetrize_first_p: tensor needs exactly " + std::to_string(p + 1) + " indices");
    for (std::size_t k = 1; k < p; ++k)
        if (a.dims()[k] != a.dims()[0]) throw ShapeError("symmetrize_first_p: leading dimensions differ", k);
    std::vector<double> out(a.size(), 0.0);
    std::vector<std::size_t> canon(a.order());
    std::vector<std::size_t> perm(p);
    std::vector<std::size_t> moved(a.order());
    detail::for_each_index(a.dims(), [&](std::span<const std::size_t> idx, std::size_t flat) {
        std::copy(idx.begin(), idx.end(), canon.begin());
        double sum = 0.0;
        std::size_t count = 0;
        if (mode == SymmetrizeMode::FullPermutation) {
            std::sort(canon.begin(), canon.begin() + static_cast<long>(p));
            std::iota(perm.begin(), perm.end(), 0);
            do {
                for (std::size_t k = 0; k < p; ++k) moved[k] = canon[perm[k]];
                moved[p] = canon[p];
                sum += a.at(moved);
                ++count;
            } while (std::next_permutation(perm.begin(), perm.end()));
        } else {
            // Canonical representative: lexicographically smallest rotation.
            std::vector<std::size_t> best(idx.begin(), idx.begin() + static_cast<long>(p));
            std::vector<std::size_t> rot = best;
            for (std::size_t s = 1; s < p; ++s) {
                std::rotate(rot.begin(), rot.begin() + 1, rot.end());
                if (rot < best) best = rot;
            }
            std::copy(best.begin(), best.end(), canon.begin());
            for (std::size_t s = 0; s < p; ++s) {
                for (std::size_t k = 0; k < p; ++k) moved[k] = canon[(k + s) % p];
                moved[p] = canon[p];
                sum += a.at(moved);
                ++count;
            }
        }
        out[flat] = sum / static_cast<double>(count);
    });
    const Symmetry kind = mode == SymmetrizeMode::FullPermutation || p <= 2 ? Symmetry::Full : Symmetry::Cyclic;
    return SymTensor(a.dims(), std::move(out), p, kind);
}

// JSON: {"dims": [...], "sym_prefix": p, "symmetry": "full"|"cyclic", "data": [...]}

inline nlohmann::json to_json_value(const SymTensor& t) {
    nlohmann::json j;
    j["dims"] = t.dims();
    j["sym_prefix"] = t.sym_prefix();
    j["symmetry"] = t.symmetry() == Symmetry::Full ? "full" : "cyclic";
    j["data"] = std::vector<double>(t.data().begin(), t.data().end());
    return j;
}

inline SymTensor sym_tensor_from_json(const nlohmann::json& j) {
    try {
        auto dims = j.at("dims").get<std::vector<std::size_t>>();
        auto data = j.at("data").get<std::vector<double>>();
        const std::size_t prefix = j.value("sym_prefix", std::size_t{0});
        const std::string kind = j.value("symmetry", std::string("full"));
        if (kind != "full" && kind != "cyclic") throw ArgumentError("tensor JSON: unknown symmetry '" + kind + "'");
        return SymTensor(std::move(dims), std::move(data), prefix, kind == "full" ? Symmetry::Full : Symmetry::Cyclic);
    } catch (const nlohmann::json::exception& e) {
        throw ArgumentError(std::string("tensor JSON: ") + e.what());
    }
}

}  // namespace tprec
