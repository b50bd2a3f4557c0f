#pragma once

#include "tprec/errors.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace tprec {

using Vector = std::vector<double>;

/// Dense row-major real matrix. Sized for desk-scale problems; no expression
/// templates, no aliasing tricks.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c, double fill = 0.0) : rows(r), cols(c), data(r * c, fill) {}

    static Matrix identity(std::size_t n) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
        return m;
    }

    double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

    std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }
    std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }

    bool operator==(const Matrix&) const = default;
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    assert(a.size() == b.size());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline bool all_finite(std::span<const double> a) {
    return std::all_of(a.begin(), a.end(), [](double v) { return std::isfinite(v); });
}

/// y += alpha * x
inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    assert(x.size() == y.size());
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += alpha * x[i];
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
    assert(a.cols == x.size());
    Vector y(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) y[i] = dot(a.row(i), x);
    return y;
}

/// y += A x
inline void matvec_add(const Matrix& a, std::span<const double> x, std::span<double> y) {
    assert(a.cols == x.size() && a.rows == y.size());
    for (std::size_t i = 0; i < a.rows; ++i) y[i] += dot(a.row(i), x);
}

/// y += A^T g
inline void matvec_t_add(const Matrix& a, std::span<const double> g, std::span<double> y) {
    assert(a.rows == g.size() && a.cols == y.size());
    for (std::size_t i = 0; i < a.rows; ++i) {
        if (g[i] == 0.0) continue;
        const auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) y[j] += g[i] * r[j];
    }
}

/// A += g x^T
inline void outer_add(std::span<const double> g, std::span<const double> x, Matrix& a) {
    assert(a.rows == g.size() && a.cols == x.size());
    for (std::size_t i = 0; i < a.rows; ++i) {
        if (g[i] == 0.0) continue;
        auto r = a.row(i);
        for (std::size_t j = 0; j < a.cols; ++j) r[j] += g[i] * x[j];
    }
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols, a.rows);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
    return t;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
    assert(a.cols == b.rows);
    Matrix c(a.rows, b.cols);
    for (std::size_t i = 0; i < a.rows; ++i)
        for (std::size_t k = 0; k < a.cols; ++k) {
            const double aik = a(i, k);
            if (aik == 0.0) continue;
            for (std::size_t j = 0; j < b.cols; ++j) c(i, j) += aik * b(k, j);
        }
    return c;
}

inline double frobenius(const Matrix& a) { return norm2(a.data); }

struct SymmetricEigen {
    Vector values;  // descending
    Matrix vectors; // column k pairs with values[k]
    int sweeps = 0;
};

/// Cyclic Jacobi eigensolver for a real symmetric matrix. Only the upper
/// triangle is read.
inline SymmetricEigen symmetric_eigen(Matrix s, int max_sweeps = 100) {
    if (s.rows != s.cols) throw ShapeError("symmetric_eigen: matrix is not square");
    const std::size_t n = s.rows;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) s(j, i) = s(i, j);
    Matrix v = Matrix::identity(n);
    int sweep = 0;
    for (; sweep < max_sweeps; ++sweep) {
        double off = 0.0;
        double total = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) {
                total += s(i, j) * s(i, j);
                if (i != j) off += s(i, j) * s(i, j);
            }
        if (off <= 1e-30 * std::max(total, 1e-300)) break;
        for (std::size_t p = 0; p + 1 < n; ++p)
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = s(p, q);
                if (apq == 0.0) continue;
                const double theta = (s(q, q) - s(p, p)) / (2.0 * apq);
                const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double sn = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double skp = s(k, p);
                    const double skq = s(k, q);
                    s(k, p) = c * skp - sn * skq;
                    s(k, q) = sn * skp + c * skq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double spk = s(p, k);
                    const double sqk = s(q, k);
                    s(p, k) = c * spk - sn * sqk;
                    s(q, k) = sn * spk + c * sqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v(k, p);
                    const double vkq = v(k, q);
                    v(k, p) = c * vkp - sn * vkq;
                    v(k, q) = sn * vkp + c * vkq;
                }
            }
    }
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return s(a, a) > s(b, b); });
    SymmetricEigen out;
    out.values.resize(n);
    out.vectors = Matrix(n, n);
    out.sweeps = sweep;
    for (std::size_t k = 0; k < n; ++k) {
        out.values[k] = s(order[k], order[k]);
        for (std::size_t i = 0; i < n; ++i) out.vectors(i, k) = v(i, order[k]);
    }
    return out;
}

struct SingularTriplet {
    double sigma = 0.0;
    Vector left;   // unit, length rows
    Vector right;  // unit, length cols
    int sweeps = 0;
};

/// Largest singular value with its singular vectors, through the Jacobi
/// eigensolver on the smaller Gram matrix. Exact up to rounding.
inline SingularTriplet top_singular(const Matrix& a) {
    SingularTriplet out;
    out.left.assign(a.rows, 0.0);
    out.right.assign(a.cols, 0.0);
    if (a.rows == 0 || a.cols == 0) return out;
    const bool use_cols = a.cols <= a.rows;
    const Matrix gram = use_cols ? matmul(transpose(a), a) : matmul(a, transpose(a));
    const auto eig = symmetric_eigen(gram);
    Vector top(gram.rows);
    for (std::size_t i = 0; i < gram.rows; ++i) top[i] = eig.vectors(i, 0);
    out.sweeps = eig.sweeps;
    if (use_cols) {
        out.right = top;
        out.left = matvec(a, out.right);
    } else {
        out.left = top;
        out.right = matvec(transpose(a), out.left);
    }
    Vector& other = use_cols ? out.left : out.right;
    const double nrm = norm2(other);
    out.sigma = nrm;
    if (nrm > 0.0) {
        for (double& x : other) x /= nrm;
    } else {
        other.assign(other.size(), 0.0);
        other[0] = 1.0;
    }
    return out;
}

/// Matrix operator 2-norm.
inline double operator_norm(const Matrix& a) { return top_singular(a).sigma; }

}  // namespace tprec
