#pragma once

#include "tprec/errors.hpp"
#include "tprec/linalg.hpp"

#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <system_error>
#include <vector>

namespace tprec {

/// Per-channel z-score statistics.
struct NormStats {
    Vector mean;
    Vector std;

    [[nodiscard]] double normalize(double v, std::size_t ch) const { return (v - mean[ch]) / std[ch]; }
    [[nodiscard]] double denormalize(double v, std::size_t ch) const { return v * std[ch] + mean[ch]; }

    static NormStats identity(std::size_t channels) { return {Vector(channels, 0.0), Vector(channels, 1.0)}; }

    bool operator==(const NormStats&) const = default;
};

/// A T x l series split chronologically into train [0, train_end),
/// validation [train_end, val_end) and test [val_end, T). `values` holds the
/// normalized series, `raw` the original units.
struct SeriesDataset {
    Matrix raw;
    Matrix values;
    std::size_t train_end = 0;
    std::size_t val_end = 0;
    NormStats norm_stats;
    std::string provenance;

    [[nodiscard]] std::size_t length() const noexcept { return values.rows; }
    [[nodiscard]] std::size_t channels() const noexcept { return values.cols; }
};

struct SplitFractions {
    double train = 0.6;
    double val = 0.2;
};

enum class NormMethod { ZScore, None };

/// Chronological split with statistics from the training split only.
inline SeriesDataset split_and_normalize(const Matrix& values, SplitFractions fractions = {},
                                         NormMethod method = NormMethod::ZScore, std::string provenance = {}) {
    const std::size_t t = values.rows;
    if (values.cols == 0) throw ArgumentError("split_and_normalize: series has no channels");
    if (!(fractions.train > 0.0) || !(fractions.val >= 0.0) || !(fractions.train + fractions.val < 1.0))
        throw ArgumentError("split_and_normalize: fractions must be positive and leave a nonempty test split");
    const auto train_end = static_cast<std::size_t>(std::floor(fractions.train * static_cast<double>(t) + 1e-9));
    const auto val_end =
        static_cast<std::size_t>(std::floor((fractions.train + fractions.val) * static_cast<double>(t) + 1e-9));
    if (!(0 < train_end && train_end < val_end && val_end < t))
        throw ArgumentError("split_and_normalize: series of length " + std::to_string(t) +
                            " is too short for the requested split");
    if (!all_finite(values.data)) throw NumericError("split_and_normalize: series has non-finite values");

    SeriesDataset ds;
    ds.raw = values;
    ds.train_end = train_end;
    ds.val_end = val_end;
    ds.provenance = std::move(provenance);
    const std::size_t l = values.cols;
    if (method == NormMethod::None) {
        ds.norm_stats = NormStats::identity(l);
    } else {
        ds.norm_stats.mean.assign(l, 0.0);
        ds.norm_stats.std.assign(l, 0.0);
        for (std::size_t c = 0; c < l; ++c) {
            double s = 0.0;
            for (std::size_t i = 0; i < train_end; ++i) s += values(i, c);
            const double mean = s / static_cast<double>(train_end);
            double ss = 0.0;
            for (std::size_t i = 0; i < train_end; ++i) ss += (values(i, c) - mean) * (values(i, c) - mean);
            const double sd = std::sqrt(ss / static_cast<double>(train_end));
            if (!(sd > 0.0))
                throw ArgumentError("split_and_normalize: channel " + std::to_string(c) +
                                    " is constant on the training split (std = 0)");
            ds.norm_stats.mean[c] = mean;
            ds.norm_stats.std[c] = sd;
        }
    }
    ds.values = Matrix(t, l);
    for (std::size_t i = 0; i < t; ++i)
        for (std::size_t c = 0; c < l; ++c) ds.values(i, c) = ds.norm_stats.normalize(values(i, c), c);
    return ds;
}

inline Matrix column(std::span<const double> v) {
    Matrix m(v.size(), 1);
    std::copy(v.begin(), v.end(), m.data.begin());
    return m;
}

// ---------------------------------------------------------------------------
// ARFIMA(0, d, 0)

struct ArfimaSpec {
    double d = 0.4;
    std::size_t length = 2000;
    double sigma = 1.0;
    std::size_t truncation = 1000;
    std::uint64_t seed = 0;
};

/// MA(inf) weights psi_0 = 1, psi_j = psi_{j-1} (j - 1 + d) / j, j <= truncation.
inline Vector arfima_coefficients(double d, std::size_t truncation) {
    Vector psi(truncation + 1);
    psi[0] = 1.0;
    for (std::size_t j = 1; j <= truncation; ++j)
        psi[j] = psi[j - 1] * (static_cast<double>(j) - 1.0 + d) / static_cast<double>(j);
    return psi;
}

/// x_t = sum_{j=0}^{K} psi_j eps_{t-j} with Gaussian innovations.
inline Vector arfima_series(const ArfimaSpec& spec) {
    if (!(std::abs(spec.d) < 0.5)) throw DomainError("gen_arfima: |d| must be below 0.5");
    if (spec.length == 0) throw ArgumentError("gen_arfima: length must be positive");
    if (!(spec.sigma > 0.0)) throw ArgumentError("gen_arfima: sigma must be positive");
    const Vector psi = arfima_coefficients(spec.d, spec.truncation);
    const std::size_t k = spec.truncation;
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> normal(0.0, spec.sigma);
    Vector eps(spec.length + k);
    for (double& e : eps) e = normal(rng);
    Vector x(spec.length, 0.0);
    for (std::size_t t = 0; t < spec.length; ++t) {
        double s = 0.0;
        const double* base = eps.data() + t + k;
        for (std::size_t j = 0; j <= k; ++j) s += psi[j] * *(base - j);
        x[t] = s;
    }
    return x;
}

inline SeriesDataset gen_arfima(const ArfimaSpec& spec, SplitFractions fractions = {}) {
    std::ostringstream prov;
    prov << "arfima(d=" << spec.d << ",T=" << spec.length << ",sigma=" << spec.sigma << ",truncation=" << spec.truncation
         << ",seed=" << spec.seed << ")";
    return split_and_normalize(column(arfima_series(spec)), fractions, NormMethod::ZScore, prov.str());
}

// ---------------------------------------------------------------------------
// Genz test functions, one-dimensional

enum class GenzFamily { Oscillatory, ProductPeak, CornerPeak, Gaussian, Continuous, Discontinuous };

inline GenzFamily genz_family_from_string(const std::string& s) {
    if (s == "oscillatory") return GenzFamily::Oscillatory;
    if (s == "product-peak") return GenzFamily::ProductPeak;
    if (s == "corner-peak") return GenzFamily::CornerPeak;
    if (s == "gaussian") return GenzFamily::Gaussian;
    if (s == "continuous") return GenzFamily::Continuous;
    if (s == "discontinuous") return GenzFamily::Discontinuous;
    throw ArgumentError("unknown Genz family '" + s + "'");
}

struct GenzSpec {
    GenzFamily family = GenzFamily::Oscillatory;
    double w = 0.0;  // shift
    double c = 1.0;  // shape
    Vector grid;
};

inline Vector uniform_grid(double start, double stop, std::size_t count) {
    if (count < 2) throw ArgumentError("uniform_grid: need at least two points");
    Vector g(count);
    for (std::size_t i = 0; i < count; ++i)
        g[i] = start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1);
    return g;
}

inline double genz_value(GenzFamily family, double x, double w, double c) {
    switch (family) {
    case GenzFamily::Oscillatory: return std::cos(2.0 * std::numbers::pi * w + c * x);
    case GenzFamily::ProductPeak: return 1.0 / (1.0 / (c * c) + (x - w) * (x - w));
    case GenzFamily::CornerPeak: return std::pow(1.0 + c * x, -2.0);
    case GenzFamily::Gaussian: return std::exp(-c * c * (x - w) * (x - w));
    case GenzFamily::Continuous: return std::exp(-c * std::abs(x - w));
    case GenzFamily::Discontinuous: return x > w ? 0.0 : std::exp(c * x);
    }
    throw ArgumentError("unknown Genz family");
}

inline Vector genz_series(const GenzSpec& spec) {
    if (spec.grid.empty()) throw ArgumentError("gen_genz: grid is empty");
    if (!std::isfinite(spec.w) || !std::isfinite(spec.c)) throw ArgumentError("gen_genz: parameters must be finite");
    for (std::size_t i = 1; i < spec.grid.size(); ++i)
        if (!(spec.grid[i] > spec.grid[i - 1])) throw ArgumentError("gen_genz: grid must be strictly increasing");
    Vector out(spec.grid.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = genz_value(spec.family, spec.grid[i], spec.w, spec.c);
    return out;
}

inline SeriesDataset gen_genz(const GenzSpec& spec, SplitFractions fractions = {}) {
    std::ostringstream prov;
    prov << "genz(family=" << static_cast<int>(spec.family) << ",w=" << spec.w << ",c=" << spec.c
         << ",points=" << spec.grid.size() << ")";
    return split_and_normalize(column(genz_series(spec)), fractions, NormMethod::ZScore, prov.str());
}

// ---------------------------------------------------------------------------
// CSV

struct CsvOptions {
    /// Column names or zero-based indices; empty selects every non-timestamp column.
    std::vector<std::string> value_columns;
    std::optional<std::string> timestamp_column;
};

struct CsvTable {
    std::vector<std::string> names;
    Matrix values;
};

namespace detail {

/// Splits one RFC-4180 record. Quoted fields may contain commas and doubled quotes.
inline std::vector<std::string> split_csv_line(const std::string& line, std::size_t line_no) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char ch = line[i];
        if (quoted) {
            if (ch == '"') {
                if (i + 1 < line.size() && line[i + 1] == '"') {
                    cur.push_back('"');
                    ++i;
                } else {
                    quoted = false;
                }
            } else {
                cur.push_back(ch);
            }
        } else if (ch == '"') {
            quoted = true;
        } else if (ch == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    if (quoted) throw ParseError("unterminated quoted field", line_no, line.size());
    fields.push_back(std::move(cur));
    return fields;
}

inline std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

inline CsvTable load_csv(const std::filesystem::path& path, const CsvOptions& opt = {}) {
    std::ifstream in(path);
    if (!in) throw ArgumentError("load_csv: cannot open '" + path.string() + "'");
    std::string line;
    if (!std::getline(in, line)) throw ParseError("missing header row", 1, 1);
    const auto header = detail::split_csv_line(line, 1);
    std::vector<std::string> names;
    for (const auto& h : header) names.push_back(detail::trim(h));

    std::optional<std::size_t> ts_index;
    if (opt.timestamp_column) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (names[i] == *opt.timestamp_column) ts_index = i;
        if (!ts_index) throw ArgumentError("load_csv: timestamp column '" + *opt.timestamp_column + "' not found");
    }
    std::vector<std::size_t> selected;
    if (opt.value_columns.empty()) {
        for (std::size_t i = 0; i < names.size(); ++i)
            if (i != ts_index) selected.push_back(i);
    } else {
        for (const auto& want : opt.value_columns) {
            std::optional<std::size_t> hit;
            for (std::size_t i = 0; i < names.size(); ++i)
                if (names[i] == want) hit = i;
            if (!hit) {
                std::size_t idx = 0;
                const auto r = std::from_chars(want.data(), want.data() + want.size(), idx);
                if (r.ec == std::errc() && r.ptr == want.data() + want.size() && idx < names.size()) hit = idx;
            }
            if (!hit) throw ArgumentError("load_csv: value column '" + want + "' not found");
            selected.push_back(*hit);
        }
    }
    if (selected.empty()) throw ArgumentError("load_csv: no value columns selected");

    CsvTable table;
    for (auto i : selected) table.names.push_back(names[i]);
    std::vector<double> flat;
    std::size_t rows = 0;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::trim(line).empty()) continue;
        const auto fields = detail::split_csv_line(line, line_no);
        if (fields.size() != names.size())
            throw ParseError("expected " + std::to_string(names.size()) + " fields, found " + std::to_string(fields.size()),
                             line_no, 1);
        for (auto i : selected) {
            const std::string cell = detail::trim(fields[i]);
            double v = 0.0;
            const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
            if (cell.empty() || r.ec != std::errc() || r.ptr != cell.data() + cell.size())
                throw ParseError("non-numeric value '" + cell + "' in column '" + names[i] + "'", line_no, i + 1);
            flat.push_back(v);
        }
        ++rows;
    }
    if (rows == 0) throw ParseError("no data rows", line_no, 1);
    table.values = Matrix(rows, selected.size());
    table.values.data = std::move(flat);
    return table;
}

/// Writes a header row and one line per matrix row; values use the shortest
/// round-trip decimal form.
inline void write_csv(std::ostream& out, const std::vector<std::string>& names, const Matrix& values) {
    if (names.size() != values.cols) throw ShapeError("write_csv: one name per column is required");
    for (std::size_t c = 0; c < names.size(); ++c) out << (c ? "," : "") << names[c];
    out << '\n';
    for (std::size_t r = 0; r < values.rows; ++r) {
        for (std::size_t c = 0; c < values.cols; ++c) out << (c ? "," : "") << detail::format_double(values(r, c));
        out << '\n';
    }
}

}  // namespace tprec
