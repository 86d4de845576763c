#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <ostream>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "json.hpp"

namespace incdyn {

struct AgeCurvePoint {
    double mean = 0.0;
    double std_dev = 0.0;
    std::size_t count = 0;
    double total_weight = 0.0;
};

using AgeCurves = std::map<int, AgeCurvePoint>;

/// Weighted per-age mean and population std, over all waves or one wave.
/// Uses West's incremental weighted update.
inline AgeCurves age_curves(const LogIncomePanel &panel, std::optional<int> year = std::nullopt) {
    struct Acc {
        double w = 0.0, mean = 0.0, s = 0.0;
        std::size_t n = 0;
    };
    std::map<int, Acc> acc;
    for (const auto &r : panel.records()) {
        if (year && r.year != *year) continue;
        auto &a = acc[r.age];
        ++a.n;
        if (r.weight <= 0.0) continue;
        const double w_new = a.w + r.weight;
        const double delta = r.log_income - a.mean;
        const double shift = delta * r.weight / w_new;
        a.mean += shift;
        a.s += a.w * delta * shift;
        a.w = w_new;
    }
    AgeCurves out;
    for (const auto &[age, a] : acc) {
        if (!(a.w > 0.0)) continue;
        out[age] = {a.mean, std::sqrt(std::max(0.0, a.s / a.w)), a.n, a.w};
    }
    return out;
}

struct JointHistogram {
    std::vector<int> age_edges;
    std::vector<double> income_edges;
    std::vector<std::vector<double>> mass;  ///< [age bin][income bin]
    bool normalized = false;
    double out_of_range_weight = 0.0;
    std::size_t out_of_range_count = 0;

    [[nodiscard]] double total() const {
        double t = 0.0;
        for (const auto &row : mass)
            for (double m : row) t += m;
        return t;
    }
};

/// Default income axis: 60 uniform log bins over [ln 1000, ln 200000].
inline std::vector<double> default_income_edges(std::size_t bins = 60, double lo = std::log(1000.0),
                                                double hi = std::log(200000.0)) {
    if (bins == 0 || !(hi > lo)) throw ConfigError("income bins need bins > 0 and hi > lo");
    std::vector<double> edges(bins + 1);
    for (std::size_t i = 0; i <= bins; ++i)
        edges[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(bins);
    edges.back() = hi;
    return edges;
}

/// One-year age bins [a, a+1) from lo to hi inclusive; the last bin is closed.
inline std::vector<int> default_age_edges(int lo = 15, int hi = 100) {
    if (hi < lo) throw ConfigError("age range must satisfy lo <= hi");
    std::vector<int> edges;
    for (int a = lo; a <= hi + 1; ++a) edges.push_back(a);
    return edges;
}

namespace detail {

/// Bin of x under half-open bins with a closed last bin, or -1 when outside.
template <typename T, typename U>
long bin_index(const std::vector<T> &edges, U x) {
    if (x < edges.front() || x > edges.back()) return -1;
    if (x == edges.back()) return static_cast<long>(edges.size()) - 2;
    auto it = std::upper_bound(edges.begin(), edges.end(), x);
    return static_cast<long>(it - edges.begin()) - 1;
}

template <typename T>
void require_increasing(const std::vector<T> &edges, const char *what) {
    if (edges.size() < 2) throw ConfigError(std::string(what) + " edges need at least two values");
    for (std::size_t i = 1; i < edges.size(); ++i)
        if (!(edges[i] > edges[i - 1])) throw ConfigError(std::string(what) + " edges must be strictly increasing");
}

} // namespace detail

/// Weight-accumulated age x log-income histogram.
inline JointHistogram jdf(const LogIncomePanel &panel, const std::vector<int> &age_edges,
                          const std::vector<double> &income_edges, bool normalize,
                          std::optional<int> year = std::nullopt) {
    detail::require_increasing(age_edges, "age");
    detail::require_increasing(income_edges, "income");
    JointHistogram h{age_edges, income_edges,
                     std::vector<std::vector<double>>(age_edges.size() - 1,
                                                      std::vector<double>(income_edges.size() - 1, 0.0)),
                     false, 0.0, 0};
    for (const auto &r : panel.records()) {
        if (year && r.year != *year) continue;
        const long ai = detail::bin_index(age_edges, r.age);
        const long yi = detail::bin_index(income_edges, r.log_income);
        if (ai < 0 || yi < 0) {
            h.out_of_range_weight += r.weight;
            ++h.out_of_range_count;
            continue;
        }
        h.mass[static_cast<std::size_t>(ai)][static_cast<std::size_t>(yi)] += r.weight;
    }
    if (normalize) {
        const double t = h.total();
        if (t > 0.0)
            for (auto &row : h.mass)
                for (auto &m : row) m /= t;
        h.normalized = true;
    }
    return h;
}

/// wave -> age -> total weight.
using PyramidSeries = std::map<int, std::map<int, double>>;

inline PyramidSeries pyramid(const LogIncomePanel &panel, const std::vector<int> &waves = {}) {
    PyramidSeries out;
    for (int y : waves) out[y];
    for (const auto &r : panel.records()) {
        if (!waves.empty() && std::find(waves.begin(), waves.end(), r.year) == waves.end()) continue;
        out[r.year][r.age] += r.weight;
    }
    return out;
}

inline void write_curves(std::ostream &out, const AgeCurves &curves) {
    out << "age,mean,std,count\n";
    for (const auto &[age, p] : curves)
        out << age << ',' << csv::format(p.mean) << ',' << csv::format(p.std_dev) << ',' << p.count << '\n';
}

inline void write_jdf_csv(std::ostream &out, const JointHistogram &h) {
    out << "age,bin_lo,bin_hi,mass\n";
    for (std::size_t i = 0; i + 1 < h.age_edges.size(); ++i)
        for (std::size_t j = 0; j + 1 < h.income_edges.size(); ++j)
            out << h.age_edges[i] << ',' << csv::format(h.income_edges[j]) << ','
                << csv::format(h.income_edges[j + 1]) << ',' << csv::format(h.mass[i][j]) << '\n';
}

inline nlohmann::json jdf_to_json(const JointHistogram &h) {
    return {{"age_edges", h.age_edges},
            {"income_edges", h.income_edges},
            {"mass", h.mass},
            {"normalized", h.normalized},
            {"out_of_range_weight", h.out_of_range_weight},
            {"out_of_range_count", h.out_of_range_count}};
}

inline void write_pyramid(std::ostream &out, const PyramidSeries &series) {
    out << "wave,age,weight\n";
    for (const auto &[wave, ages] : series)
        for (const auto &[age, w] : ages) out << wave << ',' << age << ',' << csv::format(w) << '\n';
}

} // namespace incdyn
