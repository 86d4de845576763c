#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "core_model.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "random.hpp"

namespace incdyn {

struct LsmFit {
    double q = 0.0;
    double mu = 0.0;
    double sigma = 0.0;
};

struct QBounds {
    double lo = 0.0;
    double hi = 1.2;
};

using Pairs = std::vector<std::pair<double, double>>;

namespace detail {

struct PairSums {
    double n = 0.0;
    double mean_y = 0.0;
    double mean_y1 = 0.0;
    double sxx = 0.0;
    double sxy = 0.0;
};

inline PairSums pair_sums(const Pairs &pairs) {
    PairSums s;
    s.n = static_cast<double>(pairs.size());
    for (const auto &[y, y1] : pairs) {
        s.mean_y += y;
        s.mean_y1 += y1;
    }
    s.mean_y /= s.n;
    s.mean_y1 /= s.n;
    for (const auto &[y, y1] : pairs) {
        const double dy = y - s.mean_y;
        s.sxx += dy * dy;
        s.sxy += dy * (y1 - s.mean_y1);
    }
    return s;
}

inline double residual_sd(const Pairs &pairs, double q, double mu) {
    double ss = 0.0;
    for (const auto &[y, y1] : pairs) {
        const double r = y1 - q * y - mu;
        ss += r * r;
    }
    return std::sqrt(ss / static_cast<double>(pairs.size()));
}

} // namespace detail

/// Ordinary least squares of y' on y with intercept; sigma from residuals, divisor n.
/// With bounds, an out-of-range slope is clipped and the intercept refit.
inline std::pair<LsmFit, bool> fit_age_bounded(const Pairs &pairs, const std::optional<QBounds> &bounds) {
    if (pairs.size() < 2) throw EstimationError("least squares needs at least 2 transition pairs");
    const auto s = detail::pair_sums(pairs);
    if (!(s.sxx > 1e-14 * s.n * std::max(1.0, s.mean_y * s.mean_y)))
        throw EstimationError("starting incomes have zero variance");
    LsmFit fit;
    fit.q = s.sxy / s.sxx;
    bool clipped = false;
    if (bounds && (fit.q < bounds->lo || fit.q > bounds->hi)) {
        fit.q = std::clamp(fit.q, bounds->lo, bounds->hi);
        clipped = true;
    }
    fit.mu = s.mean_y1 - fit.q * s.mean_y;
    fit.sigma = detail::residual_sd(pairs, fit.q, fit.mu);
    return {fit, clipped};
}

inline LsmFit fit_age(const Pairs &pairs) { return fit_age_bounded(pairs, std::nullopt).first; }

inline std::pair<int, int> transition_age_range(const TransitionSet &transitions) {
    if (transitions.empty()) throw DataError("no transitions available");
    return {transitions.begin()->first, transitions.rbegin()->first + 1};
}

/// Per-age fits over [a_min, a_max). Ages without a valid fit are marked missing.
inline AgeProfile fit_all(const TransitionSet &transitions, int a_min, int a_max,
                          const std::optional<QBounds> &bounds = std::nullopt) {
    if (bounds && bounds->lo > bounds->hi) throw ConfigError("q bounds must satisfy lo <= hi");
    AgeProfile profile{a_min, a_max};
    for (int age = a_min; age < a_max; ++age) {
        auto it = transitions.find(age);
        if (it == transitions.end()) continue;
        try {
            const auto [fit, clipped] = fit_age_bounded(it->second, bounds);
            profile.set(age, fit.q, fit.mu, fit.sigma, clipped ? kFlagQClipped : kFlagNone);
        } catch (const EstimationError &) {
            profile.mark_missing(age);
        }
    }
    return profile;
}

inline AgeProfile fit_all(const TransitionSet &transitions, const std::optional<QBounds> &bounds = std::nullopt) {
    const auto [lo, hi] = transition_age_range(transitions);
    return fit_all(transitions, lo, hi, bounds);
}

struct Interval {
    double lo = std::numeric_limits<double>::quiet_NaN();
    double hi = std::numeric_limits<double>::quiet_NaN();

    [[nodiscard]] bool contains(double x) const noexcept { return lo <= x && x <= hi; }
};

struct AgeInterval {
    Interval q, mu, sigma;
    std::size_t n_pairs = 0;
    std::size_t degenerate = 0;  ///< resamples excluded because the fit failed
};

struct CalibrationReport {
    AgeProfile profile;
    std::map<int, AgeInterval> intervals;
    std::size_t bootstrap_samples = 0;
    double level = 0.95;
};

/// Linear-interpolation quantile of sorted data (Hyndman-Fan type 7).
inline double quantile_sorted(const std::vector<double> &sorted, double p) {
    if (sorted.empty()) return std::numeric_limits<double>::quiet_NaN();
    const double h = (static_cast<double>(sorted.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

/// Percentile bootstrap over transition pairs, resampled with replacement.
/// Replicate r of age a draws from its own substream, so results depend only on the seed.
inline CalibrationReport bootstrap_ci(const TransitionSet &transitions, int a_min, int a_max, std::size_t samples,
                                      double level, const NoiseSpec &noise,
                                      const std::optional<QBounds> &bounds = std::nullopt) {
    if (samples < 1) throw ConfigError("bootstrap needs at least one sample");
    if (!(level > 0.0 && level < 1.0)) throw ConfigError("confidence level must be in (0, 1)");
    CalibrationReport report{fit_all(transitions, a_min, a_max, bounds), {}, samples, level};
    const double p_lo = (1.0 - level) / 2.0;
    const double p_hi = 1.0 - p_lo;
    for (int age = a_min; age < a_max; ++age) {
        auto it = transitions.find(age);
        if (it == transitions.end()) continue;
        const auto &pairs = it->second;
        AgeInterval interval;
        interval.n_pairs = pairs.size();
        if (pairs.empty()) {
            report.intervals.emplace(age, interval);
            continue;
        }
        std::vector<double> qs, mus, sigmas;
        qs.reserve(samples);
        Pairs resample(pairs.size());
        std::uniform_int_distribution<std::size_t> pick{0, pairs.size() - 1};
        for (std::size_t r = 0; r < samples; ++r) {
            auto rng = noise.substream(static_cast<std::uint64_t>(age), static_cast<std::uint64_t>(r));
            for (auto &slot : resample) slot = pairs[pick(rng)];
            try {
                const auto fit = fit_age_bounded(resample, bounds).first;
                qs.push_back(fit.q);
                mus.push_back(fit.mu);
                sigmas.push_back(fit.sigma);
            } catch (const EstimationError &) {
                ++interval.degenerate;
            }
        }
        for (auto *v : {&qs, &mus, &sigmas}) std::sort(v->begin(), v->end());
        interval.q = {quantile_sorted(qs, p_lo), quantile_sorted(qs, p_hi)};
        interval.mu = {quantile_sorted(mus, p_lo), quantile_sorted(mus, p_hi)};
        interval.sigma = {quantile_sorted(sigmas, p_lo), quantile_sorted(sigmas, p_hi)};
        report.intervals.emplace(age, interval);
    }
    return report;
}

inline void write_report(std::ostream &out, const CalibrationReport &report) {
    out << "age,q,q_lo,q_hi,mu,mu_lo,mu_hi,sigma,sigma_lo,sigma_hi,n_pairs\n";
    const auto &p = report.profile;
    for (int age = p.a_min(); age < p.a_max(); ++age) {
        AgeInterval iv;
        if (auto it = report.intervals.find(age); it != report.intervals.end()) iv = it->second;
        out << age << ',' << csv::format(p.q(age)) << ',' << csv::format(iv.q.lo) << ',' << csv::format(iv.q.hi)
            << ',' << csv::format(p.mu(age)) << ',' << csv::format(iv.mu.lo) << ',' << csv::format(iv.mu.hi) << ','
            << csv::format(p.sigma(age)) << ',' << csv::format(iv.sigma.lo) << ',' << csv::format(iv.sigma.hi)
            << ',' << iv.n_pairs << '\n';
    }
}

} // namespace incdyn
