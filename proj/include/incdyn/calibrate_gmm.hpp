#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "core_model.hpp"
#include "cubic.hpp"
#include "errors.hpp"
#include "ingest.hpp"

namespace incdyn {

/// Weighted moments of log income for one age.
struct AgeMoments {
    double mean = 0.0;
    double std_dev = 0.0;       ///< population convention, divisor = total weight
    double m3 = 0.0;            ///< raw third moment E[y^3]
    double n = 0.0;             ///< effective count (sum w)^2 / sum w^2
    double total_weight = 0.0;

    /// Third central moment E[(y - mean)^3].
    [[nodiscard]] double central_m3() const noexcept {
        return m3 - mean * mean * mean - 3.0 * mean * std_dev * std_dev;
    }
};

/// Per-age moments for one wave or pooled over waves. Absent ages are not stored.
struct WaveMoments {
    std::map<int, AgeMoments> by_age;

    [[nodiscard]] const AgeMoments *find(int age) const {
        auto it = by_age.find(age);
        return it == by_age.end() ? nullptr : &it->second;
    }
};

/// Weighted per-age moments of the given records.
template <typename Range>
WaveMoments moments_of(const Range &records) {
    struct Acc {
        double w = 0.0, w2 = 0.0, wy = 0.0;
    };
    std::map<int, Acc> first;
    for (const auto &r : records) {
        auto &acc = first[r.age];
        acc.w += r.weight;
        acc.w2 += r.weight * r.weight;
        acc.wy += r.weight * r.log_income;
    }
    std::map<int, std::pair<double, double>> central;  // sum w d^2, sum w d^3
    for (const auto &r : records) {
        const auto &acc = first[r.age];
        if (!(acc.w > 0.0)) continue;
        const double d = r.log_income - acc.wy / acc.w;
        auto &c = central[r.age];
        c.first += r.weight * d * d;
        c.second += r.weight * d * d * d;
    }
    WaveMoments out;
    for (const auto &[age, acc] : first) {
        if (!(acc.w > 0.0)) continue;
        const auto [s2, s3] = central[age];
        AgeMoments m;
        m.mean = acc.wy / acc.w;
        const double var = s2 / acc.w;
        m.std_dev = std::sqrt(var);
        // Raw moment assembled from central ones keeps precision when |mean| >> std.
        m.m3 = s3 / acc.w + 3.0 * m.mean * var + m.mean * m.mean * m.mean;
        m.n = acc.w * acc.w / acc.w2;
        m.total_weight = acc.w;
        out.by_age.emplace(age, m);
    }
    return out;
}

/// Per-age weighted moments of one wave of a panel.
inline WaveMoments compute_wave_moments(const LogIncomePanel &panel, int year) {
    return moments_of(panel.wave(year));
}

/// Simple average of per-age moments over the waves in which the age is present.
inline WaveMoments pool_moments(const std::vector<WaveMoments> &waves) {
    if (waves.empty()) throw ConfigError("pool_moments needs at least one wave");
    std::map<int, std::pair<AgeMoments, int>> sums;
    for (const auto &w : waves) {
        for (const auto &[age, m] : w.by_age) {
            auto &[s, k] = sums[age];
            s.mean += m.mean;
            s.std_dev += m.std_dev;
            s.m3 += m.m3;
            s.n += m.n;
            s.total_weight += m.total_weight;
            ++k;
        }
    }
    WaveMoments out;
    for (auto &[age, sk] : sums) {
        auto &[s, k] = sk;
        s.mean /= k;
        s.std_dev /= k;
        s.m3 /= k;
        out.by_age.emplace(age, s);
    }
    return out;
}

/// Moments of every wave of a panel, pooled.
inline WaveMoments pooled_panel_moments(const LogIncomePanel &panel) {
    std::vector<WaveMoments> per_wave;
    for (int year : panel.years()) per_wave.push_back(compute_wave_moments(panel, year));
    if (per_wave.empty()) throw DataError("panel is empty");
    return pool_moments(per_wave);
}

namespace detail {

inline std::pair<const AgeMoments &, const AgeMoments &> consecutive_moments(const WaveMoments &pooled, int age) {
    const auto *now = pooled.find(age);
    const auto *next = pooled.find(age + 1);
    if (!now || !next)
        throw EstimationError("moments for ages " + std::to_string(age) + " and " + std::to_string(age + 1) +
                              " are required");
    if (now->n < 2.0 || next->n < 2.0)
        throw EstimationError("fewer than 2 effective observations at age " + std::to_string(age));
    return {*now, *next};
}

} // namespace detail

/// Third-moment condition as a cubic in q_a.
///
/// Substituting mu_a = ybar_{a+1} - q ybar_a and sigma_a^2 = S_{a+1}^2 - q^2 S_a^2
/// into E[y_{a+1}^3] = E[(q y_a + mu_a + sigma_a eta)^3] with a symmetric unit
/// shock, the quadratic and linear terms cancel and the condition reads
/// kappa_a q^3 - kappa_{a+1} = 0, where kappa is the third central moment.
inline CubicCoefficients cubic_for_age(const WaveMoments &pooled, int age) {
    const auto [now, next] = detail::consecutive_moments(pooled, age);
    return {now.central_m3(), 0.0, 0.0, -next.central_m3()};
}

/// Differences (implied - observed) of the three moment conditions at age + 1.
struct MomentResiduals {
    double mean = 0.0;
    double variance = 0.0;
    double third = 0.0;

    [[nodiscard]] double max_relative(const AgeMoments &next) const {
        const double scale_mean = std::max(1.0, std::fabs(next.mean));
        const double scale_var = std::max(1.0, next.std_dev * next.std_dev + next.mean * next.mean);
        const double scale_third = std::max(1.0, std::fabs(next.m3));
        return std::max({std::fabs(mean) / scale_mean, std::fabs(variance) / scale_var,
                         std::fabs(third) / scale_third});
    }
};

inline MomentResiduals moment_residuals(const AgeMoments &now, const AgeMoments &next, double q, double mu,
                                        double sigma) {
    const double s2 = now.std_dev * now.std_dev;
    const double sig2 = sigma * sigma;
    const double implied_mean = q * now.mean + mu;
    const double implied_var = q * q * s2 + sig2;
    // q y + mu = q (y - ybar) + implied_mean, expanded around the mean.
    const double implied_m3 = q * q * q * now.central_m3() + 3.0 * implied_mean * q * q * s2 +
                              implied_mean * implied_mean * implied_mean + 3.0 * sig2 * implied_mean;
    return {implied_mean - next.mean, implied_var - next.std_dev * next.std_dev, implied_m3 - next.m3};
}

struct GmmAgeDiagnostics {
    int age = 0;
    std::vector<double> candidates;
    std::optional<double> q;
    double sigma2_raw = 0.0;  ///< variance before clamping
    std::uint8_t flags = kFlagNone;
    double max_relative_residual = 0.0;
    std::string error;
};

struct GmmResult {
    AgeProfile profile;
    std::vector<GmmAgeDiagnostics> diagnostics;
};

inline constexpr double kPlausibleQLow = 0.0;
inline constexpr double kPlausibleQHigh = 1.1;

/// Picks one root: smallest variance-clamp violation, then closest to
/// [0, 1.1], then smallest |q|.
inline double select_root(const std::vector<double> &roots, const AgeMoments &now, const AgeMoments &next) {
    auto key = [&](double q) {
        const double sigma2 = next.std_dev * next.std_dev - q * q * now.std_dev * now.std_dev;
        const double violation = std::max(0.0, -sigma2);
        const double distance = q < kPlausibleQLow ? kPlausibleQLow - q : (q > kPlausibleQHigh ? q - kPlausibleQHigh : 0.0);
        return std::make_tuple(violation, distance, std::fabs(q));
    };
    return *std::min_element(roots.begin(), roots.end(),
                             [&](double a, double b) { return key(a) < key(b); });
}

/// Exactly identified three-moment estimate for every transition in [a_min, a_max).
inline GmmResult estimate_gmm(const WaveMoments &pooled, int a_min, int a_max) {
    GmmResult result{AgeProfile{a_min, a_max}, {}};
    for (int age = a_min; age < a_max; ++age) {
        GmmAgeDiagnostics diag;
        diag.age = age;
        try {
            const auto [now, next] = detail::consecutive_moments(pooled, age);
            const auto cubic = cubic_for_age(pooled, age);
            const double scale = 1e-12 * std::max({1.0, std::fabs(now.m3), std::fabs(next.m3)});
            double q = 0.0;
            if (std::fabs(cubic.c3) <= scale && std::fabs(cubic.c0) <= scale) {
                // No third-moment information: every q satisfies the condition.
                diag.flags |= kFlagUnidentified;
                diag.candidates = {0.0};
            } else {
                diag.candidates = solve_cubic(cubic);
                if (diag.candidates.empty())
                    throw EstimationError("third-moment condition has no real root at age " + std::to_string(age));
                q = select_root(diag.candidates, now, next);
            }
            const double mu = next.mean - q * now.mean;
            diag.sigma2_raw = next.std_dev * next.std_dev - q * q * now.std_dev * now.std_dev;
            if (diag.sigma2_raw < 0.0) diag.flags |= kFlagSigmaClamped;
            const double sigma = std::sqrt(std::max(0.0, diag.sigma2_raw));
            diag.q = q;
            diag.max_relative_residual = moment_residuals(now, next, q, mu, sigma).max_relative(next);
            result.profile.set(age, q, mu, sigma, diag.flags);
        } catch (const EstimationError &e) {
            diag.error = e.what();
            diag.flags |= kFlagMissing;
            result.profile.mark_missing(age);
        }
        result.diagnostics.push_back(std::move(diag));
    }
    return result;
}

} // namespace incdyn
