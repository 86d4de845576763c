#pragma once

#include <cmath>
#include <vector>

#include "core_model.hpp"
#include "errors.hpp"
#include "ingest.hpp"

namespace incdyn {

/// Profile with q rising linearly from q_first to q_last over [a_min, a_max)
/// and mu_a = mean * (1 - q_a), so a constant per-age mean is a fixed point.
inline AgeProfile smooth_stationary_profile(int a_min, int a_max, double q_first = 0.2, double q_last = 0.9,
                                            double mean = 10.0, double sigma = 0.3) {
    AgeProfile profile{a_min, a_max};
    const int span = a_max - a_min - 1;
    for (int a = a_min; a < a_max; ++a) {
        const double t = span > 0 ? static_cast<double>(a - a_min) / span : 0.0;
        const double q = q_first + (q_last - q_first) * t;
        profile.set(a, q, mean * (1.0 - q), sigma);
    }
    return profile;
}

/// Per-age initial cohorts whose mean and std already satisfy the profile's
/// mean and std recursions. The first age starts at `first_std`.
inline std::vector<InitialCohort> consistent_cohorts(const AgeProfile &profile, double first_mean, double first_std,
                                                     std::size_t count_per_age) {
    std::vector<InitialCohort> cohorts;
    double mean = first_mean;
    double sd = first_std;
    for (int a = profile.a_min(); a <= profile.a_max(); ++a) {
        cohorts.push_back({a, mean, sd, count_per_age});
        if (a < profile.a_max()) {
            mean = stationary_mean_next(mean, profile, a);
            sd = stationary_std_next(sd, profile, a);
        }
    }
    return cohorts;
}

/// Stationary AR(1) std for the first transition: sigma / sqrt(1 - q^2).
inline double ar1_stationary_std(const AgeProfile &profile) {
    const double q = profile.q(profile.a_min());
    if (!(std::fabs(q) < 1.0)) throw ConfigError("first-age persistence must satisfy |q| < 1");
    return profile.sigma(profile.a_min()) / std::sqrt(1.0 - q * q);
}

} // namespace incdyn
