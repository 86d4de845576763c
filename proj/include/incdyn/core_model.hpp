#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "errors.hpp"

namespace incdyn {

inline constexpr int kDefaultAgeMin = 15;
inline constexpr int kDefaultAgeMax = 100;

/// Per-entry status bits carried alongside an AgeProfile.
enum ProfileFlag : std::uint8_t {
    kFlagNone = 0,
    kFlagMissing = 1 << 0,       ///< estimation failed, entry holds NaN
    kFlagSigmaClamped = 1 << 1,  ///< negative variance clamped to zero
    kFlagQClipped = 1 << 2,      ///< persistence clipped to configured bounds
    kFlagUnidentified = 1 << 3,  ///< third-moment equation carried no information
};

inline std::string flags_to_string(std::uint8_t flags) {
    if (flags == kFlagNone) return "ok";
    std::string out;
    auto add = [&](std::uint8_t bit, const char *name) {
        if (flags & bit) {
            if (!out.empty()) out += '|';
            out += name;
        }
    };
    add(kFlagMissing, "missing");
    add(kFlagSigmaClamped, "sigma_clamped");
    add(kFlagQClipped, "q_clipped");
    add(kFlagUnidentified, "unidentified");
    return out;
}

inline std::uint8_t flags_from_string(const std::string &text) {
    std::uint8_t flags = kFlagNone;
    std::size_t start = 0;
    while (start <= text.size()) {
        auto end = text.find('|', start);
        if (end == std::string::npos) end = text.size();
        auto token = text.substr(start, end - start);
        if (token == "missing") flags |= kFlagMissing;
        else if (token == "sigma_clamped") flags |= kFlagSigmaClamped;
        else if (token == "q_clipped") flags |= kFlagQClipped;
        else if (token == "unidentified") flags |= kFlagUnidentified;
        else if (token != "ok" && !token.empty())
            throw DataError("unknown profile flag '" + token + "'");
        start = end + 1;
    }
    return flags;
}

/// Transition parameters (q_a, mu_a, sigma_a) for every a in [a_min, a_max).
///
/// Entry a describes the move from age a to age a + 1, so a profile over
/// [a_min, a_max] has a_max - a_min entries.
class AgeProfile {
public:
    AgeProfile() = default;

    AgeProfile(int a_min, int a_max) : a_min_{a_min}, a_max_{a_max} {
        if (a_min >= a_max) throw ConfigError("age profile requires a_min < a_max");
        const auto n = static_cast<std::size_t>(a_max - a_min);
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        q_.assign(n, nan);
        mu_.assign(n, nan);
        sigma_.assign(n, nan);
        flags_.assign(n, kFlagMissing);
    }

    [[nodiscard]] int a_min() const noexcept { return a_min_; }
    [[nodiscard]] int a_max() const noexcept { return a_max_; }
    [[nodiscard]] std::size_t size() const noexcept { return q_.size(); }

    [[nodiscard]] bool covers(int age) const noexcept { return age >= a_min_ && age < a_max_; }

    [[nodiscard]] bool has(int age) const noexcept {
        return covers(age) && !(flags_[index(age)] & kFlagMissing);
    }

    void set(int age, double q, double mu, double sigma, std::uint8_t flags = kFlagNone) {
        const auto i = checked_index(age);
        if (!std::isfinite(q) || !std::isfinite(mu) || !std::isfinite(sigma))
            throw ConfigError("profile entry for age " + std::to_string(age) + " is not finite");
        if (sigma < 0.0)
            throw ConfigError("profile sigma for age " + std::to_string(age) + " is negative");
        q_[i] = q;
        mu_[i] = mu;
        sigma_[i] = sigma;
        flags_[i] = static_cast<std::uint8_t>(flags & ~kFlagMissing);
    }

    void mark_missing(int age, std::uint8_t extra_flags = kFlagNone) {
        const auto i = checked_index(age);
        constexpr double nan = std::numeric_limits<double>::quiet_NaN();
        q_[i] = mu_[i] = sigma_[i] = nan;
        flags_[i] = static_cast<std::uint8_t>(kFlagMissing | extra_flags);
    }

    [[nodiscard]] double q(int age) const { return q_[checked_index(age)]; }
    [[nodiscard]] double mu(int age) const { return mu_[checked_index(age)]; }
    [[nodiscard]] double sigma(int age) const { return sigma_[checked_index(age)]; }
    [[nodiscard]] std::uint8_t flags(int age) const { return flags_[checked_index(age)]; }

    /// Throws AgeRangeError unless every entry in [from, to) is present.
    void require(int from, int to) const {
        for (int a = from; a < to; ++a) {
            if (!has(a))
                throw AgeRangeError("profile has no parameters for age " + std::to_string(a));
        }
    }

private:
    [[nodiscard]] std::size_t index(int age) const noexcept {
        return static_cast<std::size_t>(age - a_min_);
    }

    [[nodiscard]] std::size_t checked_index(int age) const {
        if (!covers(age))
            throw AgeRangeError("age " + std::to_string(age) + " outside profile range [" +
                                std::to_string(a_min_) + ", " + std::to_string(a_max_) + ")");
        return index(age);
    }

    int a_min_ = kDefaultAgeMin;
    int a_max_ = kDefaultAgeMax;
    std::vector<double> q_;
    std::vector<double> mu_;
    std::vector<double> sigma_;
    std::vector<std::uint8_t> flags_;
};

struct Agent {
    std::string id;
    int age = 0;
    double log_income = 0.0;

    friend bool operator==(const Agent &, const Agent &) = default;
};

namespace detail {

inline void require_present(const AgeProfile &profile, int age) {
    if (!profile.has(age))
        throw AgeRangeError("profile has no parameters for age " + std::to_string(age));
}

} // namespace detail

/// One-year evolution of log income: q_a * y + mu_a + sigma_a * eta.
inline double step(double y, int age, const AgeProfile &profile, double eta) {
    detail::require_present(profile, age);
    return profile.q(age) * y + profile.mu(age) + profile.sigma(age) * eta;
}

/// Mean of log income at age + 1 implied by the mean at age.
inline double stationary_mean_next(double mean, const AgeProfile &profile, int age) {
    detail::require_present(profile, age);
    return profile.q(age) * mean + profile.mu(age);
}

/// Standard deviation at age + 1 implied by the standard deviation at age.
inline double stationary_std_next(double std_dev, const AgeProfile &profile, int age) {
    detail::require_present(profile, age);
    if (std_dev < 0.0) throw ConfigError("standard deviation must be non-negative");
    const double q = profile.q(age);
    const double s = profile.sigma(age);
    return std::sqrt(q * q * std_dev * std_dev + s * s);
}

} // namespace incdyn
