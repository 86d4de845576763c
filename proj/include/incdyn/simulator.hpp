#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "random.hpp"

namespace incdyn {

struct Population {
    int wave_year = 0;
    std::vector<Agent> agents;

    friend bool operator==(const Population &, const Population &) = default;
};

struct SimConfig {
    int waves = 18;          ///< number of populations returned, including the initial one
    int injection_age = 25;
    int exit_age = kDefaultAgeMax;  ///< agents at this age are removed before the next step
    std::uint64_t seed = 0;

    void validate(const AgeProfile &profile) const {
        if (waves < 1) throw ConfigError("waves must be >= 1");
        if (injection_age < profile.a_min() || injection_age > profile.a_max())
            throw ConfigError("injection_age outside the profile age range");
        if (exit_age > profile.a_max())
            throw ConfigError("exit_age beyond the profile age range");
    }
};

/// Log incomes of the initial wave's injection-age agents.
struct InjectionPool {
    std::vector<double> log_incomes;
};

/// One agent per record of the given wave. Survey weights are ignored.
inline Population bootstrap_from_panel(const LogIncomePanel &panel, int year) {
    Population pop{year, {}};
    for (const auto &r : panel.records())
        if (r.year == year) pop.agents.push_back({r.id, r.age, r.log_income});
    if (pop.agents.empty()) throw DataError("wave " + std::to_string(year) + " has no records");
    return pop;
}

inline InjectionPool injection_pool(const Population &initial, int injection_age) {
    InjectionPool pool;
    for (const auto &a : initial.agents)
        if (a.age == injection_age) pool.log_incomes.push_back(a.log_income);
    return pool;
}

namespace detail {
inline constexpr std::uint64_t kInjectionTag = 0x696e6a6563740000ULL;
} // namespace detail

/// Ages every agent by one year under the profile, removes agents that had
/// reached exit_age, then injects a resampled cohort at injection_age.
inline Population advance_wave(const Population &pop, const AgeProfile &profile, const SimConfig &cfg,
                               const InjectionPool &pool, const NoiseSpec &noise) {
    Population next{pop.wave_year + 1, {}};
    next.agents.reserve(pop.agents.size() + pool.log_incomes.size());
    for (const auto &a : pop.agents) {
        if (a.age >= cfg.exit_age) continue;
        const double eta = noise.normal(fnv1a64(a.id), static_cast<std::uint64_t>(next.wave_year));
        next.agents.push_back({a.id, a.age + 1, step(a.log_income, a.age, profile, eta)});
    }
    if (!pool.log_incomes.empty()) {
        auto rng = noise.substream(detail::kInjectionTag, static_cast<std::uint64_t>(next.wave_year));
        std::uniform_int_distribution<std::size_t> pick{0, pool.log_incomes.size() - 1};
        for (std::size_t k = 0; k < pool.log_incomes.size(); ++k) {
            next.agents.push_back({"sim" + std::to_string(next.wave_year) + "-" + std::to_string(k),
                                   cfg.injection_age, pool.log_incomes[pick(rng)]});
        }
    }
    return next;
}

/// Bootstraps from the first wave of the panel (or `start_year`) and advances cfg.waves - 1 times.
inline std::vector<Population> run(const LogIncomePanel &panel, const AgeProfile &profile, const SimConfig &cfg,
                                   std::optional<int> start_year = std::nullopt) {
    cfg.validate(profile);
    if (panel.empty()) throw DataError("panel is empty");
    const int year = start_year ? *start_year : panel.years().front();
    std::vector<Population> waves;
    waves.reserve(static_cast<std::size_t>(cfg.waves));
    waves.push_back(bootstrap_from_panel(panel, year));
    for (const auto &a : waves.front().agents) {
        if (a.age < profile.a_min() || a.age > profile.a_max())
            throw AgeRangeError("initial agent " + a.id + " aged " + std::to_string(a.age) +
                                " is outside the profile range");
    }
    const auto pool = injection_pool(waves.front(), cfg.injection_age);
    const NoiseSpec noise{cfg.seed};
    for (int w = 1; w < cfg.waves; ++w) waves.push_back(advance_wave(waves.back(), profile, cfg, pool, noise));
    return waves;
}

/// Panel interchange view of simulated waves (weight 1).
inline LogIncomePanel to_panel(const std::vector<Population> &waves) {
    LogIncomePanel panel;
    for (const auto &pop : waves)
        for (const auto &a : pop.agents)
            if (!panel.add({a.id, pop.wave_year, a.age, a.log_income, 1.0}))
                throw DataError("duplicate agent id " + a.id + " in wave " + std::to_string(pop.wave_year));
    return panel;
}

} // namespace incdyn
