#pragma once

#include <cmath>
#include <map>
#include <ostream>
#include <vector>

#include "csv.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "simulator.hpp"

namespace incdyn {

/// Annual pension in base-year currency.
inline constexpr double kDefaultPension = 16368.0;
inline constexpr double kDefaultContributionRate = 0.0775;
inline constexpr double kHighContributionRate = 0.2;
inline constexpr int kDefaultRetirementAge = 65;

struct PensionParams {
    double pension = kDefaultPension;
    double alpha = kDefaultContributionRate;
    int retirement_age = kDefaultRetirementAge;

    void validate() const {
        if (!(pension >= 0.0)) throw ConfigError("pension must be >= 0");
        if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("contribution rate must be in [0, 1]");
    }
};

struct CashflowPoint {
    int wave = 0;
    double inflow = 0.0;
    double outflow = 0.0;
    double balance = 0.0;
    std::size_t pensioners = 0;
    double contributor_income = 0.0;  ///< sum of level income of contributors
};

using CashflowSeries = std::vector<CashflowPoint>;

/// Outflow p * #(age > retirement_age); inflow alpha * sum of exp(y) over age <= retirement_age.
inline CashflowPoint cashflow(const Population &pop, const PensionParams &params) {
    params.validate();
    CashflowPoint pt;
    pt.wave = pop.wave_year;
    for (const auto &a : pop.agents) {
        if (a.age > params.retirement_age) ++pt.pensioners;
        else pt.contributor_income += std::exp(a.log_income);
    }
    pt.outflow = params.pension * static_cast<double>(pt.pensioners);
    pt.inflow = params.alpha * pt.contributor_income;
    pt.balance = pt.inflow - pt.outflow;
    return pt;
}

inline CashflowSeries cashflow(const std::vector<Population> &waves, const PensionParams &params) {
    CashflowSeries out;
    out.reserve(waves.size());
    for (const auto &pop : waves) out.push_back(cashflow(pop, params));
    return out;
}

/// Groups panel records into one population per year (weights ignored).
inline std::vector<Population> populations_of(const LogIncomePanel &panel) {
    std::map<int, Population> by_year;
    for (const auto &r : panel.records()) {
        auto &pop = by_year[r.year];
        pop.wave_year = r.year;
        pop.agents.push_back({r.id, r.age, r.log_income});
    }
    std::vector<Population> out;
    for (auto &[_, pop] : by_year) out.push_back(std::move(pop));
    return out;
}

inline CashflowSeries cashflow(const LogIncomePanel &panel, const PensionParams &params) {
    return cashflow(populations_of(panel), params);
}

/// One series per contribution rate; outflow is shared.
inline std::vector<CashflowSeries> sweep_alpha(const std::vector<Population> &waves, double pension,
                                               const std::vector<double> &alphas,
                                               int retirement_age = kDefaultRetirementAge) {
    std::vector<CashflowSeries> out;
    out.reserve(alphas.size());
    for (double alpha : alphas) out.push_back(cashflow(waves, PensionParams{pension, alpha, retirement_age}));
    return out;
}

inline void write_cashflow(std::ostream &out, const CashflowSeries &series) {
    out << "wave,inflow,outflow,balance,pensioners,contributor_income\n";
    for (const auto &p : series)
        out << p.wave << ',' << csv::format(p.inflow) << ',' << csv::format(p.outflow) << ','
            << csv::format(p.balance) << ',' << p.pensioners << ',' << csv::format(p.contributor_income) << '\n';
}

} // namespace incdyn
