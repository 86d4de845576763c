#pragma once

#include <istream>
#include <map>
#include <ostream>
#include <string>
#include <tuple>

#include "calibrate_gmm.hpp"
#include "core_model.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "json.hpp"

namespace incdyn {

/// Profile CSV: age,q,mu,sigma,flags. Missing entries are written as nan.
inline void write_profile(std::ostream &out, const AgeProfile &profile) {
    out << "age,q,mu,sigma,flags\n";
    for (int age = profile.a_min(); age < profile.a_max(); ++age)
        out << age << ',' << csv::format(profile.q(age)) << ',' << csv::format(profile.mu(age)) << ','
            << csv::format(profile.sigma(age)) << ',' << flags_to_string(profile.flags(age)) << '\n';
}

/// Reads a profile CSV. The range is [first age, last age + 1); gaps are missing.
inline AgeProfile read_profile(std::istream &in) {
    std::string line;
    if (!csv::next_line(in, line)) throw DataError("profile file is empty");
    csv::Header header{csv::split_line(line)};
    const auto age_col = header.require("age");
    const auto q_col = header.require("q");
    const auto mu_col = header.require("mu");
    const auto sigma_col = header.require("sigma");
    const auto flags_col = header.find("flags");
    std::map<int, std::tuple<double, double, double, std::uint8_t>> rows;
    std::size_t row = 1;
    while (csv::next_line(in, line)) {
        ++row;
        auto f = csv::split_line(line);
        if (f.size() < header.size()) throw DataError("profile row " + std::to_string(row) + " has too few fields");
        auto age = csv::parse_int(f[age_col]);
        if (!age) throw DataError("profile row " + std::to_string(row) + " has no age");
        std::uint8_t flags = flags_col ? flags_from_string(std::string(csv::trim(f[*flags_col]))) : std::uint8_t{kFlagNone};
        auto q = csv::parse_double(f[q_col]);
        auto mu = csv::parse_double(f[mu_col]);
        auto sigma = csv::parse_double(f[sigma_col]);
        const bool finite = q && mu && sigma && std::isfinite(*q) && std::isfinite(*mu) && std::isfinite(*sigma);
        if (!finite) flags |= kFlagMissing;
        if (!rows.emplace(static_cast<int>(*age), std::make_tuple(finite ? *q : 0.0, finite ? *mu : 0.0,
                                                                    finite ? *sigma : 0.0, flags))
                 .second)
            throw DataError("profile lists age " + std::to_string(*age) + " twice");
    }
    if (rows.empty()) throw DataError("profile has no rows");
    AgeProfile profile{rows.begin()->first, rows.rbegin()->first + 1};
    for (const auto &[age, entry] : rows) {
        const auto &[q, mu, sigma, flags] = entry;
        if (flags & kFlagMissing) {
            profile.mark_missing(age, flags);
            continue;
        }
        if (sigma < 0.0) throw DataError("profile sigma is negative at age " + std::to_string(age));
        profile.set(age, q, mu, sigma, flags);
    }
    return profile;
}

inline nlohmann::json gmm_diagnostics_json(const GmmResult &result) {
    auto ages = nlohmann::json::array();
    for (const auto &d : result.diagnostics) {
        nlohmann::json j{{"age", d.age},
                         {"candidate_roots", d.candidates},
                         {"sigma2_raw", d.sigma2_raw},
                         {"sigma_clamped", (d.flags & kFlagSigmaClamped) != 0},
                         {"unidentified", (d.flags & kFlagUnidentified) != 0},
                         {"max_relative_residual", d.max_relative_residual},
                         {"flags", flags_to_string(d.flags)}};
        j["q"] = d.q ? nlohmann::json(*d.q) : nlohmann::json(nullptr);
        if (!d.error.empty()) j["error"] = d.error;
        ages.push_back(std::move(j));
    }
    return {{"method", "gmm"}, {"ages", std::move(ages)}};
}

} // namespace incdyn
