#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "calibrate_gmm.hpp"
#include "calibrate_lsm.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "ingest.hpp"
#include "json.hpp"
#include "pension.hpp"
#include "profile_io.hpp"
#include "random.hpp"
#include "simulator.hpp"
#include "stats.hpp"
#include "synthetic.hpp"

namespace incdyn::cli {

inline constexpr const char *kVersion = "0.1.0";

enum ExitCode : int { kOk = 0, kConfigError = 1, kDataError = 2, kEstimationError = 3 };

/// Flat `key = value` config. '#' and ';' start comments; keys use option
/// names without the leading dashes, '_' and '-' are interchangeable.
inline std::map<std::string, std::string> parse_config(std::istream &in) {
    std::map<std::string, std::string> out;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        auto hash = line.find_first_of("#;");
        if (hash != std::string::npos) line.erase(hash);
        auto body = csv::trim(line);
        if (body.empty()) continue;
        auto eq = body.find('=');
        if (eq == std::string_view::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
        std::string key(csv::trim(body.substr(0, eq)));
        std::string value(csv::trim(body.substr(eq + 1)));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') value = value.substr(1, value.size() - 2);
        for (auto &c : key)
            if (c == '_') c = '-';
        if (key.empty()) throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second) throw ConfigError("config key '" + key + "' given twice");
    }
    return out;
}

namespace detail {

struct Settings {
    // global
    std::string config;
    std::uint64_t seed = 1;
    std::string out = "out";

    // ingest
    std::string input;
    std::string deflator;
    int base_year = 0;
    double floor_wage = 0.0;
    std::string col_id = "id", col_year = "year", col_age = "age", col_income = "income", col_weight = "weight";
    std::vector<double> sentinels;
    std::vector<int> age_topcodes;
    std::optional<int> age_min, age_max, wave_year;

    // synth
    int synth_age_min = 25, synth_age_max = 64;
    double q_first = 0.2, q_last = 0.9, mean = 10.0, sigma = 0.3;
    std::optional<double> first_std;
    std::size_t agents_per_age = 2000;
    int start_year = 1991;
    std::string truth;

    // calibrate / simulate / stats / pension
    std::string panel;
    std::string method = "lsm";
    std::string bounds;
    std::size_t bootstrap = 2000;
    double level = 0.95;
    std::string profile;
    int waves = 18;
    int injection_age = 25;
    std::optional<int> exit_age;
    std::optional<int> wave;
    std::size_t income_bins = 60;
    double income_lo = std::log(1000.0), income_hi = std::log(200000.0);
    int jdf_age_min = kDefaultAgeMin, jdf_age_max = kDefaultAgeMax;
    bool raw_counts = false;
    double pension = kDefaultPension;
    std::vector<double> alpha{kDefaultContributionRate};
    int retirement_age = kDefaultRetirementAge;
};

inline std::ifstream open_input(const std::string &path, const char *what) {
    if (path.empty()) throw ConfigError(std::string("missing required ") + what + " path");
    std::ifstream in(path);
    if (!in) throw DataError(std::string("cannot open ") + what + " '" + path + "'");
    return in;
}

class OutputDir {
public:
    explicit OutputDir(std::filesystem::path dir) : dir_{std::move(dir)} {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (ec) throw DataError("cannot create output directory '" + dir_.string() + "': " + ec.message());
    }

    template <typename Writer>
    void write(const std::string &name, Writer &&writer) {
        std::ofstream out(dir_ / name, std::ios::binary);
        if (!out) throw DataError("cannot write '" + (dir_ / name).string() + "'");
        writer(out);
        if (!out) throw DataError("failed writing '" + (dir_ / name).string() + "'");
        files_.push_back(name);
    }

    [[nodiscard]] const std::vector<std::string> &files() const noexcept { return files_; }
    [[nodiscard]] const std::filesystem::path &path() const noexcept { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::string> files_;
};

inline std::optional<QBounds> parse_bounds(const std::string &text) {
    if (text.empty()) return std::nullopt;
    auto parts = csv::split_line(text);
    if (parts.size() != 2) throw ConfigError("--bounds expects LO,HI");
    auto lo = csv::parse_double(parts[0]);
    auto hi = csv::parse_double(parts[1]);
    if (!lo || !hi || *lo > *hi) throw ConfigError("--bounds expects numeric LO,HI with LO <= HI");
    return QBounds{*lo, *hi};
}

inline LogIncomePanel load_interchange(const std::string &path) {
    auto in = open_input(path, "panel");
    return read_panel(in);
}

inline AgeProfile load_profile(const std::string &path) {
    auto in = open_input(path, "profile");
    return read_profile(in);
}

inline void write_waves(OutputDir &out, const std::vector<Population> &waves) {
    const auto all = to_panel(waves);
    out.write("waves.csv", [&](std::ostream &os) { write_panel(os, all); });
    for (const auto &pop : waves) {
        LogIncomePanel one;
        for (const auto &a : pop.agents) one.add({a.id, pop.wave_year, a.age, a.log_income, 1.0});
        out.write("wave_" + std::to_string(pop.wave_year) + ".csv", [&](std::ostream &os) { write_panel(os, one); });
    }
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream s;
    s << std::hex << std::setw(16) << std::setfill('0') << v;
    return s.str();
}

/// Resolved option values of the invoked subcommand and the globals.
inline std::map<std::string, std::string> resolved_options(const CLI::App &app, const CLI::App &sub) {
    std::map<std::string, std::string> out;
    auto collect = [&](const CLI::App &a) {
        for (const CLI::Option *opt : a.get_options()) {
            const auto &name = opt->get_single_name();
            if (name.empty() || name == "help" || name == "config" || name == "version") continue;
            std::string value;
            if (opt->count() > 0) {
                for (const auto &r : opt->results()) value += (value.empty() ? "" : ",") + r;
            } else {
                value = opt->get_default_str();
            }
            out[name] = value;
        }
    };
    collect(app);
    collect(sub);
    return out;
}

} // namespace detail

/// Entry point shared by the executable and the tests. Returns the exit code.
inline int run(std::vector<std::string> args, std::ostream &out, std::ostream &err) {
    using detail::Settings;
    Settings s;
    CLI::App app{"Age-dependent income process calibration and simulation", "incdyn"};
    app.require_subcommand(1, 1);
    app.fallthrough();
    app.set_version_flag("--version", kVersion);
    app.add_option("--config", s.config, "flat key = value config file; command-line flags override it");
    app.add_option("--seed", s.seed, "random seed")->capture_default_str();
    app.add_option("--out", s.out, "output directory")->capture_default_str();

    auto *ingest = app.add_subcommand("ingest", "clean survey CSV into the panel interchange format");
    ingest->add_option("--input", s.input, "survey microdata CSV")->required();
    ingest->add_option("--deflator", s.deflator, "year,index CSV (omit for already-deflated data)");
    ingest->add_option("--base-year", s.base_year, "deflator base year")->capture_default_str();
    ingest->add_option("--floor-wage", s.floor_wage, "minimum deflated income kept")->required();
    ingest->add_option("--col-id", s.col_id)->capture_default_str();
    ingest->add_option("--col-year", s.col_year)->capture_default_str();
    ingest->add_option("--col-age", s.col_age)->capture_default_str();
    ingest->add_option("--col-income", s.col_income)->capture_default_str();
    ingest->add_option("--col-weight", s.col_weight, "weight column; empty for unit weights")->capture_default_str();
    ingest->add_option("--sentinels", s.sentinels, "income codes meaning missing")->delimiter(',');
    ingest->add_option("--age-topcodes", s.age_topcodes, "top-coded ages to drop")->delimiter(',');
    ingest->add_option("--age-min", s.age_min);
    ingest->add_option("--age-max", s.age_max);
    ingest->add_option("--year", s.wave_year, "year for single-wave files without a year column");

    auto *synth = app.add_subcommand("synth", "generate a synthetic panel with a known profile");
    synth->add_option("--age-min", s.synth_age_min)->capture_default_str();
    synth->add_option("--age-max", s.synth_age_max)->capture_default_str();
    synth->add_option("--q-first", s.q_first)->capture_default_str();
    synth->add_option("--q-last", s.q_last)->capture_default_str();
    synth->add_option("--mean", s.mean, "stationary mean log income")->capture_default_str();
    synth->add_option("--sigma", s.sigma)->capture_default_str();
    synth->add_option("--first-std", s.first_std, "std at the first age (default: AR(1) stationary value)");
    synth->add_option("--agents-per-age", s.agents_per_age)->capture_default_str();
    synth->add_option("--waves", s.waves)->capture_default_str();
    synth->add_option("--start-year", s.start_year)->capture_default_str();
    synth->add_option("--truth", s.truth, "profile CSV to use instead of the smooth default");

    auto *calibrate = app.add_subcommand("calibrate", "estimate an age profile from a panel");
    calibrate->add_option("--panel", s.panel)->required();
    calibrate->add_option("--method", s.method)->check(CLI::IsMember({"gmm", "lsm"}))->capture_default_str();
    calibrate->add_option("--bounds", s.bounds, "LO,HI bounds on q (lsm)");
    calibrate->add_option("--bootstrap", s.bootstrap, "bootstrap samples for lsm intervals; 0 disables")
        ->capture_default_str();
    calibrate->add_option("--level", s.level)->capture_default_str();
    calibrate->add_option("--age-min", s.age_min);
    calibrate->add_option("--age-max", s.age_max);

    auto *simulate = app.add_subcommand("simulate", "evolve the first wave of a panel forward");
    simulate->add_option("--panel", s.panel)->required();
    simulate->add_option("--profile", s.profile)->required();
    simulate->add_option("--waves", s.waves)->capture_default_str();
    simulate->add_option("--injection-age", s.injection_age)->capture_default_str();
    simulate->add_option("--exit-age", s.exit_age, "default: profile upper age");
    simulate->add_option("--start-year", s.wave, "wave to bootstrap from (default: first)");

    auto *stats = app.add_subcommand("stats", "per-age curves, joint histogram and pyramid");
    stats->add_option("--panel", s.panel)->required();
    stats->add_option("--wave", s.wave, "restrict curves and histogram to one wave");
    stats->add_option("--income-bins", s.income_bins)->capture_default_str();
    stats->add_option("--income-lo", s.income_lo)->capture_default_str();
    stats->add_option("--income-hi", s.income_hi)->capture_default_str();
    stats->add_option("--jdf-age-min", s.jdf_age_min)->capture_default_str();
    stats->add_option("--jdf-age-max", s.jdf_age_max)->capture_default_str();
    stats->add_flag("--raw-counts", s.raw_counts, "do not normalize the histogram");

    auto *pension = app.add_subcommand("pension", "pension inflow and outflow per wave");
    pension->add_option("--panel", s.panel)->required();
    pension->add_option("--pension", s.pension)->capture_default_str();
    pension->add_option("--alpha", s.alpha, "contribution rate(s)")->delimiter(',')->capture_default_str();
    pension->add_option("--retirement-age", s.retirement_age)->capture_default_str();

    if (args.empty()) {
        err << app.help();
        return kConfigError;
    }

    try {
        // Splice config values in as flags unless overridden on the command line.
        std::optional<std::string> config_path;
        CLI::App *chosen = nullptr;
        std::size_t sub_pos = 0;
        for (std::size_t i = 0; i < args.size(); ++i) {
            if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
            else if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
            if (!chosen && args[i].rfind("-", 0) != 0) {
                for (auto *sub : app.get_subcommands({})) {
                    if (sub->get_name() == args[i]) {
                        chosen = sub;
                        sub_pos = i;
                    }
                }
            }
        }
        if (config_path) {
            if (!chosen) throw ConfigError("--config requires a subcommand");
            auto in = detail::open_input(*config_path, "config");
            std::vector<std::string> extra;
            for (const auto &[key, value] : parse_config(in)) {
                const std::string flag = "--" + key;
                const CLI::Option *opt = chosen->get_option_no_throw(flag);
                if (!opt) opt = app.get_option_no_throw(flag);
                if (!opt || key == "config" || key == "help")
                    throw ConfigError("unknown config key '" + key + "' for subcommand " + chosen->get_name());
                bool on_cli = false;
                for (const auto &a : args)
                    if (a == flag || a.rfind(flag + "=", 0) == 0) on_cli = true;
                if (on_cli) continue;
                if (opt->get_expected_max() == 0) {
                    if (value == "true" || value == "1") extra.push_back(flag);
                    else if (value != "false" && value != "0")
                        throw ConfigError("config key '" + key + "' expects true or false");
                } else {
                    extra.push_back(flag + "=" + value);
                }
            }
            args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_pos) + 1, extra.begin(), extra.end());
        }

        std::vector<std::string> reversed(args.rbegin(), args.rend());
        app.parse(std::move(reversed));
    } catch (const CLI::CallForHelp &) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForVersion &) {
        out << kVersion << '\n';
        return kOk;
    } catch (const CLI::ParseError &e) {
        err << "error: " << e.what() << "\n\n" << app.help();
        return kConfigError;
    } catch (const ConfigError &e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const DataError &e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }

    CLI::App *sub = app.get_subcommands().front();
    const std::string command = sub->get_name();
    try {
        detail::OutputDir dir{s.out};
        const NoiseSpec noise{s.seed};

        if (command == "ingest") {
            IngestConfig cfg;
            cfg.columns = {s.col_id, s.col_year, s.col_age, s.col_income, s.col_weight};
            cfg.floor_wage = s.floor_wage;
            cfg.sentinel_codes = s.sentinels;
            cfg.age_topcodes = s.age_topcodes;
            cfg.age_min = s.age_min;
            cfg.age_max = s.age_max;
            cfg.year = s.wave_year;
            DeflatorSeries deflator;
            if (!s.deflator.empty()) {
                auto din = detail::open_input(s.deflator, "deflator");
                deflator = read_deflator(din, s.base_year);
            } else {
                const int y = s.base_year != 0 ? s.base_year : 2000;
                deflator = DeflatorSeries::constant(1800, 2200, y);
            }
            auto in = detail::open_input(s.input, "input");
            auto result = load_panel(in, cfg, deflator);
            dir.write("panel.csv", [&](std::ostream &os) { write_panel(os, result.panel); });
            dir.write("drops.csv", [&](std::ostream &os) {
                os << "reason,count\n";
                for (const auto &[reason, count] : result.drops) os << reason << ',' << count << '\n';
            });
            out << "ingested " << result.panel.size() << " of " << result.rows_read << " rows\n";
        } else if (command == "synth") {
            AgeProfile truth = s.truth.empty()
                                   ? smooth_stationary_profile(s.synth_age_min, s.synth_age_max, s.q_first, s.q_last,
                                                               s.mean, s.sigma)
                                   : detail::load_profile(s.truth);
            truth.require(truth.a_min(), truth.a_max());
            const double first_std = s.first_std ? *s.first_std : ar1_stationary_std(truth);
            const auto cohorts = consistent_cohorts(truth, s.mean, first_std, s.agents_per_age);
            const auto panel = generate_synthetic_panel(truth, cohorts, s.waves, noise, s.start_year);
            dir.write("panel.csv", [&](std::ostream &os) { write_panel(os, panel); });
            dir.write("truth_profile.csv", [&](std::ostream &os) { write_profile(os, truth); });
            out << "generated " << panel.size() << " records\n";
        } else if (command == "calibrate") {
            const auto panel = detail::load_interchange(s.panel);
            if (panel.empty()) throw DataError("panel is empty");
            if (s.method == "gmm") {
                const auto pooled = pooled_panel_moments(panel);
                const int lo = s.age_min ? *s.age_min : pooled.by_age.begin()->first;
                const int hi = s.age_max ? *s.age_max : pooled.by_age.rbegin()->first;
                if (lo >= hi) throw EstimationError("need at least two consecutive ages for GMM");
                const auto result = estimate_gmm(pooled, lo, hi);
                bool any = false;
                for (int a = lo; a < hi; ++a) any = any || result.profile.has(a);
                if (!any) throw EstimationError("GMM failed for every age");
                dir.write("profile.csv", [&](std::ostream &os) { write_profile(os, result.profile); });
                dir.write("diagnostics.json",
                          [&](std::ostream &os) { os << gmm_diagnostics_json(result).dump(2) << '\n'; });
            } else {
                const auto transitions = group_transitions(make_transitions(panel));
                if (transitions.empty()) throw EstimationError("panel has no consecutive-year transitions");
                auto [lo, hi] = transition_age_range(transitions);
                if (s.age_min) lo = *s.age_min;
                if (s.age_max) hi = *s.age_max;
                if (lo >= hi) throw ConfigError("calibration age range is empty");
                const auto bounds = detail::parse_bounds(s.bounds);
                AgeProfile profile;
                if (s.bootstrap > 0) {
                    auto report = bootstrap_ci(transitions, lo, hi, s.bootstrap, s.level, noise, bounds);
                    profile = report.profile;
                    dir.write("report.csv", [&](std::ostream &os) { write_report(os, report); });
                } else {
                    profile = fit_all(transitions, lo, hi, bounds);
                }
                bool any = false;
                for (int a = lo; a < hi; ++a) any = any || profile.has(a);
                if (!any) throw EstimationError("least squares failed for every age");
                dir.write("profile.csv", [&](std::ostream &os) { write_profile(os, profile); });
            }
            out << "calibrated with " << s.method << '\n';
        } else if (command == "simulate") {
            const auto panel = detail::load_interchange(s.panel);
            const auto profile = detail::load_profile(s.profile);
            SimConfig cfg{s.waves, s.injection_age, s.exit_age ? *s.exit_age : profile.a_max(), s.seed};
            const auto waves = run(panel, profile, cfg, s.wave);
            detail::write_waves(dir, waves);
            out << "simulated " << waves.size() << " waves\n";
        } else if (command == "stats") {
            const auto panel = detail::load_interchange(s.panel);
            const auto curves = age_curves(panel, s.wave);
            const auto h = jdf(panel, default_age_edges(s.jdf_age_min, s.jdf_age_max),
                               default_income_edges(s.income_bins, s.income_lo, s.income_hi), !s.raw_counts, s.wave);
            const auto pyr = pyramid(panel);
            dir.write("curves.csv", [&](std::ostream &os) { write_curves(os, curves); });
            dir.write("jdf.csv", [&](std::ostream &os) { write_jdf_csv(os, h); });
            dir.write("jdf.json", [&](std::ostream &os) { os << jdf_to_json(h).dump() << '\n'; });
            dir.write("pyramid.csv", [&](std::ostream &os) { write_pyramid(os, pyr); });
            out << "wrote statistics for " << curves.size() << " ages\n";
        } else if (command == "pension") {
            const auto panel = detail::load_interchange(s.panel);
            if (s.alpha.empty()) throw ConfigError("--alpha needs at least one value");
            const auto pops = populations_of(panel);
            const auto series = sweep_alpha(pops, s.pension, s.alpha, s.retirement_age);
            dir.write("cashflow.csv", [&](std::ostream &os) { write_cashflow(os, series.front()); });
            if (series.size() > 1) {
                dir.write("cashflow_sweep.csv", [&](std::ostream &os) {
                    os << "alpha,wave,inflow,outflow,balance,pensioners,contributor_income\n";
                    for (std::size_t i = 0; i < series.size(); ++i)
                        for (const auto &p : series[i])
                            os << csv::format(s.alpha[i]) << ',' << p.wave << ',' << csv::format(p.inflow) << ','
                               << csv::format(p.outflow) << ',' << csv::format(p.balance) << ',' << p.pensioners
                               << ',' << csv::format(p.contributor_income) << '\n';
                });
            }
            out << "wrote cashflow for " << series.front().size() << " waves\n";
        }

        // Manifest carries no timestamps so reruns stay byte-identical.
        const auto options = detail::resolved_options(app, *sub);
        std::string canonical = command;
        for (const auto &[k, v] : options) canonical += "\n" + k + "=" + v;
        nlohmann::json manifest{{"command", command},
                                {"version", kVersion},
                                {"seed", s.seed},
                                {"config", options},
                                {"config_hash", detail::hex64(fnv1a64(canonical))},
                                {"outputs", dir.files()}};
        std::ofstream mf(dir.path() / "manifest.json", std::ios::binary);
        mf << manifest.dump(2) << '\n';
        if (!mf) throw DataError("cannot write manifest");
    } catch (const ConfigError &e) {
        err << "error: " << e.what() << '\n';
        return kConfigError;
    } catch (const EstimationError &e) {
        err << "error: " << e.what() << '\n';
        return kEstimationError;
    } catch (const std::exception &e) {
        err << "error: " << e.what() << '\n';
        return kDataError;
    }
    return kOk;
}

} // namespace incdyn::cli
