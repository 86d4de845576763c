#pragma once

#include <algorithm>
#include <cmath>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <tuple>
#include <unordered_map>
#include <utility>
#include <vector>

#include "core_model.hpp"
#include "csv.hpp"
#include "errors.hpp"
#include "random.hpp"

namespace incdyn {

/// One raw person-year observation, nominal currency.
struct IndividualRecord {
    std::string id;
    int year = 0;
    int age = 0;
    double income = 0.0;
    double weight = 1.0;
};

/// One cleaned person-year observation: deflated, natural-log income.
struct PanelRecord {
    std::string id;
    int year = 0;
    int age = 0;
    double log_income = 0.0;
    double weight = 1.0;

    friend bool operator==(const PanelRecord &, const PanelRecord &) = default;
};

/// Cleaned panel keyed by (id, year). Records keep insertion order.
class LogIncomePanel {
public:
    LogIncomePanel() = default;
    explicit LogIncomePanel(int base_year) : base_year_{base_year} {}

    /// Returns false (and does not insert) if (id, year) is already present.
    bool add(PanelRecord record) {
        if (!std::isfinite(record.log_income))
            throw DataError("non-finite log income for id " + record.id);
        if (!(record.weight >= 0.0)) throw DataError("negative weight for id " + record.id);
        if (!keys_.emplace(record.id, record.year).second) return false;
        records_.push_back(std::move(record));
        return true;
    }

    [[nodiscard]] const std::vector<PanelRecord> &records() const noexcept { return records_; }
    [[nodiscard]] std::size_t size() const noexcept { return records_.size(); }
    [[nodiscard]] bool empty() const noexcept { return records_.empty(); }
    [[nodiscard]] int base_year() const noexcept { return base_year_; }

    [[nodiscard]] std::vector<int> years() const {
        std::set<int> ys;
        for (const auto &r : records_) ys.insert(r.year);
        return {ys.begin(), ys.end()};
    }

    [[nodiscard]] std::vector<PanelRecord> wave(int year) const {
        std::vector<PanelRecord> out;
        for (const auto &r : records_)
            if (r.year == year) out.push_back(r);
        return out;
    }

    /// Ground truth used to generate a synthetic panel, if any.
    [[nodiscard]] const std::optional<AgeProfile> &truth() const noexcept { return truth_; }
    void set_truth(AgeProfile profile) { truth_ = std::move(profile); }

private:
    int base_year_ = 0;
    std::vector<PanelRecord> records_;
    std::set<std::pair<std::string, int>> keys_;
    std::optional<AgeProfile> truth_;
};

/// Year -> price index. Deflates nominal incomes into base-year units.
class DeflatorSeries {
public:
    DeflatorSeries() = default;

    DeflatorSeries(std::map<int, double> index, int base_year)
        : index_{std::move(index)}, base_year_{base_year} {
        for (const auto &[year, value] : index_)
            if (!(value > 0.0) || !std::isfinite(value))
                throw DataError("deflator index for " + std::to_string(year) + " must be positive");
        if (!index_.contains(base_year_))
            throw DataError("deflator has no entry for base year " + std::to_string(base_year_));
    }

    [[nodiscard]] int base_year() const noexcept { return base_year_; }
    [[nodiscard]] bool has(int year) const { return index_.contains(year); }

    /// Multiplier taking year-currency to base-year currency.
    [[nodiscard]] double factor(int year) const {
        auto it = index_.find(year);
        if (it == index_.end())
            throw DataError("deflator has no entry for year " + std::to_string(year));
        return index_.at(base_year_) / it->second;
    }

    /// Constant series over the given years: deflation is the identity.
    static DeflatorSeries constant(int first_year, int last_year, int base_year) {
        std::map<int, double> idx;
        for (int y = std::min(first_year, base_year); y <= std::max(last_year, base_year); ++y)
            idx[y] = 100.0;
        return DeflatorSeries{std::move(idx), base_year};
    }

private:
    std::map<int, double> index_;
    int base_year_ = 0;
};

/// Reads a two-column year,index CSV with a header row.
inline DeflatorSeries read_deflator(std::istream &in, int base_year) {
    std::string line;
    if (!csv::next_line(in, line)) throw DataError("deflator file is empty");
    csv::Header header{csv::split_line(line)};
    const auto year_col = header.require("year");
    const auto index_col = header.require("index");
    std::map<int, double> index;
    std::size_t row = 1;
    while (csv::next_line(in, line)) {
        ++row;
        auto fields = csv::split_line(line);
        if (fields.size() < header.size())
            throw DataError("deflator row " + std::to_string(row) + " has too few fields");
        auto year = csv::parse_int(fields[year_col]);
        auto value = csv::parse_double(fields[index_col]);
        if (!year || !value) throw DataError("deflator row " + std::to_string(row) + " is not numeric");
        index[static_cast<int>(*year)] = *value;
    }
    return DeflatorSeries{std::move(index), base_year};
}

struct ColumnMap {
    std::string id = "id";
    std::string year = "year";
    std::string age = "age";
    std::string income = "income";
    std::string weight = "weight";  ///< empty: every record gets weight 1
};

struct IngestConfig {
    ColumnMap columns;
    double floor_wage = 0.0;               ///< base-year currency
    std::vector<double> sentinel_codes;    ///< income values meaning "missing"
    std::vector<int> age_topcodes;         ///< ages that are top-coded bins
    std::optional<int> age_min;
    std::optional<int> age_max;
    std::optional<int> year;               ///< for single-wave files without a year column

    void validate() const {
        if (!(floor_wage >= 0.0)) throw ConfigError("floor_wage must be >= 0");
        std::vector<std::string> mapped{columns.id, columns.age, columns.income};
        if (!year) mapped.push_back(columns.year);
        if (!columns.weight.empty()) mapped.push_back(columns.weight);
        for (const auto &m : mapped)
            if (m.empty()) throw ConfigError("column mapping contains an empty name");
        std::set<std::string> distinct(mapped.begin(), mapped.end());
        if (distinct.size() != mapped.size()) throw ConfigError("mapped columns must be distinct");
        if (age_min && age_max && *age_min > *age_max)
            throw ConfigError("age_min must not exceed age_max");
    }
};

/// Drop reasons reported by load_panel.
namespace drop {
inline constexpr const char *kSentinel = "sentinel";
inline constexpr const char *kBelowFloor = "below floor";
inline constexpr const char *kTopcodedAge = "topcoded age";
inline constexpr const char *kAgeOutOfRange = "age out of range";
inline constexpr const char *kMissingDeflator = "missing deflator";
inline constexpr const char *kUnparseable = "unparseable";
inline constexpr const char *kDuplicate = "duplicate";
} // namespace drop

struct LoadResult {
    LogIncomePanel panel;
    std::map<std::string, std::size_t> drops;
    std::size_t rows_read = 0;

    [[nodiscard]] std::size_t dropped() const {
        std::size_t n = 0;
        for (const auto &[_, c] : drops) n += c;
        return n;
    }
};

/// Appends one raw record to a panel under the config's cleaning rules.
/// Returns the drop reason, or nullptr when the record was kept.
inline const char *clean_record(const IndividualRecord &rec, const IngestConfig &cfg,
                                const DeflatorSeries &deflator, LogIncomePanel &panel) {
    if (!std::isfinite(rec.income)) return drop::kUnparseable;
    for (double code : cfg.sentinel_codes)
        if (rec.income == code) return drop::kSentinel;
    if (std::find(cfg.age_topcodes.begin(), cfg.age_topcodes.end(), rec.age) != cfg.age_topcodes.end())
        return drop::kTopcodedAge;
    if (rec.age < 0 || (cfg.age_min && rec.age < *cfg.age_min) || (cfg.age_max && rec.age > *cfg.age_max))
        return drop::kAgeOutOfRange;
    if (!(rec.weight >= 0.0) || !std::isfinite(rec.weight)) return drop::kUnparseable;
    if (!deflator.has(rec.year)) return drop::kMissingDeflator;
    const double real_income = rec.income * deflator.factor(rec.year);
    // A zero floor still has to exclude non-positive incomes: log is undefined there.
    if (real_income < cfg.floor_wage || !(real_income > 0.0)) return drop::kBelowFloor;
    if (!panel.add({rec.id, rec.year, rec.age, std::log(real_income), rec.weight}))
        return drop::kDuplicate;
    return nullptr;
}

/// Reads survey microdata, deflates, filters and log-transforms it.
inline LoadResult load_panel(std::istream &in, const IngestConfig &cfg, const DeflatorSeries &deflator) {
    cfg.validate();
    std::string line;
    if (!csv::next_line(in, line)) throw DataError("input CSV is empty");
    csv::Header header{csv::split_line(line)};
    const auto id_col = header.require(cfg.columns.id);
    const auto age_col = header.require(cfg.columns.age);
    const auto income_col = header.require(cfg.columns.income);
    std::optional<std::size_t> year_col;
    if (!cfg.year) year_col = header.require(cfg.columns.year);
    std::optional<std::size_t> weight_col;
    if (!cfg.columns.weight.empty()) weight_col = header.require(cfg.columns.weight);

    LoadResult result{LogIncomePanel{deflator.base_year()}, {}, 0};
    while (csv::next_line(in, line)) {
        ++result.rows_read;
        auto fields = csv::split_line(line);
        auto field = [&](std::size_t col) -> std::string_view {
            return col < fields.size() ? std::string_view{fields[col]} : std::string_view{};
        };
        IndividualRecord rec;
        rec.id = std::string(csv::trim(field(id_col)));
        auto age = csv::parse_int(field(age_col));
        auto income = csv::parse_double(field(income_col));
        std::optional<long long> year = cfg.year ? std::optional<long long>{*cfg.year}
                                                 : csv::parse_int(field(*year_col));
        std::optional<double> weight = weight_col ? csv::parse_double(field(*weight_col))
                                                  : std::optional<double>{1.0};
        if (rec.id.empty() || !age || !year || !weight || !income) {
            ++result.drops[drop::kUnparseable];
            continue;
        }
        rec.age = static_cast<int>(*age);
        rec.year = static_cast<int>(*year);
        rec.income = *income;
        rec.weight = *weight;
        if (const char *reason = clean_record(rec, cfg, deflator, result.panel)) ++result.drops[reason];
    }
    return result;
}

/// Panel interchange format: id,year,age,log_income,weight.
inline void write_panel(std::ostream &out, const LogIncomePanel &panel) {
    out << "id,year,age,log_income,weight\n";
    for (const auto &r : panel.records())
        out << csv::escape(r.id) << ',' << r.year << ',' << r.age << ',' << csv::format(r.log_income) << ','
            << csv::format(r.weight) << '\n';
}

inline LogIncomePanel read_panel(std::istream &in) {
    std::string line;
    if (!csv::next_line(in, line)) throw DataError("panel file is empty");
    csv::Header header{csv::split_line(line)};
    const auto id_col = header.require("id");
    const auto year_col = header.require("year");
    const auto age_col = header.require("age");
    const auto y_col = header.require("log_income");
    const auto w_col = header.find("weight");
    LogIncomePanel panel;
    std::size_t row = 1;
    while (csv::next_line(in, line)) {
        ++row;
        auto fields = csv::split_line(line);
        if (fields.size() < header.size())
            throw DataError("panel row " + std::to_string(row) + " has too few fields");
        auto year = csv::parse_int(fields[year_col]);
        auto age = csv::parse_int(fields[age_col]);
        auto y = csv::parse_double(fields[y_col]);
        std::optional<double> w = w_col ? csv::parse_double(fields[*w_col]) : std::optional<double>{1.0};
        if (!year || !age || !y || !w || !std::isfinite(*y))
            throw DataError("panel row " + std::to_string(row) + " is malformed");
        if (!panel.add({fields[id_col], static_cast<int>(*year), static_cast<int>(*age), *y, *w}))
            throw DataError("panel row " + std::to_string(row) + " duplicates (id, year)");
    }
    return panel;
}

/// Consecutive-year observation of one individual.
struct TransitionPair {
    std::string id;
    int age = 0;  ///< age in the first year
    double y = 0.0;
    double y_next = 0.0;
};

/// Pairs (y_a, y_{a+1}) grouped by the starting age.
using TransitionSet = std::map<int, std::vector<std::pair<double, double>>>;

/// Pairs every record with the same id's record one year later at age + 1.
/// Output is sorted by (age, id, year).
inline std::vector<TransitionPair> make_transitions(const LogIncomePanel &panel) {
    std::unordered_map<std::string, std::map<int, const PanelRecord *>> by_id;
    for (const auto &r : panel.records()) by_id[r.id][r.year] = &r;

    std::vector<std::tuple<int, std::string, int, double, double>> rows;
    for (const auto &[id, years] : by_id) {
        for (const auto &[year, rec] : years) {
            auto next = years.find(year + 1);
            if (next != years.end() && next->second->age == rec->age + 1)
                rows.emplace_back(rec->age, id, year, rec->log_income, next->second->log_income);
        }
    }
    std::sort(rows.begin(), rows.end(), [](const auto &a, const auto &b) {
        return std::tie(std::get<0>(a), std::get<1>(a), std::get<2>(a)) <
               std::tie(std::get<0>(b), std::get<1>(b), std::get<2>(b));
    });
    std::vector<TransitionPair> out;
    out.reserve(rows.size());
    for (auto &[age, id, year, y, y1] : rows) out.push_back({std::move(id), age, y, y1});
    return out;
}

inline TransitionSet group_transitions(const std::vector<TransitionPair> &pairs) {
    TransitionSet set;
    for (const auto &p : pairs) set[p.age].emplace_back(p.y, p.y_next);
    return set;
}

/// Initial cross-section for one age in a synthetic panel.
struct InitialCohort {
    int age = 0;
    double mean = 0.0;
    double std_dev = 0.0;
    std::size_t count = 0;
};

namespace detail {
inline constexpr std::uint64_t kInitialDrawTag = 0x1a2b3c4d5e6f7788ULL;
} // namespace detail

/// Builds a unit-weight panel by drawing wave 1 from N(mean_a, std_a) and
/// evolving it with `step`. Agents leave once they reach profile.a_max().
inline LogIncomePanel generate_synthetic_panel(const AgeProfile &profile,
                                               const std::vector<InitialCohort> &initial, int waves,
                                               const NoiseSpec &noise, int start_year = 1991) {
    if (waves < 2) throw ConfigError("synthetic panel needs at least 2 waves");
    for (const auto &c : initial) {
        if (c.count == 0) throw ConfigError("initial cohort count must be positive");
        if (c.age < profile.a_min() || c.age > profile.a_max())
            throw AgeRangeError("initial cohort age " + std::to_string(c.age) + " outside profile range");
        if (!(c.std_dev >= 0.0) || !std::isfinite(c.mean))
            throw ConfigError("initial cohort moments must be finite with std >= 0");
    }

    LogIncomePanel panel{start_year};
    std::vector<Agent> agents;
    for (const auto &c : initial) {
        for (std::size_t k = 0; k < c.count; ++k) {
            Agent a{"a" + std::to_string(c.age) + "n" + std::to_string(k), c.age, 0.0};
            a.log_income = c.mean + c.std_dev * noise.normal(fnv1a64(a.id), detail::kInitialDrawTag);
            agents.push_back(std::move(a));
        }
    }
    for (int w = 0; w < waves; ++w) {
        const int year = start_year + w;
        if (w > 0) {
            std::vector<Agent> next;
            next.reserve(agents.size());
            for (auto &a : agents) {
                if (!profile.covers(a.age)) continue;
                const double eta = noise.normal(fnv1a64(a.id), static_cast<std::uint64_t>(year));
                a.log_income = step(a.log_income, a.age, profile, eta);
                ++a.age;
                next.push_back(std::move(a));
            }
            agents = std::move(next);
        }
        for (const auto &a : agents) panel.add({a.id, year, a.age, a.log_income, 1.0});
    }
    panel.set_truth(profile);
    return panel;
}

} // namespace incdyn
