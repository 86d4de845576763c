#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "incdyn/calibrate_gmm.hpp"
#include "incdyn/synthetic.hpp"
#include "oracles.hpp"

using namespace incdyn;

namespace {

struct Obs {
    int age;
    double log_income;
    double weight;
};

WaveMoments two_ages(const oracle::PlainMoments &now, const oracle::PlainMoments &next, double n = 100.0) {
    WaveMoments w;
    w.by_age[30] = {now.mean, now.std_dev, now.m3, n, n};
    w.by_age[31] = {next.mean, next.std_dev, next.m3, n, n};
    return w;
}

/// Exact product population: every y_i combined with eta = -1 and +1, which
/// has E[eta] = E[eta^3] = 0 and E[eta^2] = 1 exactly.
std::pair<std::vector<double>, std::vector<double>> product_population(const std::vector<double> &ys, double q,
                                                                       double mu, double sigma) {
    std::vector<double> now, next;
    for (double y : ys) {
        for (double eta : {-1.0, 1.0}) {
            now.push_back(y);
            next.push_back(q * y + mu + sigma * eta);
        }
    }
    return {now, next};
}

std::vector<double> skewed_sample(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 gen{seed};
    std::exponential_distribution<double> e{2.0};
    std::vector<double> ys(n);
    for (auto &y : ys) y = 9.0 + e(gen);
    return ys;
}

WaveMoments moments_from(const std::vector<double> &now, const std::vector<double> &next) {
    std::vector<Obs> obs;
    for (double y : now) obs.push_back({30, y, 1.0});
    for (double y : next) obs.push_back({31, y, 1.0});
    return moments_of(obs);
}

} // namespace

TEST(WaveMoments, Singleton) {
    auto m = moments_of(std::vector<Obs>{{30, 2.0, 1.0}});
    const auto &a = m.by_age.at(30);
    EXPECT_DOUBLE_EQ(a.mean, 2.0);
    EXPECT_DOUBLE_EQ(a.std_dev, 0.0);
    EXPECT_DOUBLE_EQ(a.m3, 8.0);
    EXPECT_DOUBLE_EQ(a.n, 1.0);
}

TEST(WaveMoments, SymmetricPair) {
    auto m = moments_of(std::vector<Obs>{{30, -1.0, 1.0}, {30, 1.0, 1.0}});
    const auto &a = m.by_age.at(30);
    EXPECT_DOUBLE_EQ(a.mean, 0.0);
    EXPECT_DOUBLE_EQ(a.std_dev, 1.0);
    EXPECT_DOUBLE_EQ(a.m3, 0.0);
}

// Hand computation: mean (0*3 + 4)/4 = 1, var (3*1 + 9)/4 = 3, E[y^3] = 64/4 = 16.
TEST(WaveMoments, WeightedPair) {
    auto m = moments_of(std::vector<Obs>{{30, 0.0, 3.0}, {30, 4.0, 1.0}});
    const auto &a = m.by_age.at(30);
    EXPECT_NEAR(a.mean, 1.0, 1e-15);
    EXPECT_NEAR(a.std_dev, std::sqrt(3.0), 1e-15);
    EXPECT_NEAR(a.m3, 16.0, 1e-13);
    EXPECT_NEAR(a.n, 16.0 / 10.0, 1e-15);
}

TEST(WaveMoments, ZeroWeightAgeAbsent) {
    auto m = moments_of(std::vector<Obs>{{30, 1.0, 0.0}, {31, 1.0, 1.0}});
    EXPECT_EQ(m.find(30), nullptr);
    EXPECT_NE(m.find(31), nullptr);
}

TEST(WaveMoments, MatchesPlainMoments) {
    auto ys = skewed_sample(5000, 3);
    std::vector<Obs> obs;
    for (double y : ys) obs.push_back({40, y, 1.0});
    const auto &got = moments_of(obs).by_age.at(40);
    const auto want = oracle::plain_moments(ys);
    EXPECT_NEAR(got.mean, want.mean, 1e-12);
    EXPECT_NEAR(got.std_dev, want.std_dev, 1e-12);
    EXPECT_NEAR(got.m3, want.m3, 1e-9 * want.m3);
}

TEST(PoolMoments, IdentityAndAverage) {
    WaveMoments w1, w2;
    w1.by_age[30] = {9.0, 1.0, 700.0, 10.0, 10.0};
    w2.by_age[30] = {11.0, 2.0, 1300.0, 20.0, 20.0};
    w2.by_age[31] = {12.0, 1.0, 1700.0, 5.0, 5.0};
    auto one = pool_moments({w1});
    EXPECT_DOUBLE_EQ(one.by_age.at(30).mean, 9.0);
    EXPECT_DOUBLE_EQ(one.by_age.at(30).m3, 700.0);
    auto both = pool_moments({w1, w2});
    EXPECT_DOUBLE_EQ(both.by_age.at(30).mean, 10.0);
    EXPECT_DOUBLE_EQ(both.by_age.at(30).std_dev, 1.5);
    EXPECT_DOUBLE_EQ(both.by_age.at(30).m3, 1000.0);
    EXPECT_DOUBLE_EQ(both.by_age.at(30).n, 30.0);
    EXPECT_DOUBLE_EQ(both.by_age.at(31).mean, 12.0);  // present in one wave only
    EXPECT_EQ(both.find(32), nullptr);
    EXPECT_THROW(pool_moments({}), ConfigError);
}

// 18 stationary waves: pooled moments sit within 4 standard errors of the
// generator's per-age truth.
TEST(PoolMoments, StationarySyntheticWaves) {
    auto profile = smooth_stationary_profile(25, 45);
    const std::size_t n = 4000;
    auto cohorts = consistent_cohorts(profile, 10.0, ar1_stationary_std(profile), n);
    auto panel = generate_synthetic_panel(profile, cohorts, 18, NoiseSpec{12});
    auto pooled = pooled_panel_moments(panel);
    for (const auto &c : cohorts) {
        const auto *m = pooled.find(c.age);
        ASSERT_NE(m, nullptr);
        // Pooled over up to 18 correlated waves; a single wave's SE is the conservative bound.
        const double se = c.std_dev / std::sqrt(static_cast<double>(n));
        EXPECT_NEAR(m->mean, c.mean, 4.0 * se) << "age " << c.age;
        EXPECT_NEAR(m->std_dev, c.std_dev, 4.0 * c.std_dev / std::sqrt(2.0 * n)) << "age " << c.age;
    }
}

// The library cubic, evaluated anywhere, equals the term-by-term expansion
// of the third-moment condition.
TEST(CubicForAge, MatchesDirectIdentityEvaluation) {
    std::mt19937_64 gen{31};
    std::uniform_real_distribution<double> mean(-3.0, 3.0), sd(0.1, 2.0), m3(-20.0, 20.0), qd(-2.0, 2.0);
    for (int trial = 0; trial < 50; ++trial) {
        oracle::PlainMoments a{mean(gen), sd(gen), m3(gen)}, b{mean(gen), sd(gen), m3(gen)};
        const auto cubic = cubic_for_age(two_ages(a, b), 30);
        for (int k = 0; k < 100; ++k) {
            const double q = qd(gen);
            const double direct = oracle::third_moment_gap(a.mean, a.std_dev, a.m3, b.mean, b.std_dev, b.m3, q);
            const double scale = std::max({1.0, std::fabs(a.m3), std::fabs(b.m3), std::fabs(direct)});
            EXPECT_NEAR(cubic(q), direct, 1e-9 * scale);
        }
    }
}

TEST(CubicForAge, PlantedParameterIsRoot) {
    const double q = 0.6, mu = 3.5, sigma = 0.4;
    auto [now, next] = product_population(skewed_sample(2000, 17), q, mu, sigma);
    const auto pooled = moments_from(now, next);
    const auto cubic = cubic_for_age(pooled, 30);
    const double scale = std::fabs(pooled.by_age.at(31).m3);
    EXPECT_LE(std::fabs(cubic(q)), 1e-10 * scale);
}

TEST(CubicForAge, InsufficientData) {
    WaveMoments w;
    w.by_age[30] = {1.0, 0.5, 2.0, 1.0, 1.0};
    w.by_age[31] = {1.0, 0.5, 2.0, 50.0, 50.0};
    EXPECT_THROW(cubic_for_age(w, 30), EstimationError);
    EXPECT_THROW(cubic_for_age(w, 31), EstimationError);
}

TEST(EstimateGmm, RecoversPlantedParametersExactly) {
    const double q = 0.45, mu = 5.2, sigma = 0.3;
    auto [now, next] = product_population(skewed_sample(3000, 23), q, mu, sigma);
    const auto result = estimate_gmm(moments_from(now, next), 30, 31);
    ASSERT_TRUE(result.profile.has(30));
    EXPECT_NEAR(result.profile.q(30), q, 1e-9);
    EXPECT_NEAR(result.profile.mu(30), mu, 1e-8);
    EXPECT_NEAR(result.profile.sigma(30), sigma, 1e-8);
    EXPECT_EQ(result.diagnostics[0].candidates.size(), 1u);
    EXPECT_LT(result.diagnostics[0].max_relative_residual, 1e-12);
}

TEST(EstimateGmm, PointMassIsDegenerate) {
    WaveMoments w;
    const double m = 9.0;
    for (int a = 30; a <= 33; ++a) w.by_age[a] = {m, 0.0, m * m * m, 100.0, 100.0};
    const auto result = estimate_gmm(w, 30, 33);
    for (int a = 30; a < 33; ++a) {
        ASSERT_TRUE(result.profile.has(a));
        const double q = result.profile.q(a), mu = result.profile.mu(a);
        EXPECT_DOUBLE_EQ(q * m + mu, m);
        EXPECT_DOUBLE_EQ(result.profile.sigma(a), 0.0);
        EXPECT_TRUE(result.profile.flags(a) & kFlagUnidentified);
        const auto r = moment_residuals(w.by_age[a], w.by_age[a + 1], q, mu, 0.0);
        EXPECT_EQ(r.mean, 0.0);
        EXPECT_EQ(r.variance, 0.0);
        EXPECT_NEAR(r.third, 0.0, 1e-12 * m * m * m);
    }
}

TEST(EstimateGmm, SigmaClampFlagged) {
    // kappa_a = 2, kappa_{a+1} = 2 -> q = 1; std_{a+1}^2 = 0.25 < q^2 std_a^2 = 1.
    oracle::PlainMoments a{0.0, 1.0, 2.0}, b{0.5, 0.5, 2.0 + 0.125 + 3.0 * 0.5 * 0.25};
    const auto result = estimate_gmm(two_ages(a, b), 30, 31);
    ASSERT_TRUE(result.profile.has(30));
    EXPECT_NEAR(result.profile.q(30), 1.0, 1e-12);
    EXPECT_EQ(result.profile.sigma(30), 0.0);
    EXPECT_TRUE(result.profile.flags(30) & kFlagSigmaClamped);
    EXPECT_LT(result.diagnostics[0].sigma2_raw, 0.0);
}

TEST(EstimateGmm, NoRootMarksMissing) {
    // Symmetric age a, skewed age a+1: kappa_a = 0 but kappa_{a+1} != 0.
    oracle::PlainMoments a{0.0, 1.0, 0.0}, b{0.0, 1.0, 1.0};
    const auto result = estimate_gmm(two_ages(a, b), 30, 31);
    EXPECT_FALSE(result.profile.has(30));
    EXPECT_FALSE(result.diagnostics[0].error.empty());
    WaveMoments gap;
    gap.by_age[30] = {1.0, 1.0, 5.0, 10.0, 10.0};
    const auto missing = estimate_gmm(gap, 30, 31);
    EXPECT_FALSE(missing.profile.has(30));
}

TEST(SelectRoot, PrefersNonNegativeVarianceThenPlausibleRange) {
    AgeMoments now{0.0, 1.0, 0.0, 10, 10}, next{0.0, 1.0, 0.0, 10, 10};
    // q = 3 needs sigma^2 = 1 - 9 < 0; q = -0.5 and 0.5 are both admissible.
    EXPECT_DOUBLE_EQ(select_root({-0.5, 0.5, 3.0}, now, next), 0.5);
    EXPECT_DOUBLE_EQ(select_root({-0.2, 0.9}, now, next), 0.9);
    EXPECT_DOUBLE_EQ(select_root({-0.3, -0.2}, now, next), -0.2);
    EXPECT_DOUBLE_EQ(select_root({2.0, 3.0}, now, next), 2.0);
}

// Root residual and quadratic-consistency properties on exact populations.
TEST(EstimateGmm, ResidualAndQuadraticConsistency) {
    std::mt19937_64 gen{41};
    std::uniform_real_distribution<double> qd(-0.9, 1.05), mud(-2.0, 8.0), sd(0.05, 0.8);
    for (int trial = 0; trial < 40; ++trial) {
        const double q = qd(gen), mu = mud(gen), sigma = sd(gen);
        auto [now, next] = product_population(skewed_sample(400, 100 + trial), q, mu, sigma);
        const auto pooled = moments_from(now, next);
        const auto result = estimate_gmm(pooled, 30, 31);
        ASSERT_TRUE(result.profile.has(30));
        const double qh = result.profile.q(30), sh = result.profile.sigma(30);
        const auto &a = pooled.by_age.at(30);
        const auto &b = pooled.by_age.at(31);
        EXPECT_FALSE(result.profile.flags(30) & kFlagSigmaClamped);
        EXPECT_LT(moment_residuals(a, b, qh, result.profile.mu(30), sh).max_relative(b), 1e-9);
        const double qt = std::sqrt(std::max(0.0, b.std_dev * b.std_dev - sh * sh)) / a.std_dev;
        EXPECT_NEAR(std::fabs(qh), qt, 1e-7);
    }
}

TEST(EstimateGmm, InvariantUnderRecordDuplication) {
    auto [now, next] = product_population(skewed_sample(500, 5), 0.7, 3.0, 0.2);
    std::vector<Obs> once, twice;
    for (double y : now) once.push_back({30, y, 1.0});
    for (double y : next) once.push_back({31, y, 1.0});
    for (const auto &o : once) {
        twice.push_back(o);
        twice.push_back(o);
    }
    const auto r1 = estimate_gmm(moments_of(once), 30, 31);
    const auto r2 = estimate_gmm(moments_of(twice), 30, 31);
    EXPECT_NEAR(r1.profile.q(30), r2.profile.q(30), 1e-12);
    EXPECT_NEAR(r1.profile.mu(30), r2.profile.mu(30), 1e-10);
    EXPECT_NEAR(r1.profile.sigma(30), r2.profile.sigma(30), 1e-10);
}

// A skewed entry cohort keeps the third-moment condition informative, so
// q is identified on simulated data.
TEST(EstimateGmm, SkewedSyntheticRecovery) {
    const double q = 0.8, mu = 2.0, sigma = 0.3;
    const std::size_t n = 200'000;
    std::mt19937_64 gen{77};
    std::exponential_distribution<double> e{1.0};
    const NoiseSpec noise{78};
    std::vector<Obs> obs;
    for (std::size_t i = 0; i < n; ++i) {
        const double y = 9.0 + e(gen);
        obs.push_back({30, y, 1.0});
        obs.push_back({31, q * y + mu + sigma * noise.normal(i), 1.0});
    }
    const auto result = estimate_gmm(moments_of(obs), 30, 31);
    ASSERT_TRUE(result.profile.has(30));
    EXPECT_NEAR(result.profile.q(30), q, 0.05);
    EXPECT_NEAR(result.profile.mu(30), mu, 0.5);
    EXPECT_NEAR(result.profile.sigma(30), sigma, 0.05);
}
