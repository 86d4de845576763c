#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "incdyn/cli.hpp"

namespace fs = std::filesystem;
using namespace incdyn;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result invoke(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

std::string slurp(const fs::path &p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

class CliTest : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() /
               ("incdyn_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    [[nodiscard]] std::string path(const std::string &name) const { return (dir_ / name).string(); }

    fs::path dir_;
};

} // namespace

TEST_F(CliTest, UnknownSubcommandIsConfigError) {
    auto r = invoke({"frobnicate"});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("Usage"), std::string::npos);
    EXPECT_EQ(invoke({}).code, 1);
}

TEST_F(CliTest, SynthThenLsmCalibrationRecoversTruth) {
    ASSERT_EQ(invoke({"synth", "--out", path("synth"), "--seed", "5", "--age-min", "30", "--age-max", "40",
                      "--agents-per-age", "1500", "--waves", "6"})
                  .code,
              0);
    auto r = invoke({"calibrate", "--method", "lsm", "--panel", path("synth/panel.csv"), "--bootstrap", "50",
                     "--out", path("cal")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream tin(path("synth/truth_profile.csv")), pin(path("cal/profile.csv"));
    auto truth = read_profile(tin);
    auto fitted = read_profile(pin);
    for (int a = 30; a < 40; ++a) {
        EXPECT_NEAR(fitted.q(a), truth.q(a), 0.1) << a;
        EXPECT_NEAR(fitted.mu(a), truth.mu(a), 1.0) << a;
        EXPECT_NEAR(fitted.sigma(a), truth.sigma(a), 0.03) << a;
    }
    EXPECT_TRUE(fs::exists(path("cal/report.csv")));
    auto manifest = nlohmann::json::parse(slurp(path("cal/manifest.json")));
    EXPECT_EQ(manifest["command"], "calibrate");
    EXPECT_EQ(manifest["seed"], 1);
    EXPECT_EQ(manifest["config"]["method"], "lsm");
    EXPECT_EQ(manifest["config_hash"].get<std::string>().size(), 16u);
}

TEST_F(CliTest, GmmWritesDiagnostics) {
    ASSERT_EQ(invoke({"synth", "--out", path("s"), "--age-min", "30", "--age-max", "35", "--agents-per-age", "200",
                      "--waves", "3"})
                  .code,
              0);
    auto r = invoke({"calibrate", "--method", "gmm", "--panel", path("s/panel.csv"), "--out", path("g")});
    ASSERT_EQ(r.code, 0) << r.err;
    auto diag = nlohmann::json::parse(slurp(path("g/diagnostics.json")));
    EXPECT_EQ(diag["method"], "gmm");
    EXPECT_FALSE(diag["ages"].empty());
    EXPECT_TRUE(diag["ages"][0].contains("candidate_roots"));
}

TEST_F(CliTest, SimulateOneWaveEqualsBootstrapWave) {
    ASSERT_EQ(invoke({"synth", "--out", path("s"), "--age-min", "25", "--age-max", "40", "--agents-per-age", "20",
                      "--waves", "3"})
                  .code,
              0);
    ASSERT_EQ(invoke({"simulate", "--panel", path("s/panel.csv"), "--profile", path("s/truth_profile.csv"),
                      "--waves", "1", "--out", path("sim")})
                  .code,
              0);
    std::ifstream sp(path("s/panel.csv")), wp(path("sim/waves.csv"));
    auto panel = read_panel(sp);
    auto sim = read_panel(wp);
    EXPECT_EQ(sim.records(), panel.wave(1991));
}

TEST_F(CliTest, ConfigFileAndOverrides) {
    {
        std::ofstream cfg(path("run.cfg"));
        cfg << "# synthetic run\nseed = 11\nage_min = 30\nage-max = 33\nagents_per_age = 10\nwaves = 4\n"
            << "out = " << path("from_cfg") << "\n";
    }
    ASSERT_EQ(invoke({"--config", path("run.cfg"), "synth"}).code, 0);
    auto m1 = nlohmann::json::parse(slurp(path("from_cfg/manifest.json")));
    EXPECT_EQ(m1["seed"], 11);
    EXPECT_EQ(m1["config"]["waves"], "4");

    ASSERT_EQ(invoke({"--config", path("run.cfg"), "synth", "--waves", "2", "--out", path("cli")}).code, 0);
    auto m2 = nlohmann::json::parse(slurp(path("cli/manifest.json")));
    EXPECT_EQ(m2["config"]["waves"], "2");
    EXPECT_NE(m1["config_hash"], m2["config_hash"]);
}

TEST_F(CliTest, UnknownConfigKeyRejected) {
    {
        std::ofstream cfg(path("bad.cfg"));
        cfg << "seed = 1\nbogus = 3\n";
    }
    auto r = invoke({"--config", path("bad.cfg"), "synth", "--out", path("x")});
    EXPECT_EQ(r.code, 1);
    EXPECT_NE(r.err.find("bogus"), std::string::npos);
}

TEST_F(CliTest, ExitCodes) {
    EXPECT_EQ(invoke({"calibrate", "--panel", path("missing.csv"), "--out", path("o")}).code, 2);
    EXPECT_EQ(invoke({"calibrate", "--method", "ols", "--panel", path("p.csv")}).code, 1);
    {
        std::ofstream p(path("cross.csv"));
        p << "id,year,age,log_income,weight\na,2000,30,9,1\nb,2001,31,9,1\n";
    }
    EXPECT_EQ(invoke({"calibrate", "--panel", path("cross.csv"), "--out", path("o")}).code, 3);
    {
        std::ofstream p(path("bad.csv"));
        p << "id,year,age,log_income,weight\na,2000,thirty,9,1\n";
    }
    EXPECT_EQ(invoke({"stats", "--panel", path("bad.csv"), "--out", path("o")}).code, 2);
}

TEST_F(CliTest, IngestStatsPensionPipeline) {
    {
        std::ofstream raw(path("raw.csv"));
        raw << "PID,YEAR,AGE,INCWAGE,ASECWT\n"
            << "1,1999,30,20000,1.5\n2,1999,70,15000,1.0\n3,1999,45,-9,1.0\n"
            << "1,2000,31,21000,1.5\n2,2000,71,15000,1.0\n4,2000,50,500,1.0\n";
        std::ofstream defl(path("cpi.csv"));
        defl << "year,index\n1999,95\n2000,100\n";
    }
    auto r = invoke({"ingest", "--input", path("raw.csv"), "--deflator", path("cpi.csv"), "--base-year", "2000",
                     "--floor-wage", "1000", "--col-id", "PID", "--col-year", "YEAR", "--col-age", "AGE",
                     "--col-income", "INCWAGE", "--col-weight", "ASECWT", "--sentinels", "-9,-8", "--out",
                     path("ing")});
    ASSERT_EQ(r.code, 0) << r.err;
    std::ifstream pin(path("ing/panel.csv"));
    auto panel = read_panel(pin);
    EXPECT_EQ(panel.size(), 4u);
    EXPECT_EQ(slurp(path("ing/drops.csv")), "reason,count\nbelow floor,1\nsentinel,1\n");

    ASSERT_EQ(invoke({"stats", "--panel", path("ing/panel.csv"), "--out", path("st")}).code, 0);
    for (auto f : {"curves.csv", "jdf.csv", "jdf.json", "pyramid.csv", "manifest.json"})
        EXPECT_TRUE(fs::exists(path("st/") + f)) << f;

    ASSERT_EQ(invoke({"pension", "--panel", path("ing/panel.csv"), "--alpha", "0.1,0.2", "--out", path("pen")}).code,
              0);
    const auto cash = slurp(path("pen/cashflow.csv"));
    EXPECT_EQ(cash.substr(0, cash.find('\n')), "wave,inflow,outflow,balance,pensioners,contributor_income");
    EXPECT_NE(cash.find(",16368,"), std::string::npos);
    EXPECT_TRUE(fs::exists(path("pen/cashflow_sweep.csv")));
}
