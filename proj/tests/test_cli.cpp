#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "cli_app.hpp"

namespace fs = std::filesystem;
using namespace semipar;
using namespace semipar::cli;

namespace {

struct Outcome {
  int code = -1;
  std::string out;
  std::string err;
};

Outcome invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "semipar");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Outcome o;
  o.code = run(static_cast<int>(argv.size()), argv.data(), out, err);
  o.out = out.str();
  o.err = err.str();
  return o;
}

class CliTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("semipar_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  std::string write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p) << text;
    return p.string();
  }
  std::string read(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
  }

  fs::path dir_;
};

const char* kFlatTop = R"({
  "object": {"type": "flat_top", "theta0": 1, "delta": 0.1},
  "psf": {"type": "gaussian", "tau": 10000},
  "measurement": "spade",
  "estimand": {"indices": [2]},
  "trials": 50,
  "seed": 11
})";

std::vector<std::vector<std::string>> parse_csv(const std::string& text) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(text);
  for (std::string line; std::getline(in, line);) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    for (std::string cell; std::getline(ls, cell, ',');) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

}  // namespace

TEST(FormatDouble, RoundTrips) {
  for (double v : {0.1, 1.0 / 3.0, 3.3345833333333347e-07, -2.5e300, 6.02e23}) {
    EXPECT_EQ(std::stod(format_double(v)), v);
  }
  EXPECT_EQ(dump_json(json{{"x", 0.1}}).find("0.10000000000000001") != std::string::npos, true);
}

TEST_F(CliTest, CrbSpadeRow) {
  const auto cfg = write("c.json", kFlatTop);
  const Outcome o = invoke({"crb", "--config", cfg});
  ASSERT_EQ(o.code, 0) << o.err;
  const json j = json::parse(o.out);
  ASSERT_EQ(j["rows"].size(), 1u);
  EXPECT_EQ(j["rows"][0]["method"], "spade");
  EXPECT_EQ(j["rows"][0]["k"], 2);
  EXPECT_NEAR(j["rows"][0]["crb"].get<double>(), 3.33458e-7, 5e-12);
  EXPECT_NEAR(j["rows"][0]["constrained_crb"].get<double>(), 3.33389e-7, 5e-12);
}

TEST_F(CliTest, CrbZerothMomentBothMethods) {
  json c = json::parse(kFlatTop);
  c["measurement"] = "both";
  c["estimand"]["indices"] = {0, 2};
  c["output"] = {{"format", "csv"}};
  const Outcome o = invoke({"crb", "--config", write("c.json", c.dump())});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = parse_csv(o.out);
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"method", "k", "crb", "constrained_crb"}));
  EXPECT_EQ(rows[1][0], "direct");
  EXPECT_EQ(std::stod(rows[1][2]), 1e-4);
  EXPECT_EQ(rows[1].size(), 3u);  // empty constrained cell for u0 != 0
  EXPECT_NEAR(std::stod(rows[2][2]), 1e-4, 1e-16);  // mode sum truncated at Q
  EXPECT_NEAR(std::stod(rows[3][2]), 2.003335e-4, 5e-11);
}

TEST_F(CliTest, ConfigErrorsNameTheField) {
  struct Case {
    std::string patch;
    std::string field;
  };
  const std::vector<Case> cases{
      {R"({"psf": {"type": "gaussian", "tau": -1}})", "psf.tau"},
      {R"({"object": {"type": "flat_top", "theta0": 1, "delta": -0.5}})", "object.delta"},
      {R"({"object": {"type": "disk"}})", "object.type"},
      {R"({"estimand": {"indices": []}})", "estimand.indices"},
      {R"({"estimand": {"indices": [2, -1]}})", "estimand.indices[1]"},
      {R"({"trials": -3})", "trials"},
      {R"({"output": {"format": "xml"}})", "output.format"},
      {R"({"truncation": {"Q": 99999}})", "truncation.Q"},
      {R"({"measurement": "quantum"})", "measurement"},
  };
  for (const auto& c : cases) {
    json cfg = json::parse(kFlatTop);
    cfg.merge_patch(json::parse(c.patch));
    const Outcome o = invoke({"crb", "--config", write("c.json", cfg.dump())});
    EXPECT_EQ(o.code, 2) << c.field;
    EXPECT_NE(o.err.find(c.field), std::string::npos) << o.err;
  }
}

TEST_F(CliTest, MalformedAndMissingInputs) {
  EXPECT_EQ(invoke({"crb", "--config", write("bad.json", "{\"object\": ")}).code, 2);
  EXPECT_EQ(invoke({"crb", "--config", (dir_ / "absent.json").string()}).code, 2);
  EXPECT_EQ(invoke({"crb"}).code, 2);
  EXPECT_EQ(invoke({"frobnicate"}).code, 2);
  EXPECT_EQ(invoke({}).code, 2);
}

TEST_F(CliTest, NumericalFailureExitsThree) {
  // a far-off source needs more modes than the configured truncation
  json cfg = json::parse(kFlatTop);
  cfg["object"] = {{"type", "point_sources"}, {"positions", {10.0}}, {"weights", {1.0}}};
  cfg["truncation"] = {{"Q", 3}};
  const Outcome o = invoke({"crb", "--config", write("c.json", cfg.dump())});
  EXPECT_EQ(o.code, 3) << o.err;
}

TEST_F(CliTest, SimulateZeroTrialsIsConfigError) {
  const auto cfg = write("c.json", kFlatTop);
  const Outcome o = invoke({"simulate", "--config", cfg, "--trials", "0"});
  EXPECT_EQ(o.code, 2);
  EXPECT_NE(o.err.find("trials"), std::string::npos);
}

TEST_F(CliTest, SimulateIsByteIdenticalAndRoundTrips) {
  const auto cfg = write("c.json", kFlatTop);
  const std::string a = (dir_ / "a.json").string();
  ASSERT_EQ(invoke({"simulate", "--config", cfg, "--out", a}).code, 0);
  const std::string text = read(a);
  fs::remove(a);
  ASSERT_EQ(invoke({"simulate", "--config", cfg, "--out", a}).code, 0);
  EXPECT_FALSE(text.empty());
  EXPECT_EQ(text, read(a));

  const json j = json::parse(text);
  const TrialReport r = parse_trial_report(j);
  EXPECT_EQ(r.trials, 50u);
  EXPECT_EQ(r.master_seed, 11u);
  EXPECT_EQ(r.seeds.size(), 50u);
  EXPECT_EQ(j["method"], "spade");
  // the emitted report equals a direct library run, bit for bit
  const RunConfig rc = parse_run_config(j["config"]);
  const TrialReport direct = run_trials(
      TrialConfig{rc.model(), rc.point_spread(), Measurement::spade, rc.estimands()[0], rc.trials, rc.seed, std::nullopt},
      1);
  EXPECT_TRUE(r == direct);
  EXPECT_EQ(to_json(parse_run_config(to_json(rc))), to_json(rc));
}

TEST_F(CliTest, SimulateOverridesAndCsv) {
  json c = json::parse(kFlatTop);
  c["output"] = {{"format", "csv"}};
  const auto cfg = write("c.json", c.dump());
  const Outcome o = invoke({"simulate", "--config", cfg, "--seed", "99", "--trials", "20"});
  ASSERT_EQ(o.code, 0) << o.err;
  const auto rows = parse_csv(o.out);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].front(), "method");
  EXPECT_EQ(rows[1][0], "spade");
  EXPECT_EQ(rows[1][1], "20");
  EXPECT_EQ(rows[1].back(), "99");
}

TEST_F(CliTest, SimulateRejectsOddSpade) {
  json c = json::parse(kFlatTop);
  c["estimand"]["indices"] = {1};
  EXPECT_EQ(invoke({"simulate", "--config", write("c.json", c.dump())}).code, 2);
}

TEST_F(CliTest, ReproduceFig3Shape) {
  const std::string path = (dir_ / "fig3.csv").string();
  ASSERT_EQ(invoke({"reproduce-fig3", "--delta-min", "0.01", "--delta-max", "3", "--points", "61", "--out", path}).code, 0);
  const auto rows = parse_csv(read(path));
  ASSERT_EQ(rows.size(), 62u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"delta", "crb_direct", "crb_spade"}));
  // direct flattens to 2 theta0^2 / N at small delta
  EXPECT_NEAR(std::stod(rows[1][1]) / 2e-4, 1.0, 0.01);
  // SPADE slope over the bottom decade: grid is log-spaced so index 21 sits at 0.1
  std::vector<double> lx, ly;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const double d = std::stod(rows[i][0]);
    if (d > 0.1 * (1 + 1e-12)) break;
    lx.push_back(std::log(d));
    ly.push_back(std::log(std::stod(rows[i][2])));
  }
  ASSERT_GE(lx.size(), 10u);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) mx += lx[i], my += ly[i];
  mx /= lx.size();
  my /= ly.size();
  double sxy = 0, sxx = 0;
  for (std::size_t i = 0; i < lx.size(); ++i) sxy += (lx[i] - mx) * (ly[i] - my), sxx += (lx[i] - mx) * (lx[i] - mx);
  EXPECT_NEAR(sxy / sxx, 2.0, 0.05);
}

TEST_F(CliTest, ReproduceFig3BadRange) {
  EXPECT_EQ(invoke({"reproduce-fig3", "--delta-min", "0.5", "--delta-max", "0.1"}).code, 2);
  EXPECT_EQ(invoke({"reproduce-fig3", "--delta-min", "0"}).code, 2);
  EXPECT_EQ(invoke({"reproduce-fig3", "--points", "1"}).code, 2);
}

TEST_F(CliTest, CompareReportsMonotoneGap) {
  json c = json::parse(kFlatTop);
  c["compare"] = {{"delta_min", 0.01}, {"delta_max", 3.0}, {"points", 12}};
  const Outcome o = invoke({"compare", "--config", write("c.json", c.dump())});
  ASSERT_EQ(o.code, 0) << o.err;
  const json j = json::parse(o.out);
  EXPECT_EQ(j["rows"].size(), 12u);
  EXPECT_TRUE(j["gap_monotone"].get<bool>());
  c.erase("compare");
  const json single = json::parse(invoke({"compare", "--config", write("d.json", c.dump())}).out);
  EXPECT_NEAR(single["rows"][0]["ratio"].get<double>(), 600.8, 0.05);
}

TEST(ThreadCount, ReadsEnvironment) {
  setenv("SEMIPAR_THREADS", "3", 1);
  EXPECT_EQ(thread_count(), 3u);
  unsetenv("SEMIPAR_THREADS");
  EXPECT_EQ(thread_count(), hardware_threads());
}
