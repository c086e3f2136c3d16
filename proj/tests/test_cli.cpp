#include <gtest/gtest.h>

#include <cstdlib>
#include <sstream>

#include <nlohmann/json.hpp>

#include "regimerisk/cli_app.hpp"
#include "regimerisk/error.hpp"
#include "test_util.hpp"

using namespace regimerisk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int run(std::vector<std::string> args, std::string* out_text = nullptr, std::string* err_text = nullptr) {
  args.insert(args.begin(), "regimerisk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

fs::path write_config(const fs::path& dir, const std::string& name, const json& doc) {
  const auto p = dir / name;
  testutil::write_file(p, doc.dump(2));
  return p;
}

json stress_doc() {
  return json::parse(R"({
    "seed": 11,
    "data": {"panel": "synth/market.csv"},
    "features": [{"name": "vix", "series": "VIX", "kind": "average", "lag": 1}],
    "portfolio": [{"series": "EQ", "weight": 0.5, "rule": "relative"},
                  {"series": "UST10Y", "weight": 0.5, "rule": "bond_yield"}],
    "stress": {"L": 5, "H": 15, "window": 250, "p_star": [0.75, 0.95],
               "risk_factors": [{"series": "UST10Y"}, {"series": "EQ", "mode": "relative"}],
               "key_factor": "UST10Y", "vi": {"K": 3, "restarts": 1}}
  })");
}

// Synthetic market for the tests that need a panel, one directory per test.
fs::path synth_dir() {
  const std::string name = ::testing::UnitTest::GetInstance()->current_test_info()->name();
  const fs::path dir = [&] {
    const auto d = testutil::temp_dir("cli_synth_" + name);
    const auto cfg = write_config(d, "synth.json", json::parse(R"({"seed": 3, "synth": {"days": 420,
                                                                 "var_dataset": {"T": 300}}})"));
    EXPECT_EQ(run({"gen-synth", "--config", cfg.string(), "--out", (d / "synth").string()}), 0);
    return d;
  }();
  return dir;
}

}  // namespace

TEST(Cli, UsageErrorsExitWithConfigCode) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"fit"}), 2);
  EXPECT_EQ(run({"fit", "--config", "x.json", "--seed", "abc"}), 2);
  EXPECT_EQ(run({"bogus", "--config", "x.json"}), 2);
}

TEST(Cli, MissingConfigFileIsDataError) {
  std::string err;
  EXPECT_EQ(run({"fit", "--config", "/nonexistent/cfg.json"}, nullptr, &err), 3);
  EXPECT_NE(err.find("error:"), std::string::npos);
}

TEST(Cli, GenSynthIsDeterministic) {
  const auto dir = testutil::temp_dir("cli_gen");
  const auto cfg = write_config(dir, "c.json", json::parse(R"({"seed": 4, "synth": {"days": 120,
                                                             "var_dataset": {"T": 50}}})"));
  ASSERT_EQ(run({"gen-synth", "--config", cfg.string(), "--out", (dir / "a").string()}), 0);
  ASSERT_EQ(run({"gen-synth", "--config", cfg.string(), "--out", (dir / "b").string()}), 0);
  for (const char* f : {"market.csv", "var_dataset.csv"}) {
    EXPECT_EQ(testutil::read_file(dir / "a" / f), testutil::read_file(dir / "b" / f)) << f;
  }
  auto ga = json::parse(testutil::read_file(dir / "a" / "ground_truth.json"));
  auto gb = json::parse(testutil::read_file(dir / "b" / "ground_truth.json"));
  ga["metadata"].erase("generated_at");
  gb["metadata"].erase("generated_at");
  EXPECT_EQ(ga, gb);
  ASSERT_EQ(run({"gen-synth", "--config", cfg.string(), "--seed", "5", "--out", (dir / "c").string()}), 0);
  EXPECT_NE(testutil::read_file(dir / "a" / "market.csv"), testutil::read_file(dir / "c" / "market.csv"));
  const auto market = load_panel(dir / "a" / "market.csv");
  EXPECT_EQ(market.size(), 120u);
}

TEST(Cli, ZeroLengthDatasetIsRejected) {
  const auto dir = testutil::temp_dir("cli_t0");
  const auto cfg = write_config(dir, "c.json", json::parse(R"({"synth": {"var_dataset": {"T": 0}}})"));
  EXPECT_EQ(run({"gen-synth", "--config", cfg.string(), "--out", (dir / "o").string()}), 2);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, FitOnGeneratedObservations) {
  const auto dir = synth_dir();
  const auto cfg = write_config(dir, "fit.json", json::parse(R"({"seed": 1,
      "data": {"observations": "synth/var_dataset.csv"}, "vi": {"K": 2}})"));
  ASSERT_EQ(run({"fit", "--config", cfg.string(), "--out", (dir / "fit").string()}), 0);
  const auto doc = json::parse(testutil::read_file(dir / "fit" / "state.json"));
  EXPECT_TRUE(doc["diagnostics"]["elbo_monotone"].get<bool>());
  const auto trace = doc["state"]["elbo_trace"].get<std::vector<double>>();
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_GE(trace[i], trace[i - 1] - 1e-9);
  EXPECT_TRUE(fs::exists(dir / "fit" / "elbo_trace.csv"));
  EXPECT_TRUE(fs::exists(dir / "fit" / "cluster_probs.csv"));
}

TEST(Cli, FitSingleClusterConvergesImmediately) {
  const auto dir = synth_dir();
  const auto cfg = write_config(dir, "fit1.json", json::parse(R"({
      "data": {"observations": "synth/var_dataset.csv"}, "vi": {"K": 1}})"));
  ASSERT_EQ(run({"fit", "--config", cfg.string(), "--out", (dir / "fit1").string()}), 0);
  const auto doc = json::parse(testutil::read_file(dir / "fit1" / "state.json"));
  EXPECT_LE(doc["diagnostics"]["sweeps"].get<int>(), 2);
  EXPECT_TRUE(doc["diagnostics"]["converged"].get<bool>());
}

TEST(Cli, BadDataPathLeavesNoFiles) {
  const auto dir = testutil::temp_dir("cli_bad");
  const auto cfg = write_config(dir, "c.json", json::parse(R"({"data": {"observations": "missing.csv"}})"));
  EXPECT_EQ(run({"fit", "--config", cfg.string(), "--out", (dir / "o").string()}), 3);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, ConfidenceOutOfRange) {
  const auto dir = testutil::temp_dir("cli_conf");
  const auto cfg = write_config(dir, "c.json", json::parse(R"({"var": {"confidences": [1.5]}})"));
  EXPECT_EQ(run({"var-backtest", "--config", cfg.string(), "--out", (dir / "o").string()}), 2);
  EXPECT_FALSE(fs::exists(dir / "o"));
}

TEST(Cli, MissingKeyRiskFactor) {
  const auto dir = synth_dir();
  auto doc = stress_doc();
  doc["stress"]["key_factor"] = "GOLD";
  const auto cfg = write_config(dir, "bad_key.json", doc);
  EXPECT_EQ(run({"stress-design", "--config", cfg.string(), "--out", (dir / "bad_key").string()}), 2);
  EXPECT_FALSE(fs::exists(dir / "bad_key"));
}

TEST(Cli, StressDesignSingleAndRolling) {
  const auto dir = synth_dir();
  const auto cfg = write_config(dir, "stress.json", stress_doc());
  ASSERT_EQ(run({"stress-design", "--config", cfg.string(), "--out", (dir / "single").string()}), 0);
  const auto doc = json::parse(testutil::read_file(dir / "single" / "scenario.json"));
  const auto& levels = doc["scenario"]["levels"];
  ASSERT_EQ(levels.size(), 2u);
  EXPECT_GE(levels[1]["target_loss"].get<double>(), levels[0]["target_loss"].get<double>());

  auto rolling = stress_doc();
  rolling["stress"]["mode"] = "rolling";
  rolling["stress"]["stride"] = 40;
  const auto rcfg = write_config(dir, "rolling.json", rolling);
  ASSERT_EQ(run({"stress-design", "--config", rcfg.string(), "--out", (dir / "rolling").string()}), 0);
  const auto plot = testutil::read_file(dir / "rolling" / "stress_plot.csv");
  EXPECT_NE(plot.find("date,realized_peak_loss,target_loss_75,target_loss_95"), std::string::npos);
}

TEST(Cli, VarBacktestStride) {
  const auto dir = synth_dir();
  auto doc = stress_doc();
  doc.erase("stress");
  doc["var"] = json::parse(R"({"T": 250, "stride": 5, "vi": {"K": 2, "restarts": 0}})");
  const auto cfg = write_config(dir, "var.json", doc);
  std::string out;
  ASSERT_EQ(run({"var-backtest", "--config", cfg.string(), "--out", (dir / "var").string()}, &out), 0);
  EXPECT_NE(out.find("backtest.csv"), std::string::npos);
  const auto summary = json::parse(testutil::read_file(dir / "var" / "backtest.json"));
  // 420 days, T = 250, D = 1: 168 eligible dates, every fifth one kept.
  EXPECT_EQ(summary["summary"]["rows"].get<int>(), 34);
  const auto csv = testutil::read_file(dir / "var" / "backtest.csv");
  EXPECT_EQ(csv.rfind("# config=", 0), 0u);
}

TEST(Cli, ExecutableExitCodes) {
  const std::string exe = REGIMERISK_CLI;
  const auto dir = testutil::temp_dir("cli_exe");
  EXPECT_EQ(WEXITSTATUS(std::system((exe + " > /dev/null 2>&1").c_str())), 2);
  const auto cfg = write_config(dir, "c.json", json::parse(R"({"seed": 2, "synth": {"days": 60,
                                                             "var_dataset": {"T": 20}}})"));
  EXPECT_EQ(WEXITSTATUS(std::system(
                (exe + " gen-synth --config " + cfg.string() + " --out " + (dir / "o").string() + " > /dev/null")
                    .c_str())),
            0);
  EXPECT_TRUE(fs::exists(dir / "o" / "market.csv"));
}
