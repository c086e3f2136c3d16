#include <gtest/gtest.h>

#include "regimerisk/config.hpp"
#include "regimerisk/error.hpp"
#include "regimerisk/serialization.hpp"
#include "test_util.hpp"

using namespace regimerisk;
using nlohmann::json;

TEST(FormatNumber, ShortestRoundTrip) {
  EXPECT_EQ(format_number(1.1), "1.1");
  EXPECT_EQ(format_number(-0.02), "-0.02");
  EXPECT_EQ(format_number(0.1 + 0.2), "0.30000000000000004");
  EXPECT_EQ(std::stod(format_number(1.0 / 3.0)), 1.0 / 3.0);
}

TEST(StateJson, RoundTrip) {
  auto in = testutil::random_instance(1, 3, 4, 2, 60);
  const auto s = cavi_fit(in.obs, in.hyper, {100, 1e-9, 1, 2});
  const auto back = state_from_json(json::parse(to_json(s).dump()));
  EXPECT_EQ(back.phi, s.phi);
  EXPECT_EQ(back.alpha_hat, s.alpha_hat);
  for (int k = 0; k < 3; ++k) {
    EXPECT_EQ(back.mu_hat[k], s.mu_hat[k]);
    EXPECT_EQ(back.R_hat[k], s.R_hat[k]);
  }
  EXPECT_EQ(back.elbo_trace, s.elbo_trace);
  EXPECT_EQ(back.converged, s.converged);
}

TEST(StateJson, RejectsOtherVersions) {
  auto in = testutil::random_instance(2, 2, 3, 1, 10);
  auto doc = to_json(VariationalState::from_prior(in.hyper, 0));
  doc["version"] = 99;
  EXPECT_THROW(state_from_json(doc), DataError);
  doc["version"] = kStateFormatVersion;
  doc["format"] = "something else";
  EXPECT_THROW(state_from_json(doc), DataError);
  EXPECT_THROW(state_from_json(json::object()), DataError);
}

TEST(HyperparamsJson, RoundTrip) {
  const auto in = testutil::random_instance(3, 2, 3, 2, 5);
  const auto back = hyperparams_from_json(json::parse(to_json(in.hyper).dump()));
  EXPECT_EQ(back.pi, in.hyper.pi);
  EXPECT_EQ(back.M, in.hyper.M);
  EXPECT_EQ(back.alpha0, in.hyper.alpha0);
}

TEST(BacktestCsv, LayoutAndBlankFailedRows) {
  BacktestReport r;
  r.confidences = {0.95, 0.975};
  BacktestRow ok;
  ok.date = parse_date("2020-03-02");
  ok.realized = -0.01;
  ok.var_vi = {0.02, 0.03};
  ok.var_hs = {0.021, 0.031};
  ok.var_gaussian = {0.019, 0.025};
  ok.cluster_probs = {0.25, 0.75};
  ok.category_probs = {0.1, 0.8, 0.1};
  ok.category_counts = {50, 150, 50};
  ok.elbo = -12.5;
  ok.converged = true;
  BacktestRow bad;
  bad.date = parse_date("2020-03-03");
  bad.error = "singular, really";
  r.rows = {ok, bad};
  const auto csv = backtest_csv(r);
  const auto header = csv.substr(0, csv.find('\n'));
  EXPECT_EQ(header,
            "date,realized,var_vi_95,var_vi_97.5,var_hs_95,var_hs_97.5,var_gaussian_95,var_gaussian_97.5,"
            "p_cluster_1,p_cluster_2,p_category_1,p_category_2,p_category_3,count_category_1,count_category_2,"
            "count_category_3,elbo,converged,error");
  EXPECT_NE(csv.find("2020-03-02,-0.01,0.02,0.03,0.021,0.031,0.019,0.025,0.25,0.75,0.1,0.8,0.1,50,150,50,-12.5,1,\n"),
            std::string::npos);
  EXPECT_NE(csv.find("2020-03-03,0,,,,,,,,,,,,,,,,,singular; really\n"), std::string::npos);
  const auto plot = backtest_plot_csv(r);
  EXPECT_EQ(std::count(plot.begin(), plot.end(), '\n'), 2);
  const auto summary = backtest_summary_json(r);
  EXPECT_EQ(summary["failed_rows"], 1);
  EXPECT_EQ(summary["methods"][0]["breaches"], 0);
}

TEST(Config, DefaultsAndOverrides) {
  const json doc = json::parse(R"({"seed": 5, "features": [{"name": "v", "series": "VIX"}],
                                   "portfolio": [{"series": "EQ", "weight": 1}]})");
  const auto c = parse_config(doc, {}, {std::uint64_t{9}, 3, std::filesystem::path("elsewhere")});
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.jobs, 3);
  EXPECT_EQ(c.out_dir, "elsewhere");
  EXPECT_EQ(c.var.lookback, 250u);
  EXPECT_EQ(c.var.horizon, 1u);
  EXPECT_EQ(c.var.vi.clusters, 3);
  EXPECT_EQ(c.var.confidences, (std::vector<double>{0.95, 0.975}));
  EXPECT_EQ(c.var.categories.thresholds, (std::vector<double>{-0.8, 0.8}));
  EXPECT_EQ(c.stress.vi.clusters, 4);
  EXPECT_EQ(c.stress.L, 15u);
  EXPECT_EQ(c.stress.H, 45u);
  EXPECT_EQ(c.stress.window, 1000u);
  EXPECT_EQ(c.echo["seed"], 9);
  EXPECT_FALSE(c.echo.contains("jobs"));
}

TEST(Config, RejectsBadValues) {
  EXPECT_THROW(parse_config(json::parse(R"({"var": {"confidences": [1.5]}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"unknown_key": 1})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"vi": {"K": 0}})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"seed": "x"})")), ConfigError);
  EXPECT_THROW(parse_config(json::parse(R"({"synth": {"var_dataset": {"T": 0}}})")), ConfigError);
  EXPECT_THROW(load_config("/nonexistent/config.json"), DataError);
}
