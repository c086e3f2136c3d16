#include "regimerisk/cli_app.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "regimerisk/error.hpp"
#include "regimerisk/serialization.hpp"
#include "regimerisk/stats.hpp"

namespace regimerisk {

using nlohmann::json;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string timestamp() {
  const auto now = std::chrono::floor<std::chrono::seconds>(std::chrono::system_clock::now());
  const auto day = std::chrono::floor<std::chrono::days>(now);
  const std::chrono::hh_mm_ss hms(now - day);
  char buf[16];
  std::snprintf(buf, sizeof(buf), "T%02d:%02d:%02dZ", static_cast<int>(hms.hours().count()),
                static_cast<int>(hms.minutes().count()), static_cast<int>(hms.seconds().count()));
  return format_date(day) + buf;
}

json document(const RunConfig& cfg, const std::string& command) {
  return {{"metadata", {{"generated_at", timestamp()}, {"tool", "regimerisk"}, {"version", kVersion},
                        {"command", command}}},
          {"config", cfg.echo}};
}

std::string config_comment(const RunConfig& cfg) { return "# config=" + cfg.echo.dump() + "\n"; }

std::string dump(const json& j) { return j.dump(2) + "\n"; }

TimeSeriesPanel load_market(const RunConfig& cfg) {
  if (cfg.data.panel.empty()) throw ConfigError("config.data.panel is required for this command");
  CsvSchema schema;
  schema.date_column = cfg.data.date_column;
  return load_panel(cfg.data.panel, schema);
}

std::size_t resolve_asof(const TimeSeriesPanel& panel, const std::optional<Date>& asof) {
  if (panel.empty()) throw DataError("panel is empty");
  if (!asof) return panel.size() - 1;
  const auto idx = panel.index_of(*asof);
  if (!idx) throw DataError("as-of date " + format_date(*asof) + " is not in the panel");
  return *idx;
}

bool elbo_monotone(const std::vector<double>& trace, double* worst) {
  double w = 0.0;
  for (std::size_t i = 1; i < trace.size(); ++i) w = std::min(w, trace[i] - trace[i - 1]);
  if (worst) *worst = w;
  return w >= -1e-9 * (1.0 + std::abs(trace.empty() ? 0.0 : trace.back()));
}

void check_finite(double v, const std::string& what) {
  if (!std::isfinite(v)) throw NumericError(what + " is not finite");
}

}  // namespace

const std::string* CommandOutput::find(const std::string& name) const {
  for (const auto& [n, content] : files) {
    if (n == name) return &content;
  }
  return nullptr;
}

void commit(const CommandOutput& output, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  for (const auto& [name, content] : output.files) write_text(dir / name, content);
}

ObservationSet load_observations(const std::filesystem::path& path, std::vector<Date>* dates) {
  const TimeSeriesPanel panel = load_panel(path);
  if (!panel.has_series("d")) throw DataError(path.string() + ": missing column 'd'");
  std::vector<std::pair<int, std::string>> xcols;
  for (const auto& name : panel.series_names()) {
    if (name.size() > 1 && name[0] == 'x' &&
        std::all_of(name.begin() + 1, name.end(), [](char c) { return std::isdigit(static_cast<unsigned char>(c)); })) {
      xcols.emplace_back(std::stoi(name.substr(1)), name);
    }
  }
  if (xcols.empty()) throw DataError(path.string() + ": no feature columns x1..xn");
  std::sort(xcols.begin(), xcols.end());
  ObservationSet obs;
  obs.x.resize(static_cast<Eigen::Index>(panel.size()), static_cast<Eigen::Index>(xcols.size()));
  for (std::size_t c = 0; c < xcols.size(); ++c) {
    const auto v = panel.series(xcols[c].second);
    for (std::size_t t = 0; t < v.size(); ++t) obs.x(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(c)) = v[t];
  }
  for (double d : panel.series("d")) {
    if (d < 1.0 || d != std::floor(d)) throw DataError(path.string() + ": categories must be integers >= 1");
    obs.d.push_back(static_cast<int>(d) - 1);
  }
  if (dates) *dates = panel.dates();
  return obs;
}

CommandOutput cmd_fit(const RunConfig& cfg) {
  const ViSettings& vi = cfg.var.vi;
  ObservationSet obs;
  std::vector<Date> dates;
  json doc = document(cfg, "fit");
  std::optional<Eigen::VectorXd> x_now;
  int J = 0;

  if (!cfg.data.observations.empty()) {
    obs = load_observations(cfg.data.observations, &dates);
    J = cfg.fit.categories.value_or(*std::max_element(obs.d.begin(), obs.d.end()) + 1);
    doc["mode"] = "observations";
  } else {
    const TimeSeriesPanel panel = load_market(cfg);
    cfg.var.validate();
    cfg.var.portfolio.validate(panel);
    const std::size_t asof = resolve_asof(panel, cfg.fit.asof);
    const FeatureMatrix features = build_features(panel, cfg.var.features);
    const Series fwd = forward_pnl(panel, cfg.var.portfolio, cfg.var.horizon);
    CalibrationSample cs = calibration_sample(panel, features, fwd, cfg.var, asof);
    obs = std::move(cs.obs);
    for (std::size_t tau : cs.panel_index) dates.push_back(panel.dates()[tau]);
    J = cfg.var.categories.categories();
    x_now = features.x.row(static_cast<Eigen::Index>(cs.asof_row)).transpose();
    doc["mode"] = "panel";
    doc["asof"] = format_date(panel.dates()[asof]);
    doc["feature_names"] = features.feature_names;
  }
  if (obs.size() < 1) throw DataError("no observations to fit");

  CaviOptions cavi = vi.cavi;
  const VIHyperparams hyper = default_hyperparams(obs.x, vi.clusters, J, cavi.seed, vi.prior);
  const VariationalState state = cavi_fit(obs, hyper, cavi);
  check_finite(state.elbo_trace.back(), "final ELBO");

  double worst = 0.0;
  const bool monotone = elbo_monotone(state.elbo_trace, &worst);
  doc["hyperparams"] = to_json(hyper);
  doc["state"] = to_json(state);
  doc["diagnostics"] = {{"observations", obs.size()},
                        {"clusters", vi.clusters},
                        {"categories", J},
                        {"sweeps", state.sweeps},
                        {"converged", state.converged},
                        {"final_elbo", state.elbo_trace.back()},
                        {"elbo_monotone", monotone},
                        {"largest_elbo_decrease", -worst}};
  if (x_now) {
    doc["predictive"] = {{"cluster_probs", to_json(predictive_cluster_probs(*x_now, hyper, state))},
                         {"category_probs", to_json(predictive_category_probs(*x_now, hyper, state))}};
  }

  std::ostringstream trace;
  trace << config_comment(cfg) << "sweep,elbo\n";
  for (std::size_t i = 0; i < state.elbo_trace.size(); ++i) {
    trace << i << "," << format_number(state.elbo_trace[i]) << "\n";
  }

  std::ostringstream probs;
  probs << config_comment(cfg) << "date";
  for (int k = 0; k < vi.clusters; ++k) probs << ",p_cluster_" << k + 1;
  probs << ",category\n";
  for (int t = 0; t < obs.size(); ++t) {
    probs << format_date(dates[static_cast<std::size_t>(t)]);
    for (int k = 0; k < vi.clusters; ++k) probs << "," << format_number(state.phi(t, k));
    probs << "," << obs.d[static_cast<std::size_t>(t)] + 1 << "\n";
  }

  CommandOutput out;
  out.add("state.json", dump(doc));
  out.add("elbo_trace.csv", trace.str());
  out.add("cluster_probs.csv", probs.str());
  return out;
}

CommandOutput cmd_var_backtest(const RunConfig& cfg) {
  cfg.var.validate();
  const TimeSeriesPanel panel = load_market(cfg);
  const BacktestReport report = var_backtest(panel, cfg.var);
  std::size_t failed = 0;
  for (const auto& r : report.rows) failed += r.ok() ? 0 : 1;
  if (failed == report.rows.size()) throw NumericError("every backtest date failed: " + report.rows.front().error);

  json doc = document(cfg, "var-backtest");
  doc["summary"] = backtest_summary_json(report);
  CommandOutput out;
  out.add("backtest.csv", config_comment(cfg) + backtest_csv(report));
  out.add("backtest.json", dump(doc));
  out.add("var_plot.csv", config_comment(cfg) + backtest_plot_csv(report));
  return out;
}

CommandOutput cmd_stress_design(const RunConfig& cfg) {
  const TimeSeriesPanel panel = load_market(cfg);
  cfg.stress.validate(panel);
  json doc = document(cfg, "stress-design");
  CommandOutput out;
  if (cfg.stress_run.mode == StressRun::Mode::single) {
    const ScenarioResult res = design_scenario(panel, cfg.stress, resolve_asof(panel, cfg.stress_run.asof));
    for (const auto& l : res.levels) check_finite(l.target_loss, "target loss");
    doc["scenario"] = to_json(res);
    out.add("scenario.json", dump(doc));
    out.add("scenario_shifts.csv", config_comment(cfg) + scenario_shift_csv(std::span(&res, 1)));
    return out;
  }

  const auto track = rolling_scenarios(panel, cfg.stress, cfg.stress_run.stride, cfg.stress_run.start,
                                       cfg.stress_run.end);
  std::vector<ScenarioResult> results;
  json scenarios = json::array();
  std::ostringstream plot;
  plot << config_comment(cfg) << "date,realized_peak_loss";
  for (double p : cfg.stress.p_star) plot << ",target_loss_" << format_number(std::round(p * 1e6) / 1e4);
  plot << "\n";
  for (const auto& point : track) {
    for (const auto& l : point.result.levels) check_finite(l.target_loss, "target loss");
    plot << format_date(point.result.asof) << ",";
    if (point.realized_peak) plot << format_number(-*point.realized_peak);
    for (const auto& l : point.result.levels) plot << "," << format_number(-l.target_loss);
    plot << "\n";
    json s = to_json(point.result);
    if (point.realized_peak) s["realized_peak_loss"] = -*point.realized_peak;
    scenarios.push_back(std::move(s));
    results.push_back(point.result);
  }
  doc["scenarios"] = scenarios;
  out.add("scenarios.json", dump(doc));
  out.add("scenario_shifts.csv", config_comment(cfg) + scenario_shift_csv(results));
  out.add("stress_plot.csv", plot.str());
  return out;
}

CommandOutput cmd_gen_synth(const RunConfig& cfg) {
  const MarketSynthResult market = gen_market_panel(cfg.synth.market);
  const VarDataset data = gen_var_dataset(cfg.synth.var_data);

  std::map<std::string, std::vector<double>> cols;
  for (Eigen::Index j = 0; j < data.features.x.cols(); ++j) {
    const Eigen::VectorXd c = data.features.x.col(j);
    cols["x" + std::to_string(j + 1)].assign(c.data(), c.data() + c.size());
  }
  for (std::size_t t = 0; t < data.categories.size(); ++t) {
    cols["d"].push_back(data.categories[t] + 1);
    cols["cluster"].push_back(data.clusters[t] + 1);
  }
  const TimeSeriesPanel obs(data.features.dates, std::move(cols));

  json regimes = json::array();
  for (const auto& r : cfg.synth.market.regimes) {
    regimes.push_back({{"name", r.name}, {"eq_drift", r.eq_drift}, {"eq_vol", r.eq_vol}, {"rate_vol", r.rate_vol},
                       {"vix_level", r.vix_level}, {"fx_vol", r.fx_vol}, {"eq_rate_corr", r.eq_rate_corr}});
  }
  json schedule = json::array();
  for (const auto& s : cfg.synth.market.schedule) schedule.push_back({{"day", s.day}, {"regime", s.regime}});
  json mu = json::array();
  for (const auto& m : cfg.synth.var_data.mu) mu.push_back(to_json(m));
  std::vector<int> clusters1;
  for (int c : data.clusters) clusters1.push_back(c + 1);

  json doc = document(cfg, "gen-synth");
  doc["market"] = {{"days", cfg.synth.market.days}, {"regimes", regimes}, {"schedule", schedule},
                   {"regime_per_day", market.regime}};
  doc["var_dataset"] = {{"T", cfg.synth.var_data.T},       {"pi", to_json(cfg.synth.var_data.pi)},
                        {"mu", mu},                         {"M", to_json(cfg.synth.var_data.M)},
                        {"theta", to_json(cfg.synth.var_data.theta)}, {"clusters", clusters1}};

  CommandOutput out;
  out.add("market.csv", panel_csv(market.panel, "config=" + cfg.echo.dump()));
  out.add("var_dataset.csv", panel_csv(obs, "config=" + cfg.echo.dump()));
  out.add("ground_truth.json", dump(doc));
  return out;
}

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Regime-conditional VaR and stress scenario design"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::string> out_dir;

  const auto add = [&](const char* name, const char* help) {
    CLI::App* sub = app.add_subcommand(name, help);
    sub->add_option("--config", config_path, "JSON configuration file")->required();
    sub->add_option("--seed", seed, "random seed (overrides the config)");
    sub->add_option("--jobs", jobs, "worker threads (overrides the config)");
    sub->add_option("--out", out_dir, "output directory (overrides the config)");
    return sub;
  };
  CLI::App* fit = add("fit", "fit the regime model by CAVI");
  CLI::App* backtest = add("var-backtest", "rolling VaR backtest: VI, historical simulation, Gaussian");
  CLI::App* stress = add("stress-design", "target stress loss and expected risk-factor shifts");
  CLI::App* synth = add("gen-synth", "write synthetic market and regime datasets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : static_cast<int>(ExitCode::config);
  }

  try {
    Overrides ov;
    ov.seed = seed;
    ov.jobs = jobs;
    if (out_dir) ov.out_dir = *out_dir;
    const RunConfig cfg = load_config(config_path, ov);

    CommandOutput result;
    if (fit->parsed()) result = cmd_fit(cfg);
    else if (backtest->parsed()) result = cmd_var_backtest(cfg);
    else if (stress->parsed()) result = cmd_stress_design(cfg);
    else if (synth->parsed()) result = cmd_gen_synth(cfg);
    commit(result, cfg.out_dir);
    for (const auto& [name, _] : result.files) out << (cfg.out_dir / name).string() << "\n";
    return 0;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::data);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return static_cast<int>(ExitCode::numeric);
  }
}

}  // namespace regimerisk
