#include "regimerisk/config.hpp"

#include <algorithm>
#include <fstream>
#include <set>

#include "regimerisk/error.hpp"
#include "regimerisk/stats.hpp"

namespace regimerisk {

using nlohmann::json;

namespace {

// Typed access to one JSON object; rejects keys nobody asked for.
class Section {
 public:
  Section(const json& node, std::string where) : node_(node), where_(std::move(where)) {
    if (!node_.is_object()) throw ConfigError(where_ + " must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return node_.contains(key) && !node_.at(key).is_null();
  }

  const json& raw(const std::string& key) {
    if (!has(key)) throw ConfigError(path(key) + " is required");
    return node_.at(key);
  }

  Section child(const std::string& key) { return Section(raw(key), path(key)); }

  template <class T>
  T get(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return as<T>(node_.at(key), path(key));
  }

  template <class T>
  std::optional<T> optional(const std::string& key) {
    if (!has(key)) return std::nullopt;
    return as<T>(node_.at(key), path(key));
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, _] : node_.items()) {
      if (!seen_.contains(key)) throw ConfigError("unknown key " + path(key));
    }
  }

  template <class T>
  static T as(const json& v, const std::string& where) {
    try {
      if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
        if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(where + " must be a nonnegative integer");
      } else if constexpr (std::is_same_v<T, int>) {
        if (!v.is_number_integer()) throw ConfigError(where + " must be an integer");
      } else if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError(where + " must be a number");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError(where + " must be true or false");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError(where + " must be a string");
      }
      return v.get<T>();
    } catch (const json::exception& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }

 private:
  const json& node_;
  std::string where_;
  std::set<std::string> seen_;
};

std::vector<double> numbers(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array of numbers");
  std::vector<double> out;
  for (const auto& x : v) out.push_back(Section::as<double>(x, where));
  return out;
}

std::vector<std::vector<double>> number_rows(const json& v, const std::string& where) {
  if (!v.is_array()) throw ConfigError(where + " must be an array of arrays");
  std::vector<std::vector<double>> out;
  for (const auto& row : v) out.push_back(numbers(row, where));
  return out;
}

Eigen::MatrixXd matrix(const json& v, const std::string& where) {
  const auto rows = number_rows(v, where);
  if (rows.empty()) throw ConfigError(where + " must not be empty");
  Eigen::MatrixXd m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != rows.front().size()) throw ConfigError(where + " rows differ in length");
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return m;
}

Date date_value(const json& v, const std::string& where) {
  try {
    return parse_date(Section::as<std::string>(v, where));
  } catch (const DataError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::optional<Date> optional_date(Section& s, const std::string& key) {
  if (!s.has(key)) return std::nullopt;
  return date_value(s.raw(key), s.path(key));
}

ChangeMode change_mode(const std::string& v, const std::string& where) {
  if (v == "difference") return ChangeMode::difference;
  if (v == "relative") return ChangeMode::relative;
  throw ConfigError(where + " must be \"difference\" or \"relative\"");
}

std::vector<FeatureTransform> parse_features(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a nonempty array");
  std::vector<FeatureTransform> out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Section s(v[i], where + "[" + std::to_string(i) + "]");
    FeatureTransform f;
    f.series = s.get<std::string>("series", "");
    if (f.series.empty()) throw ConfigError(s.path("series") + " is required");
    const auto kind = s.get<std::string>("kind", "change");
    if (kind == "change") f.kind = FeatureTransform::Kind::change;
    else if (kind == "std_diff") f.kind = FeatureTransform::Kind::std_diff;
    else if (kind == "average") f.kind = FeatureTransform::Kind::average;
    else throw ConfigError(s.path("kind") + " must be change, std_diff or average");
    f.name = s.get<std::string>("name", f.series + "_" + kind);
    f.lag = s.get<std::size_t>("lag", 1);
    f.mode = change_mode(s.get<std::string>("mode", "difference"), s.path("mode"));
    f.short_window = s.get<std::size_t>("short_window", 5);
    f.long_window = s.get<std::size_t>("long_window", 250);
    f.zscore_window = s.optional<std::size_t>("zscore_window");
    s.finish();
    out.push_back(std::move(f));
  }
  return out;
}

Portfolio parse_portfolio(const json& v, const std::string& where) {
  if (!v.is_array() || v.empty()) throw ConfigError(where + " must be a nonempty array");
  Portfolio p;
  for (std::size_t i = 0; i < v.size(); ++i) {
    Section s(v[i], where + "[" + std::to_string(i) + "]");
    Instrument ins;
    ins.series = s.get<std::string>("series", "");
    if (ins.series.empty()) throw ConfigError(s.path("series") + " is required");
    ins.weight = s.get<double>("weight", 1.0);
    const auto rule = s.get<std::string>("rule", "relative");
    if (rule == "relative") ins.rule = ReturnRule::relative;
    else if (rule == "difference") ins.rule = ReturnRule::difference;
    else if (rule == "bond_yield") ins.rule = ReturnRule::bond_yield;
    else throw ConfigError(s.path("rule") + " must be relative, difference or bond_yield");
    ins.duration = s.get<double>("duration", 8.5);
    ins.yield_unit = s.get<double>("yield_unit", 0.01);
    s.finish();
    p.instruments.push_back(std::move(ins));
  }
  return p;
}

ViSettings parse_vi(Section& s, int default_clusters) {
  ViSettings vi;
  vi.clusters = s.get<int>("K", default_clusters);
  vi.prior.alpha0 = s.get<double>("alpha0", vi.prior.alpha0);
  vi.prior.prior_scale = s.get<double>("prior_scale", vi.prior.prior_scale);
  vi.cavi.max_sweeps = s.get<int>("max_sweeps", vi.cavi.max_sweeps);
  vi.cavi.rel_tol = s.get<double>("rel_tol", vi.cavi.rel_tol);
  vi.cavi.restarts = s.get<int>("restarts", vi.cavi.restarts);
  if (vi.clusters < 1) throw ConfigError(s.path("K") + " must be at least 1");
  if (!(vi.prior.alpha0 > 0.0)) throw ConfigError(s.path("alpha0") + " must be positive");
  if (!(vi.prior.prior_scale > 0.0)) throw ConfigError(s.path("prior_scale") + " must be positive");
  if (vi.cavi.max_sweeps < 1) throw ConfigError(s.path("max_sweeps") + " must be at least 1");
  if (!(vi.cavi.rel_tol > 0.0)) throw ConfigError(s.path("rel_tol") + " must be positive");
  if (vi.cavi.restarts < 0) throw ConfigError(s.path("restarts") + " must be >= 0");
  return vi;
}

void parse_var(Section s, RunConfig& cfg, const ViSettings& vi) {
  auto& v = cfg.var;
  v.horizon = s.get<std::size_t>("D", 1);
  v.lookback = s.get<std::size_t>("T", 250);
  v.norm_window = s.get<std::size_t>("norm_window", v.lookback);
  if (s.has("confidences")) v.confidences = numbers(s.raw("confidences"), s.path("confidences"));
  if (s.has("thresholds")) v.categories.thresholds = numbers(s.raw("thresholds"), s.path("thresholds"));
  const auto norm = s.get<std::string>("normalization", "zscore");
  if (norm == "zscore") v.categories.normalization = PnlCategorySpec::Normalization::zscore;
  else if (norm == "raw") v.categories.normalization = PnlCategorySpec::Normalization::raw;
  else throw ConfigError(s.path("normalization") + " must be zscore or raw");
  v.gaussian_zero_mean = s.get<bool>("gaussian_zero_mean", false);
  v.stride = s.get<std::size_t>("stride", 1);
  v.start = optional_date(s, "start");
  v.end = optional_date(s, "end");
  v.vi = vi;
  if (s.has("vi")) {
    Section sub = s.child("vi");
    v.vi = parse_vi(sub, vi.clusters);
    sub.finish();
  }
  s.finish();
  for (double c : v.confidences) {
    if (!(c > 0.0 && c < 1.0)) throw ConfigError(s.path("confidences") + " must lie in (0, 1)");
  }
  if (v.confidences.empty()) throw ConfigError(s.path("confidences") + " must not be empty");
  if (v.horizon < 1 || v.lookback < 2 || v.norm_window < 2 || v.stride < 1) {
    throw ConfigError("config.var needs D >= 1, T >= 2, norm_window >= 2 and stride >= 1");
  }
  v.categories.validate();
  if (v.categories.categories() < 2) throw ConfigError(s.path("thresholds") + " must give at least two categories");
}

void parse_stress(Section s, RunConfig& cfg, const ViSettings& vi) {
  auto& st = cfg.stress;
  st.L = s.get<std::size_t>("L", 15);
  st.H = s.get<std::size_t>("H", 45);
  st.window = s.get<std::size_t>("window", 1000);
  if (s.has("p_star")) st.p_star = numbers(s.raw("p_star"), s.path("p_star"));
  for (double p : st.p_star) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError(s.path("p_star") + " must lie in (0, 1)");
  }
  st.record_stride = s.get<std::size_t>("record_stride", 1);
  if (s.has("features")) st.features = parse_features(s.raw("features"), s.path("features"));

  if (s.has("risk_factors")) {
    const auto& arr = s.raw("risk_factors");
    if (!arr.is_array()) throw ConfigError(s.path("risk_factors") + " must be an array");
    st.risk_factors.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section r(arr[i], s.path("risk_factors") + "[" + std::to_string(i) + "]");
      RiskFactorRule rule;
      rule.series = r.get<std::string>("series", "");
      if (rule.series.empty()) throw ConfigError(r.path("series") + " is required");
      rule.mode = change_mode(r.get<std::string>("mode", "difference"), r.path("mode"));
      r.finish();
      st.risk_factors.push_back(rule);
    }
  }
  if (st.risk_factors.empty()) throw ConfigError(s.path("risk_factors") + " must name at least one risk factor");

  st.categories = {};
  if (s.has("key_factor")) {
    const auto key = Section::as<std::string>(s.raw("key_factor"), s.path("key_factor"));
    const auto it = std::find_if(st.risk_factors.begin(), st.risk_factors.end(),
                                 [&](const RiskFactorRule& r) { return r.series == key; });
    if (it == st.risk_factors.end()) {
      throw ConfigError(s.path("key_factor") + " '" + key + "' is not among the stress risk factors");
    }
    st.categories.key_factor = static_cast<std::size_t>(it - st.risk_factors.begin());
    st.categories.key_thresholds = s.has("key_thresholds")
                                       ? numbers(s.raw("key_thresholds"), s.path("key_thresholds"))
                                       : std::vector<double>{0.0};
  } else if (s.has("key_thresholds")) {
    throw ConfigError(s.path("key_thresholds") + " requires key_factor");
  }
  const std::size_t bands = st.categories.key_thresholds.size() + 1;
  st.loss_quantiles.reset();
  if (s.has("loss_thresholds")) {
    st.categories.loss_thresholds = number_rows(s.raw("loss_thresholds"), s.path("loss_thresholds"));
    if (s.has("loss_quantiles")) throw ConfigError("give either loss_thresholds or loss_quantiles, not both");
  } else if (s.has("loss_quantiles")) {
    st.loss_quantiles = number_rows(s.raw("loss_quantiles"), s.path("loss_quantiles"));
    st.categories.loss_thresholds.assign(bands, {});
  } else if (bands == 2) {
    st.loss_quantiles = std::vector<std::vector<double>>{{0.2, 0.4, 0.6, 0.8}, {1.0 / 3.0, 2.0 / 3.0}};
    st.categories.loss_thresholds.assign(bands, {});
  } else {
    st.loss_quantiles = std::vector<std::vector<double>>(bands, std::vector<double>{0.2, 0.4, 0.6, 0.8});
    st.categories.loss_thresholds.assign(bands, {});
  }

  if (s.has("constraint")) {
    Section c = s.child("constraint");
    ShiftConstraint con;
    con.risk_factor = c.get<std::string>("risk_factor", "");
    if (con.risk_factor.empty()) throw ConfigError(c.path("risk_factor") + " is required");
    con.mode = change_mode(c.get<std::string>("mode", "difference"), c.path("mode"));
    const auto dir = c.get<std::string>("direction", "at_least");
    if (dir == "at_least") con.direction = ShiftConstraint::Direction::at_least;
    else if (dir == "at_most") con.direction = ShiftConstraint::Direction::at_most;
    else throw ConfigError(c.path("direction") + " must be at_least or at_most");
    con.threshold = c.get<double>("threshold", 0.0);
    c.finish();
    st.constraint = con;
  }

  st.vi = vi;
  st.vi.clusters = 4;
  if (s.has("vi")) {
    Section sub = s.child("vi");
    st.vi = parse_vi(sub, 4);
    sub.finish();
  }

  const auto mode = s.get<std::string>("mode", "single");
  if (mode == "single") cfg.stress_run.mode = StressRun::Mode::single;
  else if (mode == "rolling") cfg.stress_run.mode = StressRun::Mode::rolling;
  else throw ConfigError(s.path("mode") + " must be single or rolling");
  cfg.stress_run.asof = optional_date(s, "asof");
  cfg.stress_run.stride = s.get<std::size_t>("stride", 1);
  cfg.stress_run.start = optional_date(s, "start");
  cfg.stress_run.end = optional_date(s, "end");
  if (cfg.stress_run.stride < 1) throw ConfigError(s.path("stride") + " must be at least 1");
  s.finish();
}

MarketRegime parse_regime(Section s) {
  MarketRegime r;
  r.name = s.get<std::string>("name", "");
  r.eq_drift = s.get<double>("eq_drift", r.eq_drift);
  r.eq_vol = s.get<double>("eq_vol", r.eq_vol);
  r.rate_vol = s.get<double>("rate_vol", r.rate_vol);
  r.vix_level = s.get<double>("vix_level", r.vix_level);
  r.fx_vol = s.get<double>("fx_vol", r.fx_vol);
  r.eq_rate_corr = s.get<double>("eq_rate_corr", r.eq_rate_corr);
  s.finish();
  return r;
}

SyntheticSpec default_var_data() {
  SyntheticSpec s;
  s.T = 1000;
  s.pi = Eigen::Vector2d(0.5, 0.5);
  s.mu = {Eigen::VectorXd::Constant(1, -5.0), Eigen::VectorXd::Constant(1, 5.0)};
  s.M = Eigen::MatrixXd::Identity(1, 1);
  s.theta.resize(2, 3);
  s.theta << 0.1, 0.8, 0.1, 0.3, 0.4, 0.3;
  return s;
}

void parse_synth(Section s, RunConfig& cfg) {
  auto& m = cfg.synth.market;
  m.days = s.get<std::size_t>("days", 600);
  if (s.has("start")) m.start = date_value(s.raw("start"), s.path("start"));
  if (s.has("regimes")) {
    const auto& arr = s.raw("regimes");
    if (!arr.is_array()) throw ConfigError(s.path("regimes") + " must be an array");
    m.regimes.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      m.regimes.push_back(parse_regime(Section(arr[i], s.path("regimes") + "[" + std::to_string(i) + "]")));
    }
  }
  if (s.has("schedule")) {
    const auto& arr = s.raw("schedule");
    if (!arr.is_array()) throw ConfigError(s.path("schedule") + " must be an array");
    m.schedule.clear();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      Section e(arr[i], s.path("schedule") + "[" + std::to_string(i) + "]");
      RegimeSwitch sw;
      sw.day = e.get<std::size_t>("day", 0);
      sw.regime = e.get<std::size_t>("regime", 0);
      e.finish();
      m.schedule.push_back(sw);
    }
  }
  m.vix_reversion = s.get<double>("vix_reversion", m.vix_reversion);
  m.vix_noise = s.get<double>("vix_noise", m.vix_noise);

  if (s.has("var_dataset")) {
    Section v = s.child("var_dataset");
    auto& d = cfg.synth.var_data;
    d.T = v.get<int>("T", d.T);
    if (v.has("pi")) {
      const auto pi = numbers(v.raw("pi"), v.path("pi"));
      d.pi = Eigen::Map<const Eigen::VectorXd>(pi.data(), static_cast<Eigen::Index>(pi.size()));
    }
    if (v.has("mu")) {
      d.mu.clear();
      for (const auto& row : number_rows(v.raw("mu"), v.path("mu"))) {
        d.mu.push_back(Eigen::Map<const Eigen::VectorXd>(row.data(), static_cast<Eigen::Index>(row.size())));
      }
    }
    if (v.has("M")) d.M = matrix(v.raw("M"), v.path("M"));
    if (v.has("theta")) d.theta = matrix(v.raw("theta"), v.path("theta"));
    v.finish();
  }
  s.finish();
}

}  // namespace

RunConfig parse_config(const json& doc, const std::filesystem::path& base_dir, const Overrides& overrides) {
  RunConfig cfg;
  cfg.synth.var_data = default_var_data();
  Section root(doc, "config");

  cfg.seed = root.get<std::uint64_t>("seed", 0);
  if (overrides.seed) cfg.seed = *overrides.seed;
  cfg.jobs = root.get<int>("jobs", 1);
  if (overrides.jobs) cfg.jobs = *overrides.jobs;
  if (cfg.jobs < 1) throw ConfigError("jobs must be at least 1");

  const auto resolve = [&](const std::string& p) {
    std::filesystem::path path(p);
    return path.is_relative() && !base_dir.empty() ? base_dir / path : path;
  };
  if (root.has("data")) {
    Section d = root.child("data");
    if (d.has("panel")) cfg.data.panel = resolve(Section::as<std::string>(d.raw("panel"), d.path("panel")));
    if (d.has("observations")) {
      cfg.data.observations = resolve(Section::as<std::string>(d.raw("observations"), d.path("observations")));
    }
    cfg.data.date_column = d.get<std::string>("date_column", "date");
    d.finish();
  }

  if (root.has("output")) {
    Section o = root.child("output");
    cfg.out_dir = resolve(o.get<std::string>("dir", "out"));
    o.finish();
  }
  if (overrides.out_dir) cfg.out_dir = *overrides.out_dir;

  std::vector<FeatureTransform> features;
  if (root.has("features")) features = parse_features(root.raw("features"), "config.features");
  if (root.has("portfolio")) cfg.var.portfolio = parse_portfolio(root.raw("portfolio"), "config.portfolio");
  cfg.var.features = features;
  cfg.stress.features = features;
  cfg.stress.portfolio = cfg.var.portfolio;

  ViSettings vi;
  if (root.has("vi")) {
    Section v = root.child("vi");
    vi = parse_vi(v, 3);
    v.finish();
  }

  if (root.has("var")) {
    parse_var(root.child("var"), cfg, vi);
  } else {
    cfg.var.vi = vi;
  }
  if (root.has("stress")) {
    parse_stress(root.child("stress"), cfg, vi);
  } else {
    cfg.stress.vi = vi;
    cfg.stress.vi.clusters = 4;
  }

  if (root.has("fit")) {
    Section f = root.child("fit");
    cfg.fit.asof = optional_date(f, "asof");
    cfg.fit.categories = f.optional<int>("categories");
    f.finish();
    if (cfg.fit.categories && *cfg.fit.categories < 1) throw ConfigError("config.fit.categories must be at least 1");
  }

  if (root.has("synth")) parse_synth(root.child("synth"), cfg);
  root.finish();
  cfg.synth.market.validate();
  cfg.synth.var_data.validate();

  cfg.var.vi.cavi.seed = cfg.seed;
  cfg.stress.vi.cavi.seed = cfg.seed;
  cfg.var.jobs = cfg.jobs;
  cfg.synth.market.seed = cfg.seed;
  cfg.synth.var_data.seed = Rng::mix(cfg.seed + 1);

  cfg.echo = doc;
  cfg.echo.erase("output");
  cfg.echo.erase("jobs");
  cfg.echo["seed"] = cfg.seed;
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path.string());
  json doc;
  try {
    doc = json::parse(in, nullptr, true, true);
  } catch (const json::parse_error& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
  return parse_config(doc, path.parent_path(), overrides);
}

}  // namespace regimerisk
