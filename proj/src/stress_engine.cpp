#include "regimerisk/stress_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "regimerisk/error.hpp"
#include "regimerisk/stats.hpp"

namespace regimerisk {

namespace {

struct Best {
  double pnl = std::numeric_limits<double>::infinity();
  std::size_t end = 0;
  bool found = false;
};

// best[s * L + (l - 1)]: worst eligible window starting at s with length <= l.
std::vector<Best> prefix_minima(std::size_t length, const WindowPnl& pnl, const WindowFilter* eligible,
                                std::size_t L) {
  std::vector<Best> best(length * L);
  for (std::size_t s = 0; s + 1 < length; ++s) {
    Best running;
    for (std::size_t l = 1; l <= L; ++l) {
      const std::size_t e = s + l;
      if (e < length && (eligible == nullptr || (*eligible)(s, e))) {
        const double v = pnl(s, e);
        if (!running.found || v < running.pnl) running = {v, e, true};
      }
      best[s * L + (l - 1)] = running;
    }
  }
  return best;
}

ConstrainedSurface surface_impl(std::size_t length, const WindowPnl& pnl, const WindowFilter* eligible, std::size_t L,
                                std::size_t H) {
  if (L < 1 || H < 1) throw ConfigError("L and H must be positive");
  if (length < H + 1) {
    throw DataError("peak-loss surface: path of length " + std::to_string(length) + " is shorter than H + 1 = " +
                    std::to_string(H + 1));
  }
  const auto best = prefix_minima(length, pnl, eligible, L);
  ConstrainedSurface out;
  for (std::size_t t = 0; t + H < length; ++t) {
    PeakLossRecord rec;
    rec.t = t;
    bool found = false;
    for (std::size_t s = t; s < t + H; ++s) {
      const std::size_t cap = std::min(L, t + H - s);
      const Best& b = best[s * L + (cap - 1)];
      if (b.found && (!found || b.pnl < rec.loss)) {
        rec.loss = b.pnl;
        rec.start = s;
        rec.end = b.end;
        found = true;
      }
    }
    if (found) out.records.push_back(std::move(rec));
    else out.omitted.push_back(t);
  }
  out.status = out.records.empty() ? ConstrainedSurface::Status::empty : ConstrainedSurface::Status::ok;
  return out;
}

std::string fmt(double v) {
  if (std::isinf(v)) return v < 0 ? "-inf" : "+inf";
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::vector<PeakLossRecord> peak_loss_surface(std::size_t length, const WindowPnl& pnl, std::size_t L,
                                              std::size_t H) {
  return surface_impl(length, pnl, nullptr, L, H).records;
}

std::vector<PeakLossRecord> peak_loss_surface(std::span<const double> value_path, std::size_t L, std::size_t H) {
  return peak_loss_surface(
      value_path.size(), [value_path](std::size_t s, std::size_t e) { return value_path[e] - value_path[s]; }, L, H);
}

ConstrainedSurface constrained_peak_loss_surface(std::size_t length, const WindowPnl& pnl,
                                                 const WindowFilter& eligible, std::size_t L, std::size_t H) {
  return surface_impl(length, pnl, &eligible, L, H);
}

double risk_factor_shift(std::span<const double> levels, std::size_t start, std::size_t end, ChangeMode mode) {
  if (start >= levels.size() || end >= levels.size()) throw DataError("risk-factor window outside the data");
  if (start == end) return 0.0;
  if (mode == ChangeMode::difference) return levels[end] - levels[start];
  if (levels[start] == 0.0) throw DataError("zero risk-factor level at index " + std::to_string(start));
  return levels[end] / levels[start] - 1.0;
}

std::string ShiftConstraint::describe() const {
  return risk_factor + (mode == ChangeMode::relative ? " relative shift " : " shift ") +
         (direction == Direction::at_least ? ">= " : "<= ") + fmt(threshold);
}

ConstrainedSurface constrained_peak_loss_surface(std::span<const double> value_path, const TimeSeriesPanel& panel,
                                                 std::size_t L, std::size_t H, const ShiftConstraint& constraint) {
  if (!panel.has_series(constraint.risk_factor)) {
    throw ConfigError("constraint references unknown risk factor '" + constraint.risk_factor + "'");
  }
  if (panel.size() != value_path.size()) throw ConfigError("value path and panel differ in length");
  const auto levels = panel.series(constraint.risk_factor);
  const WindowFilter eligible = [levels, constraint](std::size_t s, std::size_t e) {
    return constraint.admits(risk_factor_shift(levels, s, e, constraint.mode));
  };
  return constrained_peak_loss_surface(
      value_path.size(), [value_path](std::size_t s, std::size_t e) { return value_path[e] - value_path[s]; },
      eligible, L, H);
}

void extract_rf_shifts(const TimeSeriesPanel& panel, std::vector<PeakLossRecord>& records,
                       std::span<const RiskFactorRule> rules) {
  std::vector<std::span<const double>> levels;
  for (const auto& r : rules) {
    if (!panel.has_series(r.series)) throw DataError("risk factor '" + r.series + "' is not in the panel");
    levels.push_back(panel.series(r.series));
  }
  for (auto& rec : records) {
    if (rec.end < rec.start || rec.end >= panel.size()) throw DataError("record window outside the panel");
    rec.shifts.clear();
    for (std::size_t i = 0; i < rules.size(); ++i) {
      rec.shifts.push_back(risk_factor_shift(levels[i], rec.start, rec.end, rules[i].mode));
    }
  }
}

int StressCategorySpec::categories() const {
  int n = 0;
  for (const auto& b : loss_thresholds) n += static_cast<int>(b.size()) + 1;
  return n;
}

void StressCategorySpec::validate() const {
  const auto increasing = [](const std::vector<double>& v, const char* what) {
    for (double x : v) {
      if (!std::isfinite(x)) throw ConfigError(std::string(what) + " thresholds must be finite");
    }
    for (std::size_t i = 1; i < v.size(); ++i) {
      if (!(v[i - 1] < v[i])) throw ConfigError(std::string(what) + " thresholds must be strictly increasing");
    }
  };
  increasing(key_thresholds, "key-shift");
  if (loss_thresholds.size() != key_thresholds.size() + 1) {
    throw ConfigError("need one loss-threshold list per key-shift band (" + std::to_string(key_thresholds.size() + 1) +
                      ")");
  }
  for (const auto& b : loss_thresholds) increasing(b, "loss");
  if (!key_factor && !key_thresholds.empty()) throw ConfigError("key-shift thresholds require a key risk factor");
}

int StressCategorySpec::category_of(double loss, double key_shift) const {
  std::size_t band = 0;
  if (key_factor) {
    band = static_cast<std::size_t>(std::upper_bound(key_thresholds.begin(), key_thresholds.end(), key_shift) -
                                    key_thresholds.begin());
  }
  int offset = 0;
  for (std::size_t b = 0; b < band; ++b) offset += static_cast<int>(loss_thresholds[b].size()) + 1;
  const auto& cuts = loss_thresholds[band];
  return offset + static_cast<int>(std::upper_bound(cuts.begin(), cuts.end(), loss) - cuts.begin());
}

std::string StressCategorySpec::describe(int category) const {
  int offset = 0;
  for (std::size_t b = 0; b < loss_thresholds.size(); ++b) {
    const int cells = static_cast<int>(loss_thresholds[b].size()) + 1;
    if (category < offset + cells) {
      const auto cell = static_cast<std::size_t>(category - offset);
      const auto& cuts = loss_thresholds[b];
      const double lo = cell == 0 ? -std::numeric_limits<double>::infinity() : cuts[cell - 1];
      const double hi = cell == cuts.size() ? std::numeric_limits<double>::infinity() : cuts[cell];
      std::string s = "loss in [" + fmt(lo) + ", " + fmt(hi) + ")";
      if (key_factor) {
        const double klo = b == 0 ? -std::numeric_limits<double>::infinity() : key_thresholds[b - 1];
        const double khi =
            b == key_thresholds.size() ? std::numeric_limits<double>::infinity() : key_thresholds[b];
        s += ", key shift in [" + fmt(klo) + ", " + fmt(khi) + ")";
      }
      return s;
    }
    offset += cells;
  }
  throw ConfigError("category index out of range");
}

std::vector<int> classify_stress(std::span<const PeakLossRecord> records, const StressCategorySpec& spec) {
  spec.validate();
  std::vector<int> out;
  out.reserve(records.size());
  for (const auto& r : records) {
    double key = 0.0;
    if (spec.key_factor) {
      if (*spec.key_factor >= r.shifts.size()) throw DataError("record has no shift for the key risk factor");
      key = r.shifts[*spec.key_factor];
    }
    out.push_back(spec.category_of(r.loss, key));
  }
  return out;
}

std::vector<CategoryLossGaussian> fit_category_gaussians(std::span<const PeakLossRecord> records,
                                                         std::span<const int> labels, int categories) {
  if (records.size() != labels.size()) throw ConfigError("records and labels differ in length");
  if (records.empty()) throw DataError("no peak-loss records to fit");
  std::vector<double> all;
  all.reserve(records.size());
  for (const auto& r : records) all.push_back(r.loss);
  double floor = 1e-6 * sample_std(all);
  if (!(floor > 0.0)) floor = 1e-12;

  std::vector<CategoryLossGaussian> out(static_cast<std::size_t>(categories));
  for (int j = 0; j < categories; ++j) {
    std::vector<double> losses;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (labels[i] == j) losses.push_back(records[i].loss);
    }
    auto& g = out[static_cast<std::size_t>(j)];
    g.count = losses.size();
    g.low_confidence = g.count < 5;
    if (losses.empty()) continue;
    g.fitted = true;
    g.mean = mean(losses);
    g.sd = sample_std(losses);
    if (losses.size() < 2 || g.sd < floor) {
      g.sd = floor;
      g.floored = true;
    }
  }
  return out;
}

std::vector<BivariateFit> fit_bivariate(std::span<const PeakLossRecord> records, std::span<const int> labels,
                                        int categories, std::size_t risk_factor) {
  if (records.size() != labels.size()) throw ConfigError("records and labels differ in length");
  std::vector<BivariateFit> out(static_cast<std::size_t>(categories));
  for (int j = 0; j < categories; ++j) {
    std::vector<double> xs, ys;
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (labels[i] != j) continue;
      if (risk_factor >= records[i].shifts.size()) throw DataError("record has no shift for the risk factor");
      xs.push_back(records[i].loss);
      ys.push_back(records[i].shifts[risk_factor]);
    }
    auto& f = out[static_cast<std::size_t>(j)];
    f.count = xs.size();
    if (xs.empty()) continue;
    f.mean_loss = mean(xs);
    f.mean_shift = mean(ys);
    if (xs.size() < 2) continue;
    f.degenerate = false;
    double sxx = 0.0, syy = 0.0, sxy = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
      const double dx = xs[i] - f.mean_loss;
      const double dy = ys[i] - f.mean_shift;
      sxx += dx * dx;
      syy += dy * dy;
      sxy += dx * dy;
    }
    const double denom = static_cast<double>(xs.size() - 1);
    f.var_loss = sxx / denom;
    f.var_shift = syy / denom;
    const double bound = std::sqrt(f.var_loss * f.var_shift);
    f.cov = std::clamp(sxy / denom, -bound, bound);
  }
  return out;
}

LossMixture::LossMixture(std::vector<double> weights, std::vector<CategoryLossGaussian> components)
    : weights_(std::move(weights)), components_(std::move(components)) {
  if (weights_.size() != components_.size()) throw ConfigError("mixture weights and components differ in length");
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (weights_[j] > 0.0 && (!components_[j].fitted || !(components_[j].sd > 0.0))) {
      throw ConfigError("mixture puts mass on an unfitted component");
    }
  }
}

double LossMixture::cdf(double x) const {
  if (x == -std::numeric_limits<double>::infinity()) return 0.0;
  if (x == std::numeric_limits<double>::infinity()) return 1.0;
  double c = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (weights_[j] > 0.0) c += weights_[j] * normal_cdf((x - components_[j].mean) / components_[j].sd);
  }
  return std::clamp(c, 0.0, 1.0);
}

double LossMixture::pdf(double x) const {
  double p = 0.0;
  for (std::size_t j = 0; j < weights_.size(); ++j) {
    if (weights_[j] > 0.0) {
      p += weights_[j] * normal_pdf((x - components_[j].mean) / components_[j].sd) / components_[j].sd;
    }
  }
  return p;
}

LossMixture loss_distribution(std::span<const double> category_probs,
                              std::span<const CategoryLossGaussian> gaussians) {
  if (category_probs.size() != gaussians.size()) throw ConfigError("category probabilities and fits differ in length");
  double live = 0.0;
  for (std::size_t j = 0; j < gaussians.size(); ++j) {
    if (!(category_probs[j] >= 0.0)) throw ConfigError("category probabilities must be nonnegative");
    if (gaussians[j].fitted) live += category_probs[j];
  }
  if (!(live > 0.0)) throw DataError("no fitted category carries probability mass");
  std::vector<double> w(gaussians.size(), 0.0);
  for (std::size_t j = 0; j < gaussians.size(); ++j) {
    if (gaussians[j].fitted) w[j] = category_probs[j] / live;
  }
  return LossMixture(std::move(w), std::vector<CategoryLossGaussian>(gaussians.begin(), gaussians.end()));
}

double target_loss(const LossMixture& mixture, double p_star) {
  if (!(p_star > 0.0 && p_star < 1.0)) throw ConfigError("p* must lie in (0, 1)");
  const double target = 1.0 - p_star;
  double lo = std::numeric_limits<double>::infinity();
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t j = 0; j < mixture.weights().size(); ++j) {
    if (mixture.weights()[j] <= 0.0) continue;
    const auto& g = mixture.components()[j];
    lo = std::min(lo, g.mean - 40.0 * g.sd);
    hi = std::max(hi, g.mean + 40.0 * g.sd);
  }
  if (!(lo < hi)) throw ConfigError("mixture has no mass");
  // Bisection until the bracket cannot shrink further.
  for (int i = 0; i < 2000; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (mixture.cdf(mid) < target) lo = mid;
    else hi = mid;
  }
  return std::abs(mixture.cdf(lo) - target) <= std::abs(mixture.cdf(hi) - target) ? lo : hi;
}

ConditionalShift conditional_shift(const BivariateFit& fit, double loss) {
  if (!(fit.var_loss > 0.0)) return {fit.mean_shift, true};
  return {fit.mean_shift + fit.cov / fit.var_loss * (loss - fit.mean_loss), false};
}

ScenarioShifts scenario_shifts(std::span<const double> category_probs,
                               const std::vector<std::vector<BivariateFit>>& fits, double target) {
  if (category_probs.size() != fits.size()) throw ConfigError("category probabilities and fits differ in length");
  const std::size_t n_rf = fits.empty() ? 0 : fits.front().size();
  ScenarioShifts out{std::vector<double>(n_rf, 0.0), std::vector<bool>(n_rf, false)};
  for (std::size_t j = 0; j < fits.size(); ++j) {
    if (fits[j].size() != n_rf) throw ConfigError("every category needs a fit per risk factor");
    const double p = category_probs[j];
    if (p == 0.0) continue;
    for (std::size_t i = 0; i < n_rf; ++i) {
      if (fits[j][i].count == 0) throw ConfigError("category with probability mass has no bivariate fit");
      const auto c = conditional_shift(fits[j][i], target);
      out.shifts[i] += p * c.value;
      if (c.degenerate) out.degenerate[i] = true;
    }
  }
  return out;
}

void StressConfig::validate(const TimeSeriesPanel& panel) const {
  if (L < 1 || H < 1) throw ConfigError("L and H must be positive");
  if (window <= H) throw ConfigError("calibration window must exceed H");
  if (p_star.empty()) throw ConfigError("at least one p* is required");
  for (double p : p_star) {
    if (!(p > 0.0 && p < 1.0)) throw ConfigError("p* must lie in (0, 1)");
  }
  if (features.empty()) throw ConfigError("stress design needs at least one feature");
  if (vi.clusters < 1) throw ConfigError("K must be at least 1");
  if (record_stride < 1) throw ConfigError("record stride must be at least 1");
  if (loss_quantiles) {
    StressCategorySpec probe = categories;
    probe.loss_thresholds = *loss_quantiles;
    probe.validate();
    for (const auto& band : *loss_quantiles) {
      for (double q : band) {
        if (!(q > 0.0 && q < 1.0)) throw ConfigError("loss quantiles must lie in (0, 1)");
      }
    }
  } else {
    categories.validate();
  }
  int J = categories.categories();
  if (loss_quantiles) {
    J = 0;
    for (const auto& band : *loss_quantiles) J += static_cast<int>(band.size()) + 1;
  }
  if (J < 1) throw ConfigError("stress design needs J >= 1");
  if (categories.key_factor && *categories.key_factor >= risk_factors.size()) {
    throw ConfigError("key risk factor is not among the risk factors");
  }
  for (const auto& r : risk_factors) {
    if (!panel.has_series(r.series)) throw ConfigError("risk factor '" + r.series + "' is not in the panel");
  }
  if (constraint && !panel.has_series(constraint->risk_factor)) {
    throw ConfigError("constraint risk factor '" + constraint->risk_factor + "' is not in the panel");
  }
  portfolio.validate(panel);
}

WindowPnl portfolio_window_pnl(const TimeSeriesPanel& panel, const Portfolio& portfolio) {
  return [&panel, &portfolio](std::size_t s, std::size_t e) { return portfolio.window_pnl(panel, s, e); };
}

std::vector<PeakLossRecord> calibration_records(const TimeSeriesPanel& panel, const StressConfig& config,
                                                std::size_t asof, std::size_t* omitted) {
  if (asof >= panel.size()) throw ConfigError("as-of index outside the panel");
  if (asof + 1 < config.window) {
    throw DataError("stress design at " + format_date(panel.dates()[asof]) + " needs " +
                    std::to_string(config.window) + " observations, have " + std::to_string(asof + 1));
  }
  const std::size_t lo = asof + 1 - config.window;
  const std::size_t length = config.window;
  const WindowPnl pnl = [&](std::size_t s, std::size_t e) { return config.portfolio.window_pnl(panel, lo + s, lo + e); };

  ConstrainedSurface surface;
  if (config.constraint) {
    const auto levels = panel.series(config.constraint->risk_factor);
    const ShiftConstraint c = *config.constraint;
    const WindowFilter eligible = [levels, c, lo](std::size_t s, std::size_t e) {
      return c.admits(risk_factor_shift(levels, lo + s, lo + e, c.mode));
    };
    surface = constrained_peak_loss_surface(length, pnl, eligible, config.L, config.H);
  } else {
    surface.records = peak_loss_surface(length, pnl, config.L, config.H);
  }
  if (omitted) *omitted = surface.omitted.size();

  std::vector<PeakLossRecord> out;
  for (std::size_t i = 0; i < surface.records.size(); i += config.record_stride) {
    PeakLossRecord r = surface.records[i];
    r.t += lo;
    r.start += lo;
    r.end += lo;
    out.push_back(std::move(r));
  }
  extract_rf_shifts(panel, out, config.risk_factors);
  return out;
}

namespace {

double quantile7(std::vector<double> v, double q) {
  std::sort(v.begin(), v.end());
  const double h = (static_cast<double>(v.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

StressCategorySpec resolve_categories(const StressConfig& config, std::span<const PeakLossRecord> records) {
  StressCategorySpec spec = config.categories;
  if (!config.loss_quantiles) return spec;
  if (records.empty()) throw DataError("no records to derive loss thresholds from");
  const auto& q = *config.loss_quantiles;
  spec.loss_thresholds.assign(q.size(), {});
  std::vector<double> all;
  std::vector<std::vector<double>> bands(q.size());
  for (const auto& r : records) {
    all.push_back(r.loss);
    double key = 0.0;
    if (spec.key_factor) {
      if (*spec.key_factor >= r.shifts.size()) throw DataError("record has no shift for the key risk factor");
      key = r.shifts[*spec.key_factor];
    }
    const auto b = static_cast<std::size_t>(
        std::upper_bound(spec.key_thresholds.begin(), spec.key_thresholds.end(), key) - spec.key_thresholds.begin());
    if (spec.key_factor) bands[b].push_back(r.loss);
    else bands[0].push_back(r.loss);
  }
  for (std::size_t b = 0; b < q.size(); ++b) {
    const auto& pool = bands[b].empty() ? all : bands[b];
    for (double level : q[b]) {
      double cut = quantile7(pool, level);
      if (!spec.loss_thresholds[b].empty() && cut <= spec.loss_thresholds[b].back()) {
        cut = std::nextafter(spec.loss_thresholds[b].back(), std::numeric_limits<double>::infinity());
      }
      spec.loss_thresholds[b].push_back(cut);
    }
  }
  return spec;
}

ScenarioResult design_scenario(const TimeSeriesPanel& panel, const StressConfig& config, std::size_t asof) {
  config.validate(panel);
  const FeatureMatrix features = build_features(panel, config.features);
  return design_scenario(panel, features, config, asof);
}

ScenarioResult design_scenario(const TimeSeriesPanel& panel, const FeatureMatrix& features,
                               const StressConfig& config, std::size_t asof) {
  config.validate(panel);
  if (asof >= panel.size()) throw ConfigError("as-of index outside the panel");
  const auto row_now = features.row_of_panel_index(asof);
  if (!row_now) throw DataError("features unavailable at " + format_date(panel.dates()[asof]));

  std::size_t omitted = 0;
  auto all = calibration_records(panel, config, asof, &omitted);
  std::vector<PeakLossRecord> records;
  std::vector<std::size_t> rows;
  for (auto& r : all) {
    if (const auto row = features.row_of_panel_index(r.t)) {
      rows.push_back(*row);
      records.push_back(std::move(r));
    }
  }
  if (records.empty()) throw DataError("no peak-loss records with features in the calibration window");

  const StressCategorySpec grid = resolve_categories(config, records);
  const int J = grid.categories();
  const auto labels = classify_stress(records, grid);
  ScenarioResult res;
  res.asof = panel.dates()[asof];
  res.records = records.size();
  res.omitted = omitted;
  res.constraint = config.constraint ? config.constraint->describe() : std::string{};
  for (const auto& r : config.risk_factors) res.risk_factors.push_back(r.series);
  for (int j = 0; j < J; ++j) res.category_labels.push_back(grid.describe(j));
  res.category_fits = fit_category_gaussians(records, labels, J);
  res.bivariate.assign(static_cast<std::size_t>(J), {});
  for (std::size_t i = 0; i < config.risk_factors.size(); ++i) {
    const auto fits = fit_bivariate(records, labels, J, i);
    for (int j = 0; j < J; ++j) res.bivariate[static_cast<std::size_t>(j)].push_back(fits[static_cast<std::size_t>(j)]);
  }

  ObservationSet obs;
  obs.x.resize(static_cast<Eigen::Index>(records.size()), features.x.cols());
  for (std::size_t i = 0; i < records.size(); ++i) {
    obs.x.row(static_cast<Eigen::Index>(i)) = features.x.row(static_cast<Eigen::Index>(rows[i]));
  }
  obs.d = labels;
  CaviOptions cavi = config.vi.cavi;
  cavi.seed = Rng::mix(config.vi.cavi.seed + asof);
  const VIHyperparams hyper = default_hyperparams(obs.x, config.vi.clusters, J, cavi.seed, config.vi.prior);
  const VariationalState state = cavi_fit(obs, hyper, cavi);
  res.elbo = state.elbo_trace.back();
  res.converged = state.converged;

  const Eigen::VectorXd x_now = features.x.row(static_cast<Eigen::Index>(*row_now)).transpose();
  const Eigen::VectorXd q = predictive_cluster_probs(x_now, hyper, state);
  const Eigen::VectorXd p = predictive_category_probs(x_now, hyper, state);
  res.cluster_probs.assign(q.data(), q.data() + q.size());
  res.category_probs.assign(p.data(), p.data() + p.size());

  const LossMixture mixture = loss_distribution(res.category_probs, res.category_fits);
  for (double ps : config.p_star) {
    ScenarioLevel level;
    level.p_star = ps;
    level.target_loss = target_loss(mixture, ps);
    const auto sh = scenario_shifts(mixture.weights(), res.bivariate, level.target_loss);
    level.shifts = sh.shifts;
    level.degenerate = sh.degenerate;
    res.levels.push_back(std::move(level));
  }
  return res;
}

ScenarioResult design_scenario(const TimeSeriesPanel& panel, const StressConfig& config) {
  if (panel.empty()) throw DataError("stress design: panel is empty");
  return design_scenario(panel, config, panel.size() - 1);
}

std::vector<RollingScenario> rolling_scenarios(const TimeSeriesPanel& panel, const StressConfig& config,
                                               std::size_t stride, std::optional<Date> start,
                                               std::optional<Date> end) {
  config.validate(panel);
  if (stride < 1) throw ConfigError("stride must be at least 1");
  const FeatureMatrix features = build_features(panel, config.features);

  // Realized Loss^t over the whole panel, under the same constraint.
  std::vector<std::optional<double>> realized(panel.size());
  if (panel.size() > config.H) {
    const WindowPnl pnl = portfolio_window_pnl(panel, config.portfolio);
    ConstrainedSurface surface;
    if (config.constraint) {
      const auto levels = panel.series(config.constraint->risk_factor);
      const ShiftConstraint c = *config.constraint;
      surface = constrained_peak_loss_surface(
          panel.size(), pnl,
          [levels, c](std::size_t s, std::size_t e) { return c.admits(risk_factor_shift(levels, s, e, c.mode)); },
          config.L, config.H);
    } else {
      surface.records = peak_loss_surface(panel.size(), pnl, config.L, config.H);
    }
    for (const auto& r : surface.records) realized[r.t] = r.loss;
  }

  std::vector<RollingScenario> out;
  std::size_t seen = 0;
  for (std::size_t t = config.window - 1; t < panel.size(); ++t) {
    const Date d = panel.dates()[t];
    if (start && d < *start) continue;
    if (end && d > *end) break;
    if (!features.row_of_panel_index(t)) continue;
    if (seen++ % stride != 0) continue;
    out.push_back({t, realized[t], design_scenario(panel, features, config, t)});
  }
  if (out.empty()) throw DataError("rolling stress design: no date has enough history");
  return out;
}

}  // namespace regimerisk
