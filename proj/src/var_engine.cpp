#include "regimerisk/var_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "regimerisk/error.hpp"
#include "regimerisk/stats.hpp"

namespace regimerisk {

void PnlCategorySpec::validate() const {
  for (double b : thresholds) {
    if (!std::isfinite(b)) throw ConfigError("category thresholds must be finite");
  }
  for (std::size_t i = 1; i < thresholds.size(); ++i) {
    if (!(thresholds[i - 1] < thresholds[i])) throw ConfigError("category thresholds must be strictly increasing");
  }
}

int PnlCategorySpec::category_of(double normalized) const {
  // Interval [b_{j-1}, b_j): count thresholds <= value.
  return static_cast<int>(std::upper_bound(thresholds.begin(), thresholds.end(), normalized) - thresholds.begin());
}

Normalizer Normalizer::from_window(std::span<const double> window) {
  if (window.empty()) throw DataError("normalization window is empty");
  Normalizer n;
  n.center = mean(window);
  n.scale = sample_std(window);
  n.identity = false;
  return n;
}

double Normalizer::apply(double v) const {
  if (identity) return v;
  if (scale < 1e-12) return 0.0;
  return (v - center) / scale;
}

Normalizer make_normalizer(const PnlCategorySpec& spec, std::span<const double> window) {
  return spec.normalization == PnlCategorySpec::Normalization::raw ? Normalizer::raw()
                                                                    : Normalizer::from_window(window);
}

std::vector<double> EmpiricalCategoryDist::members(int j) const {
  std::vector<double> out;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (category[i] == j) out.push_back(outcomes[i]);
  }
  return out;
}

EmpiricalCategoryDist bucket_returns(std::span<const double> pnl, const PnlCategorySpec& spec,
                                     const Normalizer& normalizer) {
  spec.validate();
  EmpiricalCategoryDist d;
  d.outcomes.assign(pnl.begin(), pnl.end());
  d.counts.assign(static_cast<std::size_t>(spec.categories()), 0);
  d.category.reserve(pnl.size());
  for (double v : pnl) {
    const int j = spec.category_of(normalizer.apply(v));
    d.category.push_back(j);
    ++d.counts[static_cast<std::size_t>(j)];
  }
  return d;
}

EmpiricalCategoryDist bucket_returns(const HistRetVector& hist, const PnlCategorySpec& spec,
                                     const Normalizer& normalizer) {
  if (hist.pnl.empty()) throw DataError("bucket_returns: empty historical-simulation vector");
  return bucket_returns(hist.pnl, spec, normalizer);
}

std::vector<std::optional<int>> label_outcomes(const Series& pnl_forward, const PnlCategorySpec& spec,
                                               const Normalizer& normalizer) {
  spec.validate();
  std::vector<std::optional<int>> out(pnl_forward.size());
  for (std::size_t t = 0; t < pnl_forward.size(); ++t) {
    if (pnl_forward[t]) out[t] = spec.category_of(normalizer.apply(*pnl_forward[t]));
  }
  return out;
}

std::vector<double> redistribute_empty(std::span<const double> category_probs, std::span<const std::size_t> counts) {
  if (category_probs.size() != counts.size()) throw ConfigError("category probabilities and counts differ in length");
  double live = 0.0;
  double total = 0.0;
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (!(category_probs[j] >= 0.0)) throw ConfigError("category probabilities must be nonnegative");
    total += category_probs[j];
    if (counts[j] > 0) live += category_probs[j];
  }
  std::vector<double> out(counts.size(), 0.0);
  if (live > 0.0) {
    for (std::size_t j = 0; j < counts.size(); ++j) {
      if (counts[j] > 0) out[j] = category_probs[j] / live;
    }
    return out;
  }
  // Every nonempty category has zero probability: fall back to empirical frequencies.
  const double n = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::size_t{0}));
  if (n == 0.0 || total <= 0.0) throw DataError("all categories are empty");
  for (std::size_t j = 0; j < counts.size(); ++j) out[j] = static_cast<double>(counts[j]) / n;
  return out;
}

WeightedPnlDistribution weighted_distribution(std::span<const double> category_probs,
                                              const EmpiricalCategoryDist& dist) {
  if (static_cast<int>(category_probs.size()) != dist.categories()) {
    throw ConfigError("category probabilities do not match the number of categories");
  }
  const double total = std::accumulate(category_probs.begin(), category_probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("category probabilities must sum to one");
  const auto p = redistribute_empty(category_probs, dist.counts);
  WeightedPnlDistribution w;
  w.outcomes = dist.outcomes;
  w.probabilities.resize(dist.outcomes.size());
  for (std::size_t i = 0; i < dist.outcomes.size(); ++i) {
    const auto j = static_cast<std::size_t>(dist.category[i]);
    w.probabilities[i] = p[j] / static_cast<double>(dist.counts[j]);
  }
  return w;
}

double var_quantile(const WeightedPnlDistribution& dist, double confidence) {
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  if (dist.outcomes.empty() || dist.outcomes.size() != dist.probabilities.size()) {
    throw ConfigError("var_quantile: malformed distribution");
  }
  std::vector<std::size_t> order;
  order.reserve(dist.outcomes.size());
  for (std::size_t i = 0; i < dist.outcomes.size(); ++i) {
    if (dist.probabilities[i] > 0.0) order.push_back(i);
  }
  if (order.empty()) throw ConfigError("var_quantile: distribution has no mass");
  // Worst loss (lowest P&L) first.
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dist.outcomes[a] < dist.outcomes[b]; });

  const double allowed = (1.0 - confidence) + 1e-12;
  double tail = 0.0;  // P(Loss > current loss)
  double var = -dist.outcomes[order.front()];
  std::size_t i = 0;
  while (i < order.size()) {
    const double loss = -dist.outcomes[order[i]];
    if (tail > allowed) break;
    var = loss;
    double group = 0.0;
    while (i < order.size() && -dist.outcomes[order[i]] == loss) group += dist.probabilities[order[i++]];
    tail += group;
  }
  return var;
}

double hs_var(std::span<const double> pnl, double confidence) {
  if (pnl.empty()) throw DataError("hs_var: empty P&L vector");
  WeightedPnlDistribution w;
  w.outcomes.assign(pnl.begin(), pnl.end());
  w.probabilities.assign(pnl.size(), 1.0 / static_cast<double>(pnl.size()));
  return var_quantile(w, confidence);
}

double hs_var(const HistRetVector& hist, double confidence) { return hs_var(hist.pnl, confidence); }

double gaussian_var(std::span<const double> pnl, double confidence, bool zero_mean) {
  if (pnl.size() < 2) throw DataError("gaussian_var needs at least two observations");
  if (!(confidence > 0.0 && confidence < 1.0)) throw ConfigError("confidence must lie in (0, 1)");
  const double m = zero_mean ? 0.0 : mean(pnl);
  const double sd = sample_std(pnl);
  if (sd == 0.0) return -m;
  return -(m + normal_quantile(1.0 - confidence) * sd);
}

double gaussian_var(const HistRetVector& hist, double confidence, bool zero_mean) {
  return gaussian_var(hist.pnl, confidence, zero_mean);
}

void VarBacktestConfig::validate() const {
  if (features.empty()) throw ConfigError("VaR backtest needs at least one feature");
  if (horizon < 1) throw ConfigError("D must be at least 1");
  if (lookback < 2) throw ConfigError("T must be at least 2");
  if (norm_window < 2) throw ConfigError("normalization window must be at least 2");
  if (confidences.empty()) throw ConfigError("at least one confidence level is required");
  for (double c : confidences) {
    if (!(c > 0.0 && c < 1.0)) throw ConfigError("confidence " + std::to_string(c) + " must lie in (0, 1)");
  }
  categories.validate();
  if (categories.categories() < 2) throw ConfigError("VaR needs J >= 2 categories");
  if (vi.clusters < 1) throw ConfigError("K must be at least 1");
  if (stride < 1) throw ConfigError("stride must be at least 1");
  if (jobs < 1) throw ConfigError("jobs must be at least 1");
}

std::vector<MethodSummary> BacktestReport::summary() const {
  std::vector<MethodSummary> out;
  const char* names[] = {"vi", "hs", "gaussian"};
  for (std::size_t c = 0; c < confidences.size(); ++c) {
    for (int m = 0; m < 3; ++m) {
      MethodSummary s{names[m], confidences[c], 0, 0};
      for (const auto& r : rows) {
        if (!r.ok()) continue;
        const double v = m == 0 ? r.var_vi[c] : m == 1 ? r.var_hs[c] : r.var_gaussian[c];
        ++s.observations;
        if (breach(r.realized, v)) ++s.breaches;
      }
      out.push_back(s);
    }
  }
  return out;
}

std::vector<std::size_t> backtest_dates(const TimeSeriesPanel& panel, const FeatureMatrix& features,
                                        const VarBacktestConfig& config) {
  const std::size_t D = config.horizon;
  const std::size_t T = config.lookback;
  std::size_t first = T + D;
  if (config.categories.normalization == PnlCategorySpec::Normalization::zscore) {
    first = std::max(first, config.norm_window + D);
  }
  std::vector<std::size_t> out;
  bool started = false;
  std::size_t since = 0;
  for (std::size_t t = first; t + D < panel.size(); ++t) {
    const Date date = panel.dates()[t];
    if (config.start && date < *config.start) continue;
    if (config.end && date > *config.end) break;
    const auto row = features.row_of_panel_index(t);
    const auto lo = features.row_of_panel_index(t - D - T);
    const auto hi = features.row_of_panel_index(t - D - 1);
    if (!row || !lo || !hi || *hi - *lo + 1 != T) continue;
    if (started && ++since % config.stride != 0) continue;
    started = true;
    out.push_back(t);
  }
  return out;
}

CalibrationSample calibration_sample(const TimeSeriesPanel& panel, const FeatureMatrix& features,
                                     const Series& pnl_forward, const VarBacktestConfig& config, std::size_t t) {
  const std::size_t D = config.horizon;
  const std::size_t T = config.lookback;
  CalibrationSample cs;
  cs.hist = simulate_hist_returns(panel, config.portfolio, D, T, t);
  cs.normalizer = Normalizer::raw();
  if (config.categories.normalization == PnlCategorySpec::Normalization::zscore) {
    const auto window = config.norm_window == T
                            ? cs.hist
                            : simulate_hist_returns(panel, config.portfolio, D, config.norm_window, t);
    cs.normalizer = Normalizer::from_window(window.pnl);
  }

  const auto row_t = features.row_of_panel_index(t);
  const auto lo = features.row_of_panel_index(t - D - T);
  const auto hi = features.row_of_panel_index(t - D - 1);
  if (!row_t || !lo || !hi || *hi - *lo + 1 != T) throw DataError("features unavailable for the calibration sample");
  cs.asof_row = *row_t;

  cs.obs.x = features.x.middleRows(static_cast<Eigen::Index>(*lo), static_cast<Eigen::Index>(T));
  cs.obs.d.reserve(T);
  for (std::size_t r = *lo; r <= *hi; ++r) {
    const std::size_t tau = features.panel_index[r];
    const auto& fwd = pnl_forward[tau];
    if (!fwd) throw DataError("forward P&L unavailable inside the calibration sample");
    cs.obs.d.push_back(config.categories.category_of(cs.normalizer.apply(*fwd)));
    cs.panel_index.push_back(tau);
  }
  return cs;
}

VarEstimate estimate_var(const TimeSeriesPanel& panel, const FeatureMatrix& features, const Series& pnl_forward,
                         const VarBacktestConfig& config, std::size_t t) {
  const int J = config.categories.categories();
  const CalibrationSample cs = calibration_sample(panel, features, pnl_forward, config, t);
  const auto& obs = cs.obs;
  const auto& hist = cs.hist;
  const auto& norm = cs.normalizer;
  const std::size_t* row_t = &cs.asof_row;

  VarEstimate est;
  CaviOptions cavi = config.vi.cavi;
  cavi.seed = Rng::mix(config.vi.cavi.seed + t);
  est.hyper = default_hyperparams(obs.x, config.vi.clusters, J, cavi.seed, config.vi.prior);
  est.state = cavi_fit(obs, est.hyper, cavi);

  const Eigen::VectorXd x_now = features.x.row(static_cast<Eigen::Index>(*row_t)).transpose();
  est.cluster_probs = predictive_cluster_probs(x_now, est.hyper, est.state);
  est.category_probs = predictive_category_probs(x_now, est.hyper, est.state);
  est.buckets = bucket_returns(hist, config.categories, norm);

  const std::vector<double> probs(est.category_probs.data(), est.category_probs.data() + est.category_probs.size());
  const auto weighted = weighted_distribution(probs, est.buckets);
  for (double c : config.confidences) {
    est.var_vi.push_back(var_quantile(weighted, c));
    est.var_hs.push_back(hs_var(hist, c));
    est.var_gaussian.push_back(gaussian_var(hist, c, config.gaussian_zero_mean));
  }
  return est;
}

BacktestReport var_backtest(const TimeSeriesPanel& panel, const VarBacktestConfig& config) {
  config.validate();
  if (panel.empty()) throw DataError("VaR backtest: panel is empty");
  config.portfolio.validate(panel);
  const FeatureMatrix features = build_features(panel, config.features);
  const Series fwd = forward_pnl(panel, config.portfolio, config.horizon);
  const auto dates = backtest_dates(panel, features, config);
  if (dates.empty()) throw DataError("VaR backtest: no date has enough history");

  BacktestReport report;
  report.confidences = config.confidences;
  report.rows.resize(dates.size());

  const auto run_one = [&](std::size_t i) {
    const std::size_t t = dates[i];
    BacktestRow& row = report.rows[i];
    row.date = panel.dates()[t];
    row.panel_index = t;
    row.realized = *fwd[t];
    try {
      const VarEstimate est = estimate_var(panel, features, fwd, config, t);
      row.var_vi = est.var_vi;
      row.var_hs = est.var_hs;
      row.var_gaussian = est.var_gaussian;
      row.cluster_probs.assign(est.cluster_probs.data(), est.cluster_probs.data() + est.cluster_probs.size());
      row.category_probs.assign(est.category_probs.data(), est.category_probs.data() + est.category_probs.size());
      row.category_counts = est.buckets.counts;
      row.elbo = est.state.elbo_trace.back();
      row.converged = est.state.converged;
    } catch (const std::exception& e) {
      row.error = e.what();
    }
  };

  const auto workers = static_cast<std::size_t>(std::max(1, config.jobs));
  if (workers == 1) {
    for (std::size_t i = 0; i < dates.size(); ++i) run_one(i);
  } else {
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t i = w; i < dates.size(); i += workers) run_one(i);
      });
    }
  }
  return report;
}

}  // namespace regimerisk
