#include "regimerisk/oracle_lab.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "regimerisk/error.hpp"
#include "regimerisk/stats.hpp"

namespace regimerisk {

namespace {

std::vector<Date> business_days(Date start, std::size_t n) {
  std::vector<Date> out;
  out.reserve(n);
  Date d = start;
  while (out.size() < n) {
    const std::chrono::weekday wd{d};
    if (wd != std::chrono::Saturday && wd != std::chrono::Sunday) out.push_back(d);
    d += std::chrono::days{1};
  }
  return out;
}

void check_simplex(std::span<const double> p, const std::string& what) {
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0)) throw ConfigError(what + " has a negative entry");
    s += v;
  }
  if (std::abs(s - 1.0) > 1e-9) throw ConfigError(what + " must sum to one");
}

std::vector<double> row_of(const Eigen::MatrixXd& m, Eigen::Index r) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(r, j);
  return out;
}

struct Draws {
  FeatureMatrix features;
  std::vector<int> categories;
  std::vector<int> clusters;
};

Draws draw_clusters(const SyntheticSpec& spec) {
  spec.validate();
  const Rng root(spec.seed);
  Rng rc = root.split(0), rx = root.split(1), rd = root.split(2);
  const Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(spec.M).matrixL();
  const std::vector<double> pi(spec.pi.data(), spec.pi.data() + spec.pi.size());

  Draws out;
  const auto T = static_cast<std::size_t>(spec.T);
  out.features.dates = business_days(spec.start, T);
  out.features.x.resize(spec.T, spec.dim());
  for (int i = 0; i < spec.dim(); ++i) out.features.feature_names.push_back("x" + std::to_string(i + 1));
  for (std::size_t t = 0; t < T; ++t) {
    out.features.panel_index.push_back(t);
    const auto k = static_cast<Eigen::Index>(rc.categorical(pi));
    Eigen::VectorXd z(spec.dim());
    for (int i = 0; i < spec.dim(); ++i) z(i) = rx.normal();
    out.features.x.row(static_cast<Eigen::Index>(t)) = (spec.mu[static_cast<std::size_t>(k)] + chol * z).transpose();
    const auto theta = row_of(spec.theta, k);
    out.clusters.push_back(static_cast<int>(k));
    out.categories.push_back(static_cast<int>(rd.categorical(theta)));
  }
  return out;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (T < 1) throw ConfigError("synthetic T must be at least 1");
  const int K = clusters();
  if (K < 1) throw ConfigError("synthetic spec needs K >= 1");
  check_simplex(std::span<const double>(pi.data(), static_cast<std::size_t>(pi.size())), "pi");
  if (static_cast<int>(mu.size()) != K) throw ConfigError("synthetic spec needs one mean per cluster");
  const int n = dim();
  if (n < 1 || M.cols() != n) throw ConfigError("M must be square and nonempty");
  for (const auto& m : mu) {
    if (m.size() != n) throw ConfigError("cluster mean has the wrong dimension");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(M);
  if (llt.info() != Eigen::Success) throw ConfigError("M is not positive definite");
  if (theta.rows() != K || theta.cols() < 1) throw ConfigError("theta must be K x J");
  for (Eigen::Index k = 0; k < K; ++k) check_simplex(row_of(theta, k), "theta row " + std::to_string(k + 1));
}

VarDataset gen_var_dataset(const SyntheticSpec& spec) {
  auto d = draw_clusters(spec);
  return {std::move(d.features), std::move(d.categories), std::move(d.clusters)};
}

StressDataset gen_stress_dataset(const SyntheticSpec& spec, std::span<const StressCategoryLaw> laws) {
  if (static_cast<int>(laws.size()) != spec.categories()) {
    throw ConfigError("need one stress law per category");
  }
  for (const auto& law : laws) {
    const auto n = law.shift_mean.size();
    if (law.shift_sd.size() != n || law.correlation.size() != n) {
      throw ConfigError("stress law shift parameters differ in length");
    }
    if (law.loss_sd < 0.0) throw ConfigError("loss sd must be nonnegative");
    for (std::size_t i = 0; i < n; ++i) {
      if (law.shift_sd[i] < 0.0 || std::abs(law.correlation[i]) > 1.0) {
        throw ConfigError("invalid shift sd or correlation");
      }
    }
  }
  auto d = draw_clusters(spec);
  Rng rl = Rng(spec.seed).split(3);
  StressDataset out;
  out.records.reserve(d.categories.size());
  for (std::size_t t = 0; t < d.categories.size(); ++t) {
    const auto& law = laws[static_cast<std::size_t>(d.categories[t])];
    PeakLossRecord rec;
    rec.t = rec.start = rec.end = t;
    const double zl = rl.normal();
    rec.loss = law.loss_mean + law.loss_sd * zl;
    for (std::size_t i = 0; i < law.shift_mean.size(); ++i) {
      const double z = rl.normal();
      const double rho = law.loss_sd > 0.0 ? law.correlation[i] : 0.0;
      rec.shifts.push_back(law.shift_mean[i] + law.shift_sd[i] * (rho * zl + std::sqrt(1.0 - rho * rho) * z));
    }
    out.records.push_back(std::move(rec));
  }
  out.features = std::move(d.features);
  out.categories = std::move(d.categories);
  out.clusters = std::move(d.clusters);
  return out;
}

std::optional<BruteForcePeak> brute_force_peak_loss(std::span<const double> value_path, std::size_t L, std::size_t H,
                                                    std::size_t t, const WindowFilter& eligible) {
  if (t + H >= value_path.size()) throw ConfigError("t + H lies outside the path");
  std::optional<BruteForcePeak> best;
  for (std::size_t s = t; s < t + H; ++s) {
    for (std::size_t e = s + 1; e <= std::min(s + L, t + H); ++e) {
      if (eligible && !eligible(s, e)) continue;
      const double v = value_path[e] - value_path[s];
      if (!best || v < best->loss) best = BruteForcePeak{v, s, e};
    }
  }
  return best;
}

double brute_force_weighted_var(std::span<const double> outcomes, std::span<const double> probabilities,
                                double confidence) {
  if (outcomes.size() != probabilities.size() || outcomes.empty()) throw ConfigError("malformed distribution");
  std::optional<double> best;
  for (std::size_t i = 0; i < outcomes.size(); ++i) {
    if (!(probabilities[i] > 0.0)) continue;
    const double x = -outcomes[i];
    double exceed = 0.0;
    for (std::size_t j = 0; j < outcomes.size(); ++j) {
      if (probabilities[j] > 0.0 && -outcomes[j] > x) exceed += probabilities[j];
    }
    if (exceed <= (1.0 - confidence) + 1e-12 && (!best || x < *best)) best = x;
  }
  if (!best) throw ConfigError("distribution has no mass");
  return *best;
}

double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
  if (a.size() != b.size()) throw ConfigError("labelings differ in length");
  std::map<std::pair<int, int>, double> cells;
  std::map<int, double> rows, cols;
  for (std::size_t i = 0; i < a.size(); ++i) {
    cells[{a[i], b[i]}] += 1.0;
    rows[a[i]] += 1.0;
    cols[b[i]] += 1.0;
  }
  const auto c2 = [](double n) { return n * (n - 1.0) / 2.0; };
  double sum_cells = 0.0, sum_rows = 0.0, sum_cols = 0.0;
  for (const auto& [_, n] : cells) sum_cells += c2(n);
  for (const auto& [_, n] : rows) sum_rows += c2(n);
  for (const auto& [_, n] : cols) sum_cols += c2(n);
  const double total = c2(static_cast<double>(a.size()));
  const double expected = total > 0.0 ? sum_rows * sum_cols / total : 0.0;
  const double max_index = 0.5 * (sum_rows + sum_cols);
  if (max_index == expected) return 1.0;
  return (sum_cells - expected) / (max_index - expected);
}

void MarketSynthSpec::validate() const {
  if (days < 2) throw ConfigError("synthetic market needs at least two days");
  if (regimes.empty()) throw ConfigError("synthetic market needs at least one regime");
  for (const auto& r : regimes) {
    if (r.eq_vol < 0.0 || r.rate_vol < 0.0 || r.fx_vol < 0.0) throw ConfigError("regime volatilities must be >= 0");
    if (!(r.vix_level > 0.0)) throw ConfigError("regime VIX level must be positive");
    if (std::abs(r.eq_rate_corr) > 1.0) throw ConfigError("regime correlation must lie in [-1, 1]");
  }
  for (std::size_t i = 0; i < schedule.size(); ++i) {
    if (schedule[i].regime >= regimes.size()) throw ConfigError("schedule refers to an unknown regime");
    if (i > 0 && schedule[i].day <= schedule[i - 1].day) throw ConfigError("schedule days must increase");
  }
  if (!(vix_reversion > 0.0 && vix_reversion <= 1.0)) throw ConfigError("VIX reversion must lie in (0, 1]");
  if (vix_noise < 0.0) throw ConfigError("VIX noise must be >= 0");
}

std::size_t MarketSynthSpec::regime_at(std::size_t day) const {
  std::size_t r = 0;
  for (const auto& s : schedule) {
    if (s.day <= day) r = s.regime;
  }
  return r;
}

MarketSynthSpec MarketSynthSpec::regime_switch(std::uint64_t seed, std::size_t days, std::size_t switch_day) {
  MarketSynthSpec s;
  s.seed = seed;
  s.days = days;
  s.regimes = {
      MarketRegime{"calm", 0.0003, 0.006, 0.04, 14.0, 0.004, 0.3},
      MarketRegime{"stressed", -0.001, 0.025, 0.10, 45.0, 0.008, 0.5},
  };
  s.schedule = {RegimeSwitch{switch_day, 1}};
  return s;
}

MarketSynthResult gen_market_panel(const MarketSynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const std::size_t n = spec.days;
  std::vector<double> eq(n), ust(n), vix(n), fx(n);
  MarketSynthResult out;
  out.regime.resize(n);
  eq[0] = 3000.0;
  ust[0] = 2.0;
  vix[0] = spec.regimes[spec.regime_at(0)].vix_level;
  fx[0] = 1.10;
  out.regime[0] = spec.regime_at(0);
  for (std::size_t t = 1; t < n; ++t) {
    const std::size_t r = spec.regime_at(t);
    const MarketRegime& g = spec.regimes[r];
    out.regime[t] = r;
    const double z1 = rng.normal(), z2 = rng.normal(), z3 = rng.normal(), z4 = rng.normal();
    eq[t] = eq[t - 1] * (1.0 + g.eq_drift + g.eq_vol * z1);
    ust[t] = ust[t - 1] + g.rate_vol * (g.eq_rate_corr * z1 + std::sqrt(1.0 - g.eq_rate_corr * g.eq_rate_corr) * z2);
    const double lv = std::log(vix[t - 1]);
    vix[t] = std::exp(lv + spec.vix_reversion * (std::log(g.vix_level) - lv) + spec.vix_noise * z3);
    fx[t] = fx[t - 1] * (1.0 + g.fx_vol * z4);
  }
  out.panel = TimeSeriesPanel(business_days(spec.start, n),
                              {{"EQ", std::move(eq)}, {"UST10Y", std::move(ust)}, {"VIX", std::move(vix)},
                               {"FX", std::move(fx)}});
  return out;
}

}  // namespace regimerisk
