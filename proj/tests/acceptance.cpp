#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "regimerisk/cli_app.hpp"
#include "regimerisk/oracle_lab.hpp"
#include "regimerisk/stress_engine.hpp"
#include "regimerisk/var_engine.hpp"
#include "test_util.hpp"

using namespace regimerisk;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double max_abs(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) { return (a - b).cwiseAbs().maxCoeff(); }

Outcome elbo_monotonicity() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(20240101);
  double worst = 0.0;
  long sweeps = 0;
  for (int i = 0; i < 100; ++i) {
    const int K = 1 + static_cast<int>(rng.uniform() * 4);
    const int J = 2 + static_cast<int>(rng.uniform() * 7);
    const int n = 1 + static_cast<int>(rng.uniform() * 3);
    const int T = 50 + static_cast<int>(rng.uniform() * 451);
    const auto in = testutil::random_instance(1000 + i, K, J, n, T);
    std::vector<std::vector<double>> traces;
    traces.push_back(cavi_fit(in.obs, in.hyper, {300, 1e-10, 0, static_cast<std::uint64_t>(i)}).elbo_trace);
    traces.push_back(cavi_from(in.obs, in.hyper, testutil::random_phi(rng, T, K), {300, 1e-10, 0, 0}).elbo_trace);
    for (const auto& tr : traces) {
      for (std::size_t s = 1; s < tr.size(); ++s) worst = std::max(worst, tr[s - 1] - tr[s]);
      sweeps += static_cast<long>(tr.size()) - 1;
    }
  }
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << sweeps << " sweeps, largest decrease " << worst << ", " << secs << " s";
  return {worst <= 1e-9 && secs < 60.0, d.str()};
}

Outcome fixed_point() {
  double worst = 0.0;
  int unconverged = 0;
  for (int i = 0; i < 20; ++i) {
    const auto in = testutil::random_instance(5000 + i, 1 + i % 4, 2 + i % 5, 1 + i % 3, 100 + 20 * i);
    VariationalState s = cavi_fit(in.obs, in.hyper, {20000, 1e-10, 1, static_cast<std::uint64_t>(i)});
    unconverged += s.converged ? 0 : 1;
    VariationalState next = s;
    cavi_sweep(in.obs, in.hyper, next);
    double change = max_abs(s.phi, next.phi);
    change = std::max(change, max_abs(s.alpha_hat, next.alpha_hat));
    for (std::size_t k = 0; k < s.mu_hat.size(); ++k) {
      change = std::max(change, max_abs(s.mu_hat[k], next.mu_hat[k]));
      change = std::max(change, max_abs(s.R_hat[k], next.R_hat[k]));
    }
    worst = std::max(worst, change);
  }
  std::ostringstream d;
  d << "largest parameter change " << worst << ", unconverged fits " << unconverged;
  return {worst < 1e-7, d.str()};
}

Outcome posterior_recovery() {
  SyntheticSpec spec;
  spec.seed = 7;
  spec.T = 400;
  spec.pi = Eigen::Vector2d(0.5, 0.5);
  spec.mu = {Eigen::VectorXd::Constant(1, -5.0), Eigen::VectorXd::Constant(1, 5.0)};
  spec.M = Eigen::MatrixXd::Identity(1, 1);
  spec.theta.resize(2, 3);
  spec.theta << 0.1, 0.8, 0.1, 0.3, 0.4, 0.3;
  const auto data = gen_var_dataset(spec);
  ObservationSet obs{data.features.x, data.categories};
  // The intra-cluster covariance is a model input: fit with the one that generated the data.
  auto hyper = default_hyperparams(obs.x, 2, 3, 7);
  hyper.M = spec.M;
  const auto s = cavi_fit(obs, hyper, {500, 1e-10, 3, 7});

  std::vector<int> hard;
  for (Eigen::Index t = 0; t < s.phi.rows(); ++t) {
    Eigen::Index k;
    s.phi.row(t).maxCoeff(&k);
    hard.push_back(static_cast<int>(k));
  }
  const double ari = adjusted_rand_index(hard, data.clusters);
  const Eigen::MatrixXd means = dirichlet_means(s.alpha_hat);
  double best_mu = 1e300, best_theta = 1e300;
  for (int flip = 0; flip < 2; ++flip) {
    double mu_err = 0.0, theta_err = 0.0;
    for (int k = 0; k < 2; ++k) {
      const int j = flip ? 1 - k : k;
      mu_err = std::max(mu_err, std::abs(s.mu_hat[j](0) - spec.mu[k](0)));
      theta_err = std::max(theta_err, (means.row(j) - spec.theta.row(k)).cwiseAbs().sum());
    }
    if (mu_err < best_mu) {
      best_mu = mu_err;
      best_theta = theta_err;
    }
  }
  // Distance of the sample's own category frequencies from the true proportions.
  Eigen::MatrixXd freq = Eigen::MatrixXd::Zero(2, 3);
  for (std::size_t t = 0; t < data.clusters.size(); ++t) freq(data.clusters[t], data.categories[t]) += 1.0;
  double sample_err = 0.0;
  for (int k = 0; k < 2; ++k) {
    freq.row(k) /= freq.row(k).sum();
    sample_err = std::max(sample_err, (freq.row(k) - spec.theta.row(k)).cwiseAbs().sum());
  }
  std::ostringstream d;
  d << "mu error " << best_mu << ", ARI " << ari << ", worst Dirichlet-mean L1 " << best_theta
    << " (sample frequencies alone are " << sample_err << " from the truth)";
  return {best_mu <= 0.3 && ari >= 0.95 && best_theta <= 0.05, d.str()};
}

Outcome hs_reduction() {
  Rng rng(31);
  const PnlCategorySpec spec{{-0.8, 0.8}, PnlCategorySpec::Normalization::zscore};
  double worst_weight = 0.0;
  int failures = 0;
  for (int rep = 0; rep < 50; ++rep) {
    const int T = 250;
    std::vector<double> pnl(T);
    const double vol = 0.005 + 0.02 * rng.uniform();
    for (auto& v : pnl) v = rng.normal(0.0, vol) + (rng.uniform() < 0.05 ? -3.0 * vol : 0.0);
    const auto buckets = bucket_returns(pnl, spec, Normalizer::from_window(pnl));
    ObservationSet obs;
    obs.x.resize(T, 2);
    for (int t = 0; t < T; ++t) {
      obs.x(t, 0) = rng.normal();
      obs.x(t, 1) = rng.normal(1.0, 2.0);
    }
    obs.d = buckets.category;
    const auto hyper = default_hyperparams(obs.x, 1, 3, rep, {1e-8, 4.0});
    const auto s = cavi_fit(obs, hyper, {500, 1e-8, 0, static_cast<std::uint64_t>(rep)});
    const Eigen::VectorXd x_now = obs.x.row(T - 1).transpose();
    const Eigen::VectorXd p = predictive_category_probs(x_now, hyper, s);
    const auto dist = weighted_distribution(std::vector<double>(p.data(), p.data() + p.size()), buckets);
    for (double w : dist.probabilities) worst_weight = std::max(worst_weight, std::abs(w - 1.0 / T));
    std::vector<double> sorted = pnl;
    std::sort(sorted.begin(), sorted.end());
    for (double a : {0.95, 0.975}) {
      const double vi = var_quantile(dist, a), hs = hs_var(pnl, a);
      const auto it = std::lower_bound(sorted.begin(), sorted.end(), -hs);
      const std::size_t i = static_cast<std::size_t>(it - sorted.begin());
      double gap = 0.0;
      if (i > 0) gap = std::max(gap, sorted[i] - sorted[i - 1]);
      if (i + 1 < sorted.size()) gap = std::max(gap, sorted[i + 1] - sorted[i]);
      if (std::abs(vi - hs) > gap) ++failures;
    }
  }
  std::ostringstream d;
  d << failures << " of 100 VaR values off by more than an order-statistic gap, largest weight error " << worst_weight;
  return {failures == 0 && worst_weight <= 1e-6, d.str()};
}

double binomial_cdf(int k, int n, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  double s = 0.0;
  for (int i = 0; i <= k; ++i) {
    s += std::exp(std::lgamma(n + 1.0) - std::lgamma(i + 1.0) - std::lgamma(n - i + 1.0) + i * std::log(p) +
                  (n - i) * std::log1p(-p));
  }
  return s;
}

// Root of a decreasing function on (0, 1).
double bisect(const std::function<double(double)>& f) {
  double lo = 0.0, hi = 1.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (f(mid) > 0.0 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

// Exact two-sided 95% interval for a binomial proportion.
std::pair<double, double> clopper_pearson(int k, int n) {
  const double lower = k == 0 ? 0.0 : bisect([&](double p) { return 0.025 - (1.0 - binomial_cdf(k - 1, n, p)); });
  const double upper = k == n ? 1.0 : bisect([&](double p) { return binomial_cdf(k, n, p) - 0.025; });
  return {lower, upper};
}

Outcome adaptivity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto market = gen_market_panel(MarketSynthSpec::regime_switch(7, 600));
  VarBacktestConfig c;
  c.features = {{"vix", "VIX", FeatureTransform::Kind::average, 1, ChangeMode::difference, 5, 250, std::nullopt},
                {"ust_chg", "UST10Y", FeatureTransform::Kind::change, 1, ChangeMode::difference, 5, 250, std::nullopt}};
  c.portfolio.instruments = {{"EQ", 1.0, ReturnRule::relative}};
  c.vi.clusters = 3;
  c.vi.cavi.seed = 7;
  c.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  const auto report = var_backtest(market.panel, c);

  int vi_early = 0, hs_early = 0, vi_late = 0, late = 0, failed = 0;
  for (const auto& r : report.rows) {
    if (!r.ok()) {
      ++failed;
      continue;
    }
    const bool vi = BacktestReport::breach(r.realized, r.var_vi[0]);
    const bool hs = BacktestReport::breach(r.realized, r.var_hs[0]);
    if (r.panel_index >= 400 && r.panel_index <= 460) {
      vi_early += vi;
      hs_early += hs;
    }
    if (r.panel_index >= 460 && r.panel_index <= 600) {
      vi_late += vi;
      ++late;
    }
  }
  const auto [lo, hi] = clopper_pearson(vi_late, late);
  const double secs = seconds_since(t0);
  std::ostringstream d;
  d << "days 400-460 breaches VI " << vi_early << " / HS " << hs_early << "; days 460-600 VI " << vi_late << "/"
    << late << ", 95% CI [" << lo << ", " << hi << "]; " << failed << " failed rows, " << secs << " s";
  return {failed == 0 && vi_early <= hs_early && lo <= 0.05 && 0.05 <= hi && secs < 300.0, d.str()};
}

std::vector<double> random_path(Rng& rng, std::size_t n) {
  std::vector<double> p(n);
  p[0] = 100.0;
  for (std::size_t i = 1; i < n; ++i) p[i] = p[i - 1] + std::round(rng.normal() * 4.0) / 2.0;
  return p;
}

bool same_record(const PeakLossRecord& r, const BruteForcePeak& b) {
  return r.loss == b.loss && r.start == b.start && r.end == b.end;
}

struct PathSuite {
  long compared = 0;
  long mismatches = 0;
  long dominance_violations = 0;
  long vacuous_mismatches = 0;
};

// Paths shared by the oracle-equality and dominance criteria.
const PathSuite& path_suite() {
  static const PathSuite suite = [] {
    PathSuite s;
    Rng rng(600);
    for (int rep = 0; rep < 200; ++rep) {
      const auto path = random_path(rng, 300);
      const auto key = random_path(rng, 300);
      const auto ok = [&](std::size_t a, std::size_t b) { return key[b] - key[a] >= 0.0; };
      const auto pnl = [&](std::size_t a, std::size_t b) { return path[b] - path[a]; };
      for (auto [L, H] : {std::pair<std::size_t, std::size_t>{2, 3}, {15, 45}}) {
        const auto u = peak_loss_surface(path, L, H);
        for (const auto& r : u) {
          const auto b = brute_force_peak_loss(path, L, H, r.t);
          ++s.compared;
          if (!b || !same_record(r, *b)) ++s.mismatches;
        }
        const auto c = constrained_peak_loss_surface(path.size(), pnl, ok, L, H);
        std::size_t next = 0;
        for (const auto& r : c.records) {
          const auto b = brute_force_peak_loss(path, L, H, r.t, ok);
          ++s.compared;
          if (!b || !same_record(r, *b)) ++s.mismatches;
          if (r.loss < u[r.t].loss) ++s.dominance_violations;
          for (; next < r.t; ++next) {
            if (brute_force_peak_loss(path, L, H, next, ok)) ++s.mismatches;
          }
          next = r.t + 1;
        }
        const auto v = constrained_peak_loss_surface(
            path.size(), pnl, [](std::size_t, std::size_t) { return true; }, L, H);
        if (v.records.size() != u.size()) {
          ++s.vacuous_mismatches;
        } else {
          for (std::size_t i = 0; i < u.size(); ++i) {
            const auto& a = v.records[i];
            if (a.t != u[i].t || a.loss != u[i].loss || a.start != u[i].start || a.end != u[i].end) {
              ++s.vacuous_mismatches;
            }
          }
        }
      }
    }
    return s;
  }();
  return suite;
}

Outcome peak_loss_oracle() {
  const auto& s = path_suite();
  std::ostringstream d;
  d << s.mismatches << " mismatches in " << s.compared << " records";
  return {s.mismatches == 0, d.str()};
}

Outcome conditional_shift_mc() {
  Rng rng(33);
  int outside = 0;
  double worst = 0.0;
  for (int rep = 0; rep < 20; ++rep) {
    const double mx = rng.normal(-5.0, 3.0), my = rng.normal(0.0, 0.5);
    const double sx = 0.5 + 2.5 * rng.uniform(), sy = 0.05 + rng.uniform();
    const double rho = -0.95 + 1.9 * rng.uniform();
    const double x = mx + sx * rng.normal();
    double sum = 0.0, sq = 0.0;
    int n = 0;
    while (n < 5000) {
      const double z1 = rng.normal(), z2 = rng.normal();
      const double X = mx + sx * z1;
      if (std::abs(X - x) >= 0.05 * sx) continue;
      const double Y = my + sy * (rho * z1 + std::sqrt(1 - rho * rho) * z2);
      sum += Y;
      sq += Y * Y;
      ++n;
    }
    const double m = sum / n, se = std::sqrt((sq / n - m * m) / n);
    const BivariateFit fit{mx, my, sx * sx, sy * sy, rho * sx * sy, 0, false};
    const double z = std::abs(conditional_shift(fit, x).value - m) / se;
    worst = std::max(worst, z);
    outside += z > 3.0;
  }
  std::ostringstream d;
  d << outside << " of 20 outside 3 standard errors, largest " << worst << " se";
  return {outside == 0, d.str()};
}

Outcome mixture_round_trip() {
  Rng rng(44);
  double worst = 0.0;
  for (int rep = 0; rep < 50; ++rep) {
    const int J = 1 + static_cast<int>(rng.uniform() * 8);
    std::vector<CategoryLossGaussian> g;
    for (int j = 0; j < J; ++j) g.push_back({rng.normal(-5.0, 5.0), 0.01 + 4.0 * rng.uniform(), 10, true});
    const auto w = rng.dirichlet(std::vector<double>(static_cast<std::size_t>(J), 1.0));
    const auto m = loss_distribution(w, g);
    for (double p : {0.75, 0.95}) worst = std::max(worst, std::abs(m.cdf(target_loss(m, p)) - (1.0 - p)));
  }
  std::ostringstream d;
  d << "largest CDF error " << worst;
  return {worst <= 1e-7, d.str()};
}

Outcome constraint_dominance() {
  const auto& s = path_suite();
  std::ostringstream d;
  d << s.dominance_violations << " dominance violations, " << s.vacuous_mismatches << " vacuous-constraint mismatches";
  return {s.dominance_violations == 0 && s.vacuous_mismatches == 0, d.str()};
}

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "regimerisk");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  if (code != 0) std::cerr << err.str();
  return code;
}

bool run_pipeline(const fs::path& dir) {
  fs::create_directories(dir);
  const json features = json::parse(R"([{"name": "vix", "series": "VIX", "kind": "average", "lag": 1},
                                        {"name": "ust_chg", "series": "UST10Y", "kind": "change", "lag": 1}])");
  const json portfolio = json::parse(R"([{"series": "EQ", "weight": 0.6, "rule": "relative"},
                                         {"series": "UST10Y", "weight": 0.4, "rule": "bond_yield"}])");
  const json synth = {{"seed", 7}, {"synth", {{"days", 600}}}};
  const json fit = {{"seed", 7}, {"data", {{"observations", "synth/var_dataset.csv"}}}, {"vi", {{"K", 2}}}};
  const json var = {{"seed", 7},
                    {"data", {{"panel", "synth/market.csv"}}},
                    {"features", features},
                    {"portfolio", portfolio},
                    {"var", {{"stride", 5}}}};
  const json stress = {{"seed", 7},
                       {"data", {{"panel", "synth/market.csv"}}},
                       {"features", features},
                       {"portfolio", portfolio},
                       {"stress",
                        {{"L", 5},
                         {"H", 15},
                         {"window", 300},
                         {"p_star", {0.75, 0.95}},
                         {"risk_factors", json::parse(R"([{"series": "UST10Y"}, {"series": "EQ", "mode": "relative"}])")},
                         {"key_factor", "UST10Y"},
                         {"mode", "rolling"},
                         {"stride", 50}}}};
  const std::vector<std::pair<std::string, json>> steps{
      {"gen-synth", synth}, {"fit", fit}, {"var-backtest", var}, {"stress-design", stress}};
  for (const auto& [cmd, cfg] : steps) {
    const auto cfg_path = dir / (cmd + ".json");
    testutil::write_file(cfg_path, cfg.dump(2));
    const auto out = dir / (cmd == "gen-synth" ? std::string("synth") : cmd);
    if (cli({cmd, "--config", cfg_path.string(), "--out", out.string(), "--jobs", "4"}) != 0) return false;
  }
  return true;
}

std::string normalized(const fs::path& p) {
  std::string text = testutil::read_file(p);
  if (p.extension() == ".json") {
    json doc = json::parse(text);
    if (doc.contains("metadata")) doc["metadata"].erase("generated_at");
    text = doc.dump();
  }
  return text;
}

Outcome end_to_end_determinism() {
  const auto root = fs::temp_directory_path() / "regimerisk_acceptance";
  fs::remove_all(root);
  if (!run_pipeline(root / "a") || !run_pipeline(root / "b")) return {false, "pipeline failed"};
  int files = 0, differ = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), root / "a");
    ++files;
    if (!fs::exists(root / "b" / rel) || normalized(e.path()) != normalized(root / "b" / rel)) {
      ++differ;
      std::cerr << "differs: " << rel.string() << "\n";
    }
  }
  std::ostringstream d;
  d << differ << " of " << files << " files differ";
  return {files > 0 && differ == 0, d.str()};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"elbo monotonicity", elbo_monotonicity},
      {"fixed-point consistency", fixed_point},
      {"posterior recovery", posterior_recovery},
      {"historical-simulation reduction", hs_reduction},
      {"regime-switch adaptivity", adaptivity},
      {"peak-loss oracle equality", peak_loss_oracle},
      {"conditional-shift monte carlo", conditional_shift_mc},
      {"mixture quantile round-trip", mixture_round_trip},
      {"constraint dominance", constraint_dominance},
      {"end-to-end determinism", end_to_end_determinism},
  };
  // Criteria that cannot hold as stated; see the README. They still print FAIL.
  const std::map<std::size_t, std::string> known{
      {2, "an ELBO change below 1e-10 only pins the parameters to about sqrt(1e-10)"},
      {3, "with 200 draws per cluster the category frequencies themselves miss theta by more than 0.05"},
  };
  int failed = 0, unexpected = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << i + 1 << " " << criteria[i].first << ": " << o.detail;
    if (!o.pass) {
      ++failed;
      const auto it = known.find(i + 1);
      if (it != known.end()) {
        std::cout << " [known: " << it->second << "]";
      } else {
        ++unexpected;
      }
    }
    std::cout << std::endl;
  }
  std::cout << criteria.size() - static_cast<std::size_t>(failed) << " passed, " << failed << " failed, " << unexpected
            << " unexpected" << std::endl;
  return unexpected == 0 ? 0 : 1;
}
