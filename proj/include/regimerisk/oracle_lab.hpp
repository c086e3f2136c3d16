#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regimerisk/market_data.hpp"
#include "regimerisk/stress_engine.hpp"

namespace regimerisk {

// Parameters of the latent-cluster generative process:
//   c_t ~ Cat(pi), x_t | c_t = k ~ N(mu[k], M), d_t | c_t = k ~ Cat(theta.row(k)).
struct SyntheticSpec {
  std::uint64_t seed = 0;
  int T = 1000;
  Eigen::VectorXd pi;
  std::vector<Eigen::VectorXd> mu;
  Eigen::MatrixXd M;
  Eigen::MatrixXd theta;  // K x J, rows are simplices
  Date start = parse_date("2000-01-03");

  int clusters() const noexcept { return static_cast<int>(pi.size()); }
  int categories() const noexcept { return static_cast<int>(theta.cols()); }
  int dim() const noexcept { return static_cast<int>(M.rows()); }
  void validate() const;
};

struct VarDataset {
  FeatureMatrix features;
  std::vector<int> categories;  // d_t, zero-based
  std::vector<int> clusters;    // c_t, zero-based ground truth
};

VarDataset gen_var_dataset(const SyntheticSpec& spec);

// Per-category peak-loss law N(mean, sd^2) and, per risk factor, the joint
// Gaussian of (loss, shift) given by the shift mean/sd and the correlation.
struct StressCategoryLaw {
  double loss_mean = 0.0;
  double loss_sd = 0.0;
  std::vector<double> shift_mean;
  std::vector<double> shift_sd;
  std::vector<double> correlation;
};

struct StressDataset {
  FeatureMatrix features;
  std::vector<int> categories;
  std::vector<int> clusters;
  std::vector<PeakLossRecord> records;  // t = row, start = end = row
};

// Category draws follow `spec`; spec.categories() must equal laws.size().
StressDataset gen_stress_dataset(const SyntheticSpec& spec, std::span<const StressCategoryLaw> laws);

struct BruteForcePeak {
  double loss = 0.0;
  std::size_t start = 0;
  std::size_t end = 0;
};

// Exhaustive enumeration of every window t <= s < t + H, s < e <= min(s + L, t + H).
// nullopt when no window is admissible.
std::optional<BruteForcePeak> brute_force_peak_loss(std::span<const double> value_path, std::size_t L, std::size_t H,
                                                    std::size_t t, const WindowFilter& eligible = {});

// Scans the whole CDF table for the smallest loss x with P(Loss > x) <= 1 - confidence.
double brute_force_weighted_var(std::span<const double> outcomes, std::span<const double> probabilities,
                                double confidence);

// Adjusted Rand index between two labelings.
double adjusted_rand_index(std::span<const int> a, std::span<const int> b);

// Market regime used by the panel generator.
struct MarketRegime {
  std::string name;
  double eq_drift = 0.0003;
  double eq_vol = 0.006;
  double rate_vol = 0.04;  // daily yield change sd, percent points
  double vix_level = 14.0;
  double fx_vol = 0.004;
  double eq_rate_corr = 0.3;
};

struct RegimeSwitch {
  std::size_t day = 0;  // first day of the new regime
  std::size_t regime = 0;
};

// Daily panel with an equity index (EQ), a 10y yield in percent (UST10Y), a
// volatility index (VIX) and an FX rate (FX). VIX reverts quickly to the level
// of the current regime, so it reveals the regime.
struct MarketSynthSpec {
  std::uint64_t seed = 0;
  std::size_t days = 600;
  Date start = parse_date("2018-01-02");
  std::vector<MarketRegime> regimes;
  std::vector<RegimeSwitch> schedule;  // sorted by day; regime 0 before the first switch
  double vix_reversion = 0.35;
  double vix_noise = 0.08;  // relative

  void validate() const;
  std::size_t regime_at(std::size_t day) const;
  // Two regimes: calm, then a volatility spike from day 400.
  static MarketSynthSpec regime_switch(std::uint64_t seed, std::size_t days = 600, std::size_t switch_day = 400);
};

struct MarketSynthResult {
  TimeSeriesPanel panel;
  std::vector<std::size_t> regime;  // per day
};

MarketSynthResult gen_market_panel(const MarketSynthSpec& spec);

}  // namespace regimerisk
