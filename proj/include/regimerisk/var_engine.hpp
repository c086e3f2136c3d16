#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "regimerisk/market_data.hpp"
#include "regimerisk/vi_core.hpp"

namespace regimerisk {

// J half-open categories [b_{j-1}, b_j) over the (normalized) P&L axis with
// b_0 = -inf and b_J = +inf. `thresholds` holds the J - 1 interior bounds.
struct PnlCategorySpec {
  enum class Normalization { zscore, raw };

  std::vector<double> thresholds;
  Normalization normalization = Normalization::zscore;

  int categories() const noexcept { return static_cast<int>(thresholds.size()) + 1; }
  void validate() const;
  // Zero-based category of an already normalized value.
  int category_of(double normalized) const;
};

// Trailing-window location/scale used to normalize P&L before bucketing.
struct Normalizer {
  double center = 0.0;
  double scale = 1.0;
  bool identity = true;

  static Normalizer raw() { return {}; }
  // Sample mean and sample std of `window`.
  static Normalizer from_window(std::span<const double> window);
  // z = (v - center) / scale; 0 when the scale is below 1e-12.
  double apply(double v) const;
};

Normalizer make_normalizer(const PnlCategorySpec& spec, std::span<const double> window);

struct EmpiricalCategoryDist {
  std::vector<double> outcomes;  // Hist_Ret in its original order
  std::vector<int> category;     // zero-based category of each outcome
  std::vector<std::size_t> counts;

  int categories() const noexcept { return static_cast<int>(counts.size()); }
  std::vector<double> members(int j) const;
};

struct WeightedPnlDistribution {
  std::vector<double> outcomes;
  std::vector<double> probabilities;
};

EmpiricalCategoryDist bucket_returns(const HistRetVector& hist, const PnlCategorySpec& spec,
                                     const Normalizer& normalizer);
EmpiricalCategoryDist bucket_returns(std::span<const double> pnl, const PnlCategorySpec& spec,
                                     const Normalizer& normalizer);

// Category of each realized forward P&L; unavailable entries stay unlabeled.
std::vector<std::optional<int>> label_outcomes(const Series& pnl_forward, const PnlCategorySpec& spec,
                                               const Normalizer& normalizer);

// Each outcome in category j gets p_j / n_j. Mass of empty categories is
// redistributed pro rata over the nonempty ones.
WeightedPnlDistribution weighted_distribution(std::span<const double> category_probs,
                                              const EmpiricalCategoryDist& dist);

// Effective category probabilities after moving the mass of empty categories.
std::vector<double> redistribute_empty(std::span<const double> category_probs, std::span<const std::size_t> counts);

// VaR(a) = inf{ x : P(Loss > x) <= 1 - a }, Loss = -P&L. Ties are resolved by
// the sorted order of outcomes; zero-mass outcomes are ignored.
double var_quantile(const WeightedPnlDistribution& dist, double confidence);

double hs_var(std::span<const double> pnl, double confidence);
double hs_var(const HistRetVector& hist, double confidence);

// -(mean + z_{1-a} * std) with sample moments; -mean when std is zero.
double gaussian_var(std::span<const double> pnl, double confidence, bool zero_mean = false);
double gaussian_var(const HistRetVector& hist, double confidence, bool zero_mean = false);

struct ViSettings {
  int clusters = 3;
  PriorOptions prior;
  CaviOptions cavi;
};

struct VarBacktestConfig {
  std::vector<FeatureTransform> features;
  Portfolio portfolio;
  std::size_t horizon = 1;        // D
  std::size_t lookback = 250;     // T: historical-simulation length and calibration sample
  std::size_t norm_window = 250;  // trailing P&L window used for z-score bucketing
  std::vector<double> confidences{0.95, 0.975};
  PnlCategorySpec categories{{-0.8, 0.8}, PnlCategorySpec::Normalization::zscore};
  ViSettings vi;
  bool gaussian_zero_mean = false;
  std::size_t stride = 1;
  std::optional<Date> start;
  std::optional<Date> end;
  int jobs = 1;

  void validate() const;
};

struct BacktestRow {
  Date date;
  std::size_t panel_index = 0;
  double realized = 0.0;  // forward D-day P&L from this date
  // Indexed [confidence].
  std::vector<double> var_vi;
  std::vector<double> var_hs;
  std::vector<double> var_gaussian;
  std::vector<double> cluster_probs;
  std::vector<double> category_probs;
  std::vector<std::size_t> category_counts;
  double elbo = 0.0;
  bool converged = false;
  std::string error;  // non-empty when this date failed; VaR columns are then empty

  bool ok() const noexcept { return error.empty(); }
};

struct MethodSummary {
  std::string method;
  double confidence = 0.0;
  std::size_t observations = 0;
  std::size_t breaches = 0;
  double breach_rate() const noexcept {
    return observations ? static_cast<double>(breaches) / static_cast<double>(observations) : 0.0;
  }
};

struct BacktestReport {
  std::vector<double> confidences;
  std::vector<BacktestRow> rows;

  std::vector<MethodSummary> summary() const;
  static bool breach(double realized, double var) noexcept { return -realized > var; }
};

// Panel indices the backtest evaluates: history for the features, the
// calibration sample and Hist_Ret must exist, and the forward P&L must be
// realized. Exposed so callers can predict the row count.
std::vector<std::size_t> backtest_dates(const TimeSeriesPanel& panel, const FeatureMatrix& features,
                                        const VarBacktestConfig& config);

struct CalibrationSample {
  HistRetVector hist;
  Normalizer normalizer;
  ObservationSet obs;                    // features at tau, category of the P&L from tau to tau + D
  std::vector<std::size_t> panel_index;  // tau per observation
  std::size_t asof_row = 0;              // feature row of the as-of date
};

// The T training pairs for as-of index t: tau in [t - D - T, t - D - 1], the
// start dates of the Hist_Ret windows, so each label is the category of one
// Hist_Ret entry.
CalibrationSample calibration_sample(const TimeSeriesPanel& panel, const FeatureMatrix& features,
                                     const Series& pnl_forward, const VarBacktestConfig& config,
                                     std::size_t asof_index);

struct VarEstimate {
  std::vector<double> var_vi, var_hs, var_gaussian;
  Eigen::VectorXd cluster_probs;
  Eigen::VectorXd category_probs;
  EmpiricalCategoryDist buckets;
  VIHyperparams hyper;
  VariationalState state;
};

// VI, historical-simulation and Gaussian VaR for one as-of index.
VarEstimate estimate_var(const TimeSeriesPanel& panel, const FeatureMatrix& features, const Series& pnl_forward,
                         const VarBacktestConfig& config, std::size_t asof_index);

BacktestReport var_backtest(const TimeSeriesPanel& panel, const VarBacktestConfig& config);

}  // namespace regimerisk
