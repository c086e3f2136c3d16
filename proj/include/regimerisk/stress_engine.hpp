#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "regimerisk/market_data.hpp"
#include "regimerisk/var_engine.hpp"
#include "regimerisk/vi_core.hpp"

namespace regimerisk {

// Worst P&L over any window of at most L steps starting within H steps of t.
// Indices refer to positions in the value path (and the panel it came from).
struct PeakLossRecord {
  std::size_t t = 0;
  double loss = 0.0;  // signed P&L, negative = loss
  std::size_t start = 0;
  std::size_t end = 0;
  std::vector<double> shifts;  // per risk factor, filled by extract_rf_shifts
};

// P&L of the portfolio for market moves between two indices.
using WindowPnl = std::function<double(std::size_t start, std::size_t end)>;
// Whether the window (start, end) is admissible.
using WindowFilter = std::function<bool(std::size_t start, std::size_t end)>;

// For every t with t + H inside the path: min over start s in [t, t + H - 1]
// and end e in (s, min(s + L, t + H)] of P&L(s, e). Ties go to the earliest
// start, then the earliest end.
std::vector<PeakLossRecord> peak_loss_surface(std::span<const double> value_path, std::size_t L, std::size_t H);
std::vector<PeakLossRecord> peak_loss_surface(std::size_t length, const WindowPnl& pnl, std::size_t L,
                                              std::size_t H);

struct ShiftConstraint {
  enum class Direction { at_least, at_most };

  std::string risk_factor;
  ChangeMode mode = ChangeMode::difference;
  Direction direction = Direction::at_least;
  double threshold = -std::numeric_limits<double>::infinity();

  bool admits(double shift) const noexcept {
    return direction == Direction::at_least ? shift >= threshold : shift <= threshold;
  }
  std::string describe() const;
};

struct ConstrainedSurface {
  enum class Status { ok, empty };

  std::vector<PeakLossRecord> records;
  std::vector<std::size_t> omitted;  // t with no eligible window
  Status status = Status::ok;
};

// Same as peak_loss_surface but only windows accepted by `eligible` count.
ConstrainedSurface constrained_peak_loss_surface(std::size_t length, const WindowPnl& pnl,
                                                 const WindowFilter& eligible, std::size_t L, std::size_t H);
// Eligibility from the shift of the constraint's risk factor in `panel`.
ConstrainedSurface constrained_peak_loss_surface(std::span<const double> value_path, const TimeSeriesPanel& panel,
                                                 std::size_t L, std::size_t H, const ShiftConstraint& constraint);

double risk_factor_shift(std::span<const double> levels, std::size_t start, std::size_t end, ChangeMode mode);

struct RiskFactorRule {
  std::string series;
  ChangeMode mode = ChangeMode::difference;
};

void extract_rf_shifts(const TimeSeriesPanel& panel, std::vector<PeakLossRecord>& records,
                       std::span<const RiskFactorRule> rules);

// Categories over the (loss x key shift) plane: the key-shift axis is cut into
// bands by `key_thresholds`; band b is cut along the loss axis by
// `loss_thresholds[b]`. Cells are numbered band by band, most severe loss
// first, so every point maps to exactly one category. All intervals are
// half-open [lower, upper).
struct StressCategorySpec {
  std::vector<double> key_thresholds;
  std::vector<std::vector<double>> loss_thresholds;
  std::optional<std::size_t> key_factor;  // index into the record shifts; none = loss only

  int categories() const;
  void validate() const;
  int category_of(double loss, double key_shift) const;
  std::string describe(int category) const;
};

std::vector<int> classify_stress(std::span<const PeakLossRecord> records, const StressCategorySpec& spec);

struct CategoryLossGaussian {
  double mean = 0.0;
  double sd = 0.0;
  std::size_t count = 0;
  bool fitted = false;
  bool floored = false;         // sd replaced by the floor
  bool low_confidence = false;  // fewer than five records
};

// Per-category sample mean and sample std of the losses. sd is floored at
// 1e-6 x the std of all losses when a category has fewer than two records or a
// smaller spread.
std::vector<CategoryLossGaussian> fit_category_gaussians(std::span<const PeakLossRecord> records,
                                                         std::span<const int> labels, int categories);

struct BivariateFit {
  double mean_loss = 0.0;
  double mean_shift = 0.0;
  double var_loss = 0.0;
  double var_shift = 0.0;
  double cov = 0.0;
  std::size_t count = 0;
  bool degenerate = true;  // fewer than two records
};

std::vector<BivariateFit> fit_bivariate(std::span<const PeakLossRecord> records, std::span<const int> labels,
                                        int categories, std::size_t risk_factor);

class LossMixture {
 public:
  LossMixture(std::vector<double> weights, std::vector<CategoryLossGaussian> components);

  double cdf(double x) const;
  double pdf(double x) const;
  const std::vector<double>& weights() const noexcept { return weights_; }
  const std::vector<CategoryLossGaussian>& components() const noexcept { return components_; }

 private:
  std::vector<double> weights_;
  std::vector<CategoryLossGaussian> components_;
};

// Mixture of the per-category loss Gaussians; mass on unfitted categories is
// moved pro rata to the fitted ones.
LossMixture loss_distribution(std::span<const double> category_probs, std::span<const CategoryLossGaussian> gaussians);

// L* with CDF(L*) = 1 - p*: with probability p* the peak loss is less severe
// than L*.
double target_loss(const LossMixture& mixture, double p_star);

struct ConditionalShift {
  double value = 0.0;
  bool degenerate = false;
};

// E{Y | X} = mean_y + cov / var_x * (X - mean_x).
ConditionalShift conditional_shift(const BivariateFit& fit, double loss);

struct ScenarioShifts {
  std::vector<double> shifts;
  std::vector<bool> degenerate;
};

// shift_i = sum_j p_j E{RF_i | category j, Loss = L*}. fits is indexed [j][i].
ScenarioShifts scenario_shifts(std::span<const double> category_probs,
                               const std::vector<std::vector<BivariateFit>>& fits, double target);

struct StressConfig {
  std::vector<FeatureTransform> features;
  Portfolio portfolio;
  std::vector<RiskFactorRule> risk_factors;
  std::size_t L = 15;
  std::size_t H = 45;
  std::size_t window = 1000;
  std::vector<double> p_star{0.75, 0.95};
  StressCategorySpec categories;
  // When set, loss cuts of band b are these quantiles of the calibration
  // losses falling in band b, replacing categories.loss_thresholds.
  std::optional<std::vector<std::vector<double>>> loss_quantiles;
  ViSettings vi{4, {}, {}};
  std::optional<ShiftConstraint> constraint;
  std::size_t record_stride = 1;

  void validate(const TimeSeriesPanel& panel) const;
};

struct ScenarioLevel {
  double p_star = 0.0;
  double target_loss = 0.0;
  std::vector<double> shifts;  // per risk factor
  std::vector<bool> degenerate;
};

struct ScenarioResult {
  Date asof;
  std::vector<ScenarioLevel> levels;
  std::vector<std::string> risk_factors;
  std::vector<double> category_probs;
  std::vector<double> cluster_probs;
  std::vector<CategoryLossGaussian> category_fits;
  std::vector<std::vector<BivariateFit>> bivariate;  // [j][i]
  std::vector<std::string> category_labels;
  std::size_t records = 0;
  std::size_t omitted = 0;  // constrained: dates without an eligible window
  std::string constraint;   // empty when unconstrained
  double elbo = 0.0;
  bool converged = false;
};

// Portfolio P&L over every window from the panel via the portfolio rule.
WindowPnl portfolio_window_pnl(const TimeSeriesPanel& panel, const Portfolio& portfolio);

// Peak-loss records inside the calibration window ending at asof_index, with
// their risk-factor shifts. Constrained when config.constraint is set.
std::vector<PeakLossRecord> calibration_records(const TimeSeriesPanel& panel, const StressConfig& config,
                                                std::size_t asof_index, std::size_t* omitted = nullptr);

// The category grid used for `records`: loss cuts from loss_quantiles when set.
StressCategorySpec resolve_categories(const StressConfig& config, std::span<const PeakLossRecord> records);

ScenarioResult design_scenario(const TimeSeriesPanel& panel, const StressConfig& config, std::size_t asof_index);
ScenarioResult design_scenario(const TimeSeriesPanel& panel, const StressConfig& config);
// Same, reusing features already built from config.features.
ScenarioResult design_scenario(const TimeSeriesPanel& panel, const FeatureMatrix& features,
                               const StressConfig& config, std::size_t asof_index);

struct RollingScenario {
  std::size_t asof_index = 0;
  std::optional<double> realized_peak;  // Loss^t from the following H days, when observed
  ScenarioResult result;
};

// Scenario design for every eligible date (enough history and features),
// every `stride`-th one, optionally limited to [start, end].
std::vector<RollingScenario> rolling_scenarios(const TimeSeriesPanel& panel, const StressConfig& config,
                                               std::size_t stride = 1, std::optional<Date> start = {},
                                               std::optional<Date> end = {});

}  // namespace regimerisk
