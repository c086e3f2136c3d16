#pragma once

#include <chrono>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace regimerisk {

using Date = std::chrono::sys_days;

// Parses an ISO-8601 `YYYY-MM-DD` date. Throws DataError on malformed input.
Date parse_date(std::string_view text);
std::string format_date(Date date);

// A series with possibly unavailable entries (warm-up periods, missing lags).
using Series = std::vector<std::optional<double>>;

// Date-aligned named series of market levels. Immutable after construction.
//
// Invariants: dates strictly increasing; every series has one finite value per
// date.
class TimeSeriesPanel {
 public:
  TimeSeriesPanel() = default;
  TimeSeriesPanel(std::vector<Date> dates, std::map<std::string, std::vector<double>> series);

  const std::vector<Date>& dates() const noexcept { return dates_; }
  std::size_t size() const noexcept { return dates_.size(); }
  bool empty() const noexcept { return dates_.empty(); }

  bool has_series(const std::string& name) const { return series_.contains(name); }
  std::span<const double> series(const std::string& name) const;
  std::vector<std::string> series_names() const;
  const std::map<std::string, std::vector<double>>& all_series() const noexcept { return series_; }

  std::optional<std::size_t> index_of(Date date) const;

 private:
  std::vector<Date> dates_;
  std::map<std::string, std::vector<double>> series_;
};

struct CsvSchema {
  std::string date_column = "date";
  // Empty selects every non-date column.
  std::vector<std::string> value_columns;
};

// Reads a header-row CSV. Lines starting with '#' are skipped. Rows are sorted
// by date; exact duplicate rows collapse, conflicting duplicates are an error.
TimeSeriesPanel load_panel(const std::filesystem::path& path, const CsvSchema& schema = {});
std::string panel_csv(const TimeSeriesPanel& panel, const std::string& comment = {});
void write_panel(const std::filesystem::path& path, const TimeSeriesPanel& panel, const std::string& comment = {});

// Merges panels on the intersection of their date sets.
TimeSeriesPanel align_intersection(std::span<const TimeSeriesPanel> panels);

enum class ChangeMode { difference, relative };

// output[t] = v[t] - v[t-lag] or v[t]/v[t-lag] - 1; the first `lag` entries are
// unavailable.
Series change_series(const TimeSeriesPanel& panel, const std::string& name, std::size_t lag, ChangeMode mode);
Series change_series(std::span<const double> values, std::size_t lag, ChangeMode mode);

// Rolling z-score over a window that includes the current observation and spans
// exactly `window` points; sample std; z = 0 when the window std < 1e-12.
Series rolling_zscore(const Series& values, std::size_t window);

// Sample std of the one-step changes over the trailing `short_window` points
// minus the same over `long_window` points.
Series rolling_std_diff(const Series& values, std::size_t short_window, std::size_t long_window,
                        ChangeMode mode = ChangeMode::difference);

// Trailing mean of the level over `window` points (window 1 is the raw level).
Series rolling_average(const Series& values, std::size_t window);

Series to_series(std::span<const double> values);

struct FeatureTransform {
  enum class Kind { change, std_diff, average };

  std::string name;
  std::string series;
  Kind kind = Kind::change;
  std::size_t lag = 1;                       // change: lag; average: window
  ChangeMode mode = ChangeMode::difference;  // change, std_diff
  std::size_t short_window = 5;              // std_diff
  std::size_t long_window = 250;             // std_diff
  std::optional<std::size_t> zscore_window;  // optional rolling z-score applied last
};

// Applies one transform to the whole panel.
Series compute_feature(const TimeSeriesPanel& panel, const FeatureTransform& transform);

struct FeatureMatrix {
  std::vector<Date> dates;
  std::vector<std::size_t> panel_index;  // row -> index into the source panel
  Eigen::MatrixXd x;                     // rows = dates, cols = features
  std::vector<std::string> feature_names;

  std::size_t rows() const noexcept { return dates.size(); }
  std::optional<std::size_t> row_of_panel_index(std::size_t panel_idx) const;
};

// Rows are restricted to dates where every feature is available.
FeatureMatrix build_features(const TimeSeriesPanel& panel, std::span<const FeatureTransform> spec);

enum class ReturnRule {
  relative,    // v[e]/v[s] - 1
  difference,  // v[e] - v[s]
  bond_yield,  // -duration * (y[e] - y[s]) * yield_unit
};

struct Instrument {
  std::string series;
  double weight = 0.0;
  ReturnRule rule = ReturnRule::relative;
  double duration = 8.5;     // bond_yield only
  double yield_unit = 0.01;  // bond_yield only: yields quoted in percent
};

struct Portfolio {
  std::vector<Instrument> instruments;

  void validate(const TimeSeriesPanel& panel) const;
  // P&L of the current portfolio (unit notional) for market moves from index
  // `start` to index `end`.
  double window_pnl(const TimeSeriesPanel& panel, std::size_t start, std::size_t end) const;
};

// Forward D-day portfolio P&L: output[t] = window_pnl(t, t + D); the last D
// entries are unavailable.
Series forward_pnl(const TimeSeriesPanel& panel, const Portfolio& portfolio, std::size_t horizon);

struct HistRetVector {
  Date asof;
  std::size_t asof_index = 0;
  std::size_t horizon = 1;
  // pnl[i - 1] is the P&L for moves from (asof - D - i) to (asof - i), i = 1..T.
  std::vector<double> pnl;
};

HistRetVector simulate_hist_returns(const TimeSeriesPanel& panel, const Portfolio& portfolio, std::size_t horizon,
                                    std::size_t lookback, std::size_t asof_index);
HistRetVector simulate_hist_returns(const TimeSeriesPanel& panel, const Portfolio& portfolio, std::size_t horizon,
                                    std::size_t lookback, Date asof);

}  // namespace regimerisk
