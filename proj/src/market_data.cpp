#include "regimerisk/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <set>
#include <sstream>

#include "regimerisk/error.hpp"
#include "regimerisk/stats.hpp"

namespace regimerisk {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '"')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"')) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t pos = 0;
  while (true) {
    const auto comma = line.find(',', pos);
    if (comma == std::string_view::npos) {
      out.push_back(trim(line.substr(pos)));
      break;
    }
    out.push_back(trim(line.substr(pos, comma - pos)));
    pos = comma + 1;
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  if (s.empty()) return std::nullopt;
  double v = 0.0;
  const auto* first = s.data();
  const auto* last = s.data() + s.size();
  if (*first == '+') ++first;
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

double sample_std_of(const std::vector<double>& window) { return sample_std(std::span<const double>(window)); }

}  // namespace

Date parse_date(std::string_view text) {
  text = trim(text);
  int y = 0;
  unsigned m = 0, d = 0;
  if (text.size() != 10 || text[4] != '-' || text[7] != '-') {
    throw DataError("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
  }
  const auto ok = [](auto res, const char* end) { return res.ec == std::errc() && res.ptr == end; };
  const char* s = text.data();
  if (!ok(std::from_chars(s, s + 4, y), s + 4) || !ok(std::from_chars(s + 5, s + 7, m), s + 7) ||
      !ok(std::from_chars(s + 8, s + 10, d), s + 10)) {
    throw DataError("invalid date '" + std::string(text) + "' (expected YYYY-MM-DD)");
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{m}, std::chrono::day{d}};
  if (!ymd.ok()) throw DataError("invalid calendar date '" + std::string(text) + "'");
  return Date{ymd};
}

std::string format_date(Date date) {
  const std::chrono::year_month_day ymd{date};
  std::ostringstream os;
  os << std::setfill('0') << std::setw(4) << static_cast<int>(ymd.year()) << '-' << std::setw(2)
     << static_cast<unsigned>(ymd.month()) << '-' << std::setw(2) << static_cast<unsigned>(ymd.day());
  return os.str();
}

TimeSeriesPanel::TimeSeriesPanel(std::vector<Date> dates, std::map<std::string, std::vector<double>> series)
    : dates_(std::move(dates)), series_(std::move(series)) {
  for (std::size_t i = 1; i < dates_.size(); ++i) {
    if (!(dates_[i - 1] < dates_[i])) {
      throw DataError("panel dates must be strictly increasing (at " + format_date(dates_[i]) + ")");
    }
  }
  for (const auto& [name, values] : series_) {
    if (values.size() != dates_.size()) {
      throw DataError("series '" + name + "' has " + std::to_string(values.size()) + " values for " +
                      std::to_string(dates_.size()) + " dates");
    }
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (!std::isfinite(values[i])) {
        throw DataError("series '" + name + "' has a non-finite value at " + format_date(dates_[i]));
      }
    }
  }
}

std::span<const double> TimeSeriesPanel::series(const std::string& name) const {
  const auto it = series_.find(name);
  if (it == series_.end()) throw ConfigError("unknown series '" + name + "'");
  return it->second;
}

std::vector<std::string> TimeSeriesPanel::series_names() const {
  std::vector<std::string> names;
  names.reserve(series_.size());
  for (const auto& [name, _] : series_) names.push_back(name);
  return names;
}

std::optional<std::size_t> TimeSeriesPanel::index_of(Date date) const {
  const auto it = std::lower_bound(dates_.begin(), dates_.end(), date);
  if (it == dates_.end() || *it != date) return std::nullopt;
  return static_cast<std::size_t>(it - dates_.begin());
}

TimeSeriesPanel load_panel(const std::filesystem::path& path, const CsvSchema& schema) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path.string() + "'");

  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    for (auto cell : split_csv(line)) header.emplace_back(cell);
    break;
  }
  if (header.empty()) throw DataError("'" + path.string() + "' has no header row");

  const auto column_of = [&](const std::string& name) -> std::size_t {
    const auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end()) throw DataError("'" + path.string() + "' has no column '" + name + "'");
    return static_cast<std::size_t>(it - header.begin());
  };
  const std::size_t date_col = column_of(schema.date_column);
  std::vector<std::string> names = schema.value_columns;
  if (names.empty()) {
    for (const auto& h : header) {
      if (h != schema.date_column) names.push_back(h);
    }
  }
  if (names.empty()) throw DataError("'" + path.string() + "' has no value columns");
  std::vector<std::size_t> cols;
  for (const auto& n : names) cols.push_back(column_of(n));

  std::map<Date, std::vector<double>> rows;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#' || trim(line).empty()) continue;
    const auto cells = split_csv(line);
    const auto where = "'" + path.string() + "' line " + std::to_string(line_no);
    if (cells.size() != header.size()) {
      throw DataError(where + ": expected " + std::to_string(header.size()) + " cells, found " +
                      std::to_string(cells.size()));
    }
    Date date;
    try {
      date = parse_date(cells[date_col]);
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
    std::vector<double> values;
    values.reserve(cols.size());
    for (std::size_t k = 0; k < cols.size(); ++k) {
      const auto v = parse_double(cells[cols[k]]);
      if (!v) {
        throw DataError(where + ": unparseable value '" + std::string(cells[cols[k]]) + "' in column '" + names[k] +
                        "'");
      }
      values.push_back(*v);
    }
    const auto [it, inserted] = rows.emplace(date, values);
    if (!inserted && it->second != values) {
      throw DataError(where + ": duplicate date " + format_date(date) + " with conflicting values");
    }
  }

  std::vector<Date> dates;
  std::map<std::string, std::vector<double>> series;
  for (const auto& n : names) series[n].reserve(rows.size());
  for (const auto& [date, values] : rows) {
    dates.push_back(date);
    for (std::size_t k = 0; k < names.size(); ++k) series[names[k]].push_back(values[k]);
  }
  return TimeSeriesPanel(std::move(dates), std::move(series));
}

std::string panel_csv(const TimeSeriesPanel& panel, const std::string& comment) {
  std::ostringstream out;
  if (!comment.empty()) out << "# " << comment << '\n';
  const auto names = panel.series_names();
  out << "date";
  for (const auto& n : names) out << ',' << n;
  out << '\n';
  char buf[64];
  for (std::size_t i = 0; i < panel.size(); ++i) {
    out << format_date(panel.dates()[i]);
    for (const auto& n : names) {
      const auto res = std::to_chars(buf, buf + sizeof(buf), panel.series(n)[i]);
      out << ',' << std::string_view(buf, static_cast<std::size_t>(res.ptr - buf));
    }
    out << '\n';
  }
  return out.str();
}

void write_panel(const std::filesystem::path& path, const TimeSeriesPanel& panel, const std::string& comment) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out << panel_csv(panel, comment);
}

TimeSeriesPanel align_intersection(std::span<const TimeSeriesPanel> panels) {
  if (panels.empty()) throw ConfigError("align_intersection needs at least one panel");

  std::vector<Date> common = panels[0].dates();
  for (std::size_t p = 1; p < panels.size(); ++p) {
    std::vector<Date> next;
    std::set_intersection(common.begin(), common.end(), panels[p].dates().begin(), panels[p].dates().end(),
                          std::back_inserter(next));
    common = std::move(next);
  }
  if (common.empty()) throw DataError("panels share no dates");

  std::map<std::string, std::vector<double>> merged;
  for (const auto& panel : panels) {
    for (const auto& [name, values] : panel.all_series()) {
      if (merged.contains(name)) throw ConfigError("series name '" + name + "' appears in more than one panel");
      std::vector<double> out;
      out.reserve(common.size());
      for (Date d : common) out.push_back(values[*panel.index_of(d)]);
      merged.emplace(name, std::move(out));
    }
  }
  return TimeSeriesPanel(std::move(common), std::move(merged));
}

Series to_series(std::span<const double> values) { return Series(values.begin(), values.end()); }

Series change_series(std::span<const double> values, std::size_t lag, ChangeMode mode) {
  if (lag == 0) throw ConfigError("change_series: lag must be positive");
  if (lag >= values.size()) {
    throw ConfigError("change_series: lag " + std::to_string(lag) + " must be shorter than the series (" +
                      std::to_string(values.size()) + ")");
  }
  Series out(values.size());
  for (std::size_t t = lag; t < values.size(); ++t) {
    const double prev = values[t - lag];
    if (mode == ChangeMode::difference) {
      out[t] = values[t] - prev;
    } else {
      if (prev == 0.0) throw DataError("change_series: zero denominator at index " + std::to_string(t - lag));
      out[t] = values[t] / prev - 1.0;
    }
  }
  return out;
}

Series change_series(const TimeSeriesPanel& panel, const std::string& name, std::size_t lag, ChangeMode mode) {
  return change_series(panel.series(name), lag, mode);
}

Series rolling_zscore(const Series& values, std::size_t window) {
  if (window < 2) throw ConfigError("rolling_zscore: window must be at least 2");
  Series out(values.size());
  std::vector<double> buf;
  buf.reserve(window);
  for (std::size_t t = window - 1; t < values.size(); ++t) {
    buf.clear();
    for (std::size_t i = t + 1 - window; i <= t; ++i) {
      if (!values[i]) break;
      buf.push_back(*values[i]);
    }
    if (buf.size() != window) continue;
    const double m = mean(buf);
    const double sd = sample_std_of(buf);
    out[t] = sd < 1e-12 ? 0.0 : (*values[t] - m) / sd;
  }
  return out;
}

Series rolling_std_diff(const Series& values, std::size_t short_window, std::size_t long_window, ChangeMode mode) {
  if (short_window < 2) throw ConfigError("rolling_std_diff: short window must be at least 2");
  if (short_window >= long_window) throw ConfigError("rolling_std_diff: short window must be below the long window");
  if (values.size() <= long_window) {
    throw DataError("rolling_std_diff: need more than " + std::to_string(long_window) + " observations, have " +
                    std::to_string(values.size()));
  }
  Series changes(values.size());
  for (std::size_t t = 1; t < values.size(); ++t) {
    if (!values[t] || !values[t - 1]) continue;
    if (mode == ChangeMode::difference) {
      changes[t] = *values[t] - *values[t - 1];
    } else {
      if (*values[t - 1] == 0.0) throw DataError("rolling_std_diff: zero denominator at index " + std::to_string(t - 1));
      changes[t] = *values[t] / *values[t - 1] - 1.0;
    }
  }
  Series out(values.size());
  std::vector<double> buf;
  for (std::size_t t = long_window; t < values.size(); ++t) {
    buf.clear();
    for (std::size_t i = t + 1 - long_window; i <= t; ++i) {
      if (!changes[i]) break;
      buf.push_back(*changes[i]);
    }
    if (buf.size() != long_window) continue;
    const std::span<const double> all(buf);
    out[t] = sample_std(all.last(short_window)) - sample_std(all);
  }
  return out;
}

Series rolling_average(const Series& values, std::size_t window) {
  if (window == 0) throw ConfigError("rolling_average: window must be positive");
  Series out(values.size());
  for (std::size_t t = window - 1; t < values.size(); ++t) {
    double sum = 0.0;
    bool ok = true;
    for (std::size_t i = t + 1 - window; i <= t && ok; ++i) {
      if (!values[i]) ok = false;
      else sum += *values[i];
    }
    if (ok) out[t] = sum / static_cast<double>(window);
  }
  return out;
}

Series compute_feature(const TimeSeriesPanel& panel, const FeatureTransform& transform) {
  if (!panel.has_series(transform.series)) {
    throw ConfigError("feature '" + transform.name + "' references unknown series '" + transform.series + "'");
  }
  Series col;
  switch (transform.kind) {
    case FeatureTransform::Kind::change:
      col = change_series(panel, transform.series, transform.lag, transform.mode);
      break;
    case FeatureTransform::Kind::std_diff:
      col = rolling_std_diff(to_series(panel.series(transform.series)), transform.short_window,
                             transform.long_window, transform.mode);
      break;
    case FeatureTransform::Kind::average:
      col = rolling_average(to_series(panel.series(transform.series)), transform.lag);
      break;
  }
  if (transform.zscore_window) col = rolling_zscore(col, *transform.zscore_window);
  return col;
}

std::optional<std::size_t> FeatureMatrix::row_of_panel_index(std::size_t panel_idx) const {
  const auto it = std::lower_bound(panel_index.begin(), panel_index.end(), panel_idx);
  if (it == panel_index.end() || *it != panel_idx) return std::nullopt;
  return static_cast<std::size_t>(it - panel_index.begin());
}

FeatureMatrix build_features(const TimeSeriesPanel& panel, std::span<const FeatureTransform> spec) {
  if (spec.empty()) throw ConfigError("build_features: empty feature specification");
  std::vector<Series> cols;
  cols.reserve(spec.size());
  for (const auto& f : spec) cols.push_back(compute_feature(panel, f));

  FeatureMatrix fm;
  for (const auto& f : spec) fm.feature_names.push_back(f.name.empty() ? f.series : f.name);
  for (std::size_t t = 0; t < panel.size(); ++t) {
    const bool all = std::all_of(cols.begin(), cols.end(), [t](const Series& c) { return c[t].has_value(); });
    if (all) fm.panel_index.push_back(t);
  }
  if (fm.panel_index.empty()) throw DataError("build_features: no date has every feature available");

  fm.x.resize(static_cast<Eigen::Index>(fm.panel_index.size()), static_cast<Eigen::Index>(spec.size()));
  for (std::size_t r = 0; r < fm.panel_index.size(); ++r) {
    const std::size_t t = fm.panel_index[r];
    fm.dates.push_back(panel.dates()[t]);
    for (std::size_t c = 0; c < cols.size(); ++c) {
      fm.x(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = *cols[c][t];
    }
  }
  return fm;
}

void Portfolio::validate(const TimeSeriesPanel& panel) const {
  if (instruments.empty()) throw ConfigError("portfolio has no instruments");
  for (const auto& ins : instruments) {
    if (!panel.has_series(ins.series)) throw ConfigError("portfolio references unknown series '" + ins.series + "'");
    if (!std::isfinite(ins.weight)) throw ConfigError("portfolio weight for '" + ins.series + "' is not finite");
  }
}

double Portfolio::window_pnl(const TimeSeriesPanel& panel, std::size_t start, std::size_t end) const {
  double pnl = 0.0;
  for (const auto& ins : instruments) {
    const auto v = panel.series(ins.series);
    double r = 0.0;
    switch (ins.rule) {
      case ReturnRule::relative:
        if (v[start] == 0.0) throw DataError("zero level in '" + ins.series + "' at index " + std::to_string(start));
        r = v[end] / v[start] - 1.0;
        break;
      case ReturnRule::difference:
        r = v[end] - v[start];
        break;
      case ReturnRule::bond_yield:
        r = -ins.duration * (v[end] - v[start]) * ins.yield_unit;
        break;
    }
    pnl += ins.weight * r;
  }
  return pnl;
}

Series forward_pnl(const TimeSeriesPanel& panel, const Portfolio& portfolio, std::size_t horizon) {
  if (horizon == 0) throw ConfigError("forward_pnl: horizon must be positive");
  Series out(panel.size());
  for (std::size_t t = 0; t + horizon < panel.size(); ++t) out[t] = portfolio.window_pnl(panel, t, t + horizon);
  return out;
}

HistRetVector simulate_hist_returns(const TimeSeriesPanel& panel, const Portfolio& portfolio, std::size_t horizon,
                                    std::size_t lookback, std::size_t asof_index) {
  if (horizon == 0 || lookback == 0) throw ConfigError("simulate_hist_returns: D and T must be positive");
  if (asof_index >= panel.size()) throw ConfigError("simulate_hist_returns: as-of index outside the panel");
  if (asof_index < lookback + horizon) {
    throw DataError("simulate_hist_returns: as-of " + format_date(panel.dates()[asof_index]) + " has " +
                    std::to_string(asof_index) + " prior dates, need " + std::to_string(lookback + horizon));
  }
  HistRetVector h;
  h.asof = panel.dates()[asof_index];
  h.asof_index = asof_index;
  h.horizon = horizon;
  h.pnl.resize(lookback);
  for (std::size_t i = 1; i <= lookback; ++i) {
    h.pnl[i - 1] = portfolio.window_pnl(panel, asof_index - horizon - i, asof_index - i);
  }
  return h;
}

HistRetVector simulate_hist_returns(const TimeSeriesPanel& panel, const Portfolio& portfolio, std::size_t horizon,
                                    std::size_t lookback, Date asof) {
  const auto idx = panel.index_of(asof);
  if (!idx) throw DataError("as-of date " + format_date(asof) + " is not in the panel");
  return simulate_hist_returns(panel, portfolio, horizon, lookback, *idx);
}

}  // namespace regimerisk
