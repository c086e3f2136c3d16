#include "regimerisk/serialization.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "regimerisk/error.hpp"

namespace regimerisk {

using nlohmann::json;

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v < 0 ? "-inf" : "inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

json to_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    json row = json::array();
    for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
    out.push_back(std::move(row));
  }
  return out;
}

json to_json(const Eigen::VectorXd& v) {
  json out = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
  return out;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  if (!j.is_array()) throw DataError("expected a matrix (array of rows)");
  if (j.empty()) return {};
  const auto cols = j.front().size();
  Eigen::MatrixXd m(static_cast<Eigen::Index>(j.size()), static_cast<Eigen::Index>(cols));
  for (std::size_t r = 0; r < j.size(); ++r) {
    if (!j[r].is_array() || j[r].size() != cols) throw DataError("matrix rows differ in length");
    for (std::size_t c = 0; c < cols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = j[r][c].get<double>();
    }
  }
  return m;
}

Eigen::VectorXd vector_from_json(const json& j) {
  if (!j.is_array()) throw DataError("expected a vector");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  return v;
}

json to_json(const VIHyperparams& hyper) {
  json mu0 = json::array(), r0 = json::array();
  for (const auto& m : hyper.mu0) mu0.push_back(to_json(m));
  for (const auto& r : hyper.R0) r0.push_back(to_json(r));
  return {{"pi", to_json(hyper.pi)}, {"mu0", mu0}, {"R0", r0}, {"M", to_json(hyper.M)},
          {"alpha0", to_json(hyper.alpha0)}};
}

VIHyperparams hyperparams_from_json(const json& j) {
  try {
    VIHyperparams h;
    h.pi = vector_from_json(j.at("pi"));
    for (const auto& m : j.at("mu0")) h.mu0.push_back(vector_from_json(m));
    for (const auto& r : j.at("R0")) h.R0.push_back(matrix_from_json(r));
    h.M = matrix_from_json(j.at("M"));
    h.alpha0 = matrix_from_json(j.at("alpha0"));
    h.validate();
    return h;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed hyperparameters: ") + e.what());
  }
}

json to_json(const VariationalState& state) {
  json mu = json::array(), r = json::array();
  for (const auto& m : state.mu_hat) mu.push_back(to_json(m));
  for (const auto& c : state.R_hat) r.push_back(to_json(c));
  return {{"format", "regimerisk.variational_state"},
          {"version", kStateFormatVersion},
          {"phi", to_json(state.phi)},
          {"mu_hat", mu},
          {"R_hat", r},
          {"alpha_hat", to_json(state.alpha_hat)},
          {"elbo_trace", state.elbo_trace},
          {"sweeps", state.sweeps},
          {"converged", state.converged}};
}

VariationalState state_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "regimerisk.variational_state") {
      throw DataError("not a variational state document");
    }
    const int version = j.at("version").get<int>();
    if (version != kStateFormatVersion) {
      throw DataError("unsupported variational state version " + std::to_string(version));
    }
    VariationalState s;
    s.phi = matrix_from_json(j.at("phi"));
    for (const auto& m : j.at("mu_hat")) s.mu_hat.push_back(vector_from_json(m));
    for (const auto& r : j.at("R_hat")) s.R_hat.push_back(matrix_from_json(r));
    s.alpha_hat = matrix_from_json(j.at("alpha_hat"));
    s.elbo_trace = j.at("elbo_trace").get<std::vector<double>>();
    s.sweeps = j.at("sweeps").get<int>();
    s.converged = j.at("converged").get<bool>();
    return s;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed variational state: ") + e.what());
  }
}

namespace {

std::string pct(double c) { return format_number(std::round(c * 1e6) / 1e4); }

const char* kMethods[] = {"vi", "hs", "gaussian"};

const std::vector<double>& method_values(const BacktestRow& r, int m) {
  return m == 0 ? r.var_vi : m == 1 ? r.var_hs : r.var_gaussian;
}

std::size_t width(const BacktestReport& report, std::vector<double> BacktestRow::*field) {
  std::size_t w = 0;
  for (const auto& r : report.rows) w = std::max(w, (r.*field).size());
  return w;
}

}  // namespace

std::string backtest_csv(const BacktestReport& report) {
  const std::size_t K = width(report, &BacktestRow::cluster_probs);
  const std::size_t J = width(report, &BacktestRow::category_probs);
  std::ostringstream os;
  os << "date,realized";
  for (int m = 0; m < 3; ++m) {
    for (double c : report.confidences) os << ",var_" << kMethods[m] << "_" << pct(c);
  }
  for (std::size_t k = 0; k < K; ++k) os << ",p_cluster_" << k + 1;
  for (std::size_t j = 0; j < J; ++j) os << ",p_category_" << j + 1;
  for (std::size_t j = 0; j < J; ++j) os << ",count_category_" << j + 1;
  os << ",elbo,converged,error\n";
  for (const auto& r : report.rows) {
    os << format_date(r.date) << "," << format_number(r.realized);
    for (int m = 0; m < 3; ++m) {
      const auto& v = method_values(r, m);
      for (std::size_t c = 0; c < report.confidences.size(); ++c) {
        os << ",";
        if (c < v.size()) os << format_number(v[c]);
      }
    }
    for (std::size_t k = 0; k < K; ++k) {
      os << ",";
      if (k < r.cluster_probs.size()) os << format_number(r.cluster_probs[k]);
    }
    for (std::size_t j = 0; j < J; ++j) {
      os << ",";
      if (j < r.category_probs.size()) os << format_number(r.category_probs[j]);
    }
    for (std::size_t j = 0; j < J; ++j) {
      os << ",";
      if (j < r.category_counts.size()) os << r.category_counts[j];
    }
    std::string err = r.error;
    std::replace(err.begin(), err.end(), ',', ';');
    std::replace(err.begin(), err.end(), '\n', ' ');
    os << "," << (r.ok() ? format_number(r.elbo) : "") << "," << (r.ok() ? (r.converged ? "1" : "0") : "") << ","
       << err << "\n";
  }
  return os.str();
}

std::string backtest_plot_csv(const BacktestReport& report) {
  std::ostringstream os;
  os << "date,realized";
  for (double c : report.confidences) {
    for (int m = 0; m < 3; ++m) os << ",var_" << kMethods[m] << "_" << pct(c);
  }
  os << "\n";
  for (const auto& r : report.rows) {
    if (!r.ok()) continue;
    os << format_date(r.date) << "," << format_number(r.realized);
    for (std::size_t c = 0; c < report.confidences.size(); ++c) {
      for (int m = 0; m < 3; ++m) os << "," << format_number(method_values(r, m)[c]);
    }
    os << "\n";
  }
  return os.str();
}

json backtest_summary_json(const BacktestReport& report) {
  json methods = json::array();
  for (const auto& s : report.summary()) {
    methods.push_back({{"method", s.method},
                       {"confidence", s.confidence},
                       {"observations", s.observations},
                       {"breaches", s.breaches},
                       {"breach_rate", s.breach_rate()},
                       {"expected_rate", 1.0 - s.confidence}});
  }
  std::size_t failed = 0, unconverged = 0;
  for (const auto& r : report.rows) {
    if (!r.ok()) ++failed;
    else if (!r.converged) ++unconverged;
  }
  json out = {{"rows", report.rows.size()},
              {"failed_rows", failed},
              {"unconverged_rows", unconverged},
              {"confidences", report.confidences},
              {"methods", methods}};
  if (!report.rows.empty()) {
    out["first_date"] = format_date(report.rows.front().date);
    out["last_date"] = format_date(report.rows.back().date);
  }
  return out;
}

json to_json(const ScenarioResult& r) {
  json levels = json::array();
  for (const auto& l : r.levels) {
    json shifts = json::array();
    for (std::size_t i = 0; i < l.shifts.size(); ++i) {
      shifts.push_back({{"risk_factor", r.risk_factors[i]}, {"shift", l.shifts[i]}, {"degenerate", l.degenerate[i]}});
    }
    levels.push_back({{"p_star", l.p_star},
                      {"target_pnl", l.target_loss},
                      {"target_loss", -l.target_loss},
                      {"shifts", shifts}});
  }
  json categories = json::array();
  for (std::size_t j = 0; j < r.category_fits.size(); ++j) {
    const auto& g = r.category_fits[j];
    json biv = json::array();
    for (std::size_t i = 0; i < r.bivariate[j].size(); ++i) {
      const auto& b = r.bivariate[j][i];
      biv.push_back({{"risk_factor", r.risk_factors[i]},
                     {"mean_shift", b.mean_shift},
                     {"var_shift", b.var_shift},
                     {"cov_loss_shift", b.cov},
                     {"degenerate", b.degenerate}});
    }
    categories.push_back({{"category", j + 1},
                          {"definition", r.category_labels[j]},
                          {"probability", r.category_probs[j]},
                          {"count", g.count},
                          {"fitted", g.fitted},
                          {"mean_pnl", g.mean},
                          {"sd", g.sd},
                          {"floored", g.floored},
                          {"low_confidence", g.low_confidence},
                          {"bivariate", biv}});
  }
  json out = {{"asof", format_date(r.asof)},
              {"levels", levels},
              {"cluster_probs", r.cluster_probs},
              {"categories", categories},
              {"records", r.records},
              {"elbo", r.elbo},
              {"converged", r.converged}};
  if (!r.constraint.empty()) {
    out["constraint"] = r.constraint;
    out["omitted_dates"] = r.omitted;
  }
  return out;
}

std::string scenario_shift_csv(std::span<const ScenarioResult> results) {
  std::ostringstream os;
  os << "asof,p_star,target_loss,risk_factor,shift,degenerate\n";
  for (const auto& r : results) {
    for (const auto& l : r.levels) {
      for (std::size_t i = 0; i < l.shifts.size(); ++i) {
        os << format_date(r.asof) << "," << format_number(l.p_star) << "," << format_number(-l.target_loss) << ","
           << r.risk_factors[i] << "," << format_number(l.shifts[i]) << "," << (l.degenerate[i] ? 1 : 0) << "\n";
      }
    }
  }
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw DataError("cannot write " + path.string());
    out << text;
    if (!out) throw DataError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace regimerisk
