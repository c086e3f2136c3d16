#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "regimerisk/stress_engine.hpp"
#include "regimerisk/var_engine.hpp"
#include "regimerisk/vi_core.hpp"

namespace regimerisk {

inline constexpr int kStateFormatVersion = 1;

// Shortest decimal text that reads back to the same double.
std::string format_number(double v);

nlohmann::json to_json(const Eigen::MatrixXd& m);
nlohmann::json to_json(const Eigen::VectorXd& v);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);
Eigen::VectorXd vector_from_json(const nlohmann::json& j);

nlohmann::json to_json(const VIHyperparams& hyper);
VIHyperparams hyperparams_from_json(const nlohmann::json& j);

// Carries a format tag and version; from_json rejects other versions.
nlohmann::json to_json(const VariationalState& state);
VariationalState state_from_json(const nlohmann::json& j);

// One line per date: realized P&L, VaR per method and confidence,
// probabilities, counts, diagnostics. Categories and clusters are 1-based.
std::string backtest_csv(const BacktestReport& report);
// date, realized, VaR per method at each confidence.
std::string backtest_plot_csv(const BacktestReport& report);
nlohmann::json backtest_summary_json(const BacktestReport& report);

// Losses are reported as positive magnitudes next to the signed P&L.
nlohmann::json to_json(const ScenarioResult& result);
// asof, p_star, risk_factor, shift, degenerate.
std::string scenario_shift_csv(std::span<const ScenarioResult> results);

// Writes via a temporary file and a rename so readers never see half a file.
void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace regimerisk
