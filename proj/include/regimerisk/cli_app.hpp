#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "regimerisk/config.hpp"

namespace regimerisk {

// Files produced by a command, kept in memory until the command has finished
// so that a failure leaves nothing behind.
struct CommandOutput {
  std::vector<std::pair<std::string, std::string>> files;  // name, content

  void add(std::string name, std::string content) { files.emplace_back(std::move(name), std::move(content)); }
  const std::string* find(const std::string& name) const;
};

// Writes every file into `dir`, creating it when needed.
void commit(const CommandOutput& output, const std::filesystem::path& dir);

// state.json, elbo_trace.csv, cluster_probs.csv
CommandOutput cmd_fit(const RunConfig& config);
// backtest.csv, backtest.json, var_plot.csv
CommandOutput cmd_var_backtest(const RunConfig& config);
// single: scenario.json, scenario_shifts.csv
// rolling: scenarios.json, scenario_shifts.csv, stress_plot.csv
CommandOutput cmd_stress_design(const RunConfig& config);
// market.csv, var_dataset.csv, ground_truth.json
CommandOutput cmd_gen_synth(const RunConfig& config);

// Observation CSV (date, x1..xn, d with 1-based categories) as written by gen-synth.
ObservationSet load_observations(const std::filesystem::path& path, std::vector<Date>* dates = nullptr);

// Entry point of the command-line tool; returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace regimerisk
