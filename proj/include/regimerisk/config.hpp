#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "regimerisk/oracle_lab.hpp"
#include "regimerisk/stress_engine.hpp"
#include "regimerisk/var_engine.hpp"

namespace regimerisk {

struct DataConfig {
  std::filesystem::path panel;         // market levels CSV
  std::string date_column = "date";
  std::filesystem::path observations;  // optional (x1..xn, d) CSV for `fit`
};

struct FitRun {
  std::optional<Date> asof;      // panel mode; default last date
  std::optional<int> categories;  // observation mode; default max(d)
};

struct StressRun {
  enum class Mode { single, rolling };
  Mode mode = Mode::single;
  std::optional<Date> asof;  // single; default last date
  std::size_t stride = 1;    // rolling
  std::optional<Date> start, end;
};

struct SynthConfig {
  MarketSynthSpec market = MarketSynthSpec::regime_switch(0);
  SyntheticSpec var_data;
};

struct RunConfig {
  DataConfig data;
  VarBacktestConfig var;
  StressConfig stress;
  FitRun fit;
  StressRun stress_run;
  SynthConfig synth;
  std::uint64_t seed = 0;
  int jobs = 1;
  std::filesystem::path out_dir = "out";
  // Effective configuration as parsed, without the output location.
  nlohmann::json echo;
};

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<int> jobs;
  std::optional<std::filesystem::path> out_dir;
};

// Relative data paths resolve against `base_dir`. Throws ConfigError on
// unknown keys, wrong types or out-of-range values.
RunConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {},
                       const Overrides& overrides = {});
RunConfig load_config(const std::filesystem::path& path, const Overrides& overrides = {});

}  // namespace regimerisk
