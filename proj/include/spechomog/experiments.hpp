#pragma once

#include <string>
#include <vector>

#include <json.hpp>

#include "spechomog/config.hpp"

namespace spechomog::cli {

/// Plot-ready CSV: x-column first, config hash appended to every row.
struct CsvTable {
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
  std::string render(const std::string& hash) const;
};

// 17 significant digits; empty for NaN placeholders.
std::string fmt(double v);
std::string fmt(long long v);
inline std::string fmt(int v) { return fmt(static_cast<long long>(v)); }

struct ExperimentOutput {
  CsvTable table;
  nlohmann::json results = nlohmann::json::object();
  nlohmann::json timings = nlohmann::json::object();
  std::vector<std::string> failures;  // verify checks that did not pass
};

const std::vector<std::string>& experiment_names();

/// Throws ConfigError / ValidationError for bad input, NumericalError for
/// solver failures.
ExperimentOutput run_experiment(const std::string& name, const RunConfig& cfg);

/// Full command line driver; returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace spechomog::cli
