#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "spechomog/cell.hpp"
#include "spechomog/expr.hpp"
#include "spechomog/model.hpp"

namespace spechomog::cli {

/// Schema violation; the message starts with the offending field path.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct GridConfig {
  int torus_n = 128;
  int direct_q = 8;
  std::array<int, 3> effective_N{127, 127, 127};
  std::array<int, 3> hj_x_counts{33, 33, 33};
  double hj_p_max = 1.5;
  int hj_p_count = 31;
  int hj_torus_n = 64;
  int dense_max = 2000;
};

struct ToleranceConfig {
  double eigen = 1e-10;
  double truncation = 1e-10;
  std::optional<double> classification;  // unset: 10 eigen (1 + |m|)
  double corrector = 1e-12;
  double hj = 1e-10;
  double delta = 0.05;
  int max_iter = 2000000;
};

struct ExperimentConfig {
  std::vector<Point> p_list;
  Point x{};
  std::vector<double> eps_list;
  std::vector<int> K_list;  // K = 1/eps
  int k = 3;
  expr::Expression f;  // resolvent right-hand side in x1..xd
};

struct RunConfig {
  nlohmann::json document;  // with every default filled in
  std::string hash;
  ModelSpec model;
  GridConfig grids;
  ToleranceConfig tol;
  ExperimentConfig experiment;
  std::string output;
};

/// JSON Schema (draft 2020-12) of the configuration file.
nlohmann::json config_schema();

RunConfig parse_config(nlohmann::json doc);
RunConfig load_config(const std::string& path);

/// FNV-1a 64 of the canonical dump of the filled document, as 16 hex digits.
std::string config_hash(const nlohmann::json& filled);

cell::CellOptions cell_options(const RunConfig& cfg);

}  // namespace spechomog::cli
