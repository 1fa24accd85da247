#pragma once

#include <cmath>
#include <numbers>
#include <string>

#include <json.hpp>

#include "spechomog/config.hpp"
#include "spechomog/model.hpp"

namespace testing {

using nlohmann::json;

// Model from a "model" block of a run configuration.
inline spechomog::Model model_from(const json& model_block) {
  json doc = {{"model", model_block}};
  return spechomog::Model::validated(spechomog::cli::parse_config(doc).model);
}

inline json gaussian_1d(const std::string& a, const std::string& kappa = "1", double sigma = 1.0) {
  return {{"dimension", 1}, {"kernel", {{"type", "gaussian"}, {"sigma", sigma}}}, {"kappa", kappa}, {"a", a}};
}

inline json lattice_1d(double mu, const std::string& a) {
  return {{"dimension", 1}, {"kernel", {{"type", "lattice_gaussian"}, {"mu", mu}}}, {"kappa", "1"}, {"a", a}};
}

// Midpoint rule over one period, enough points for smooth periodic integrands.
template <class F>
double periodic_mean(F&& f, int n = 4096) {
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += f((i + 0.5) / n);
  return s / n;
}

// H with int mu / (a - H) dxi = 1, by bisection below min a.
template <class A>
double separable_lattice_H(double mu, A&& a, double a_min) {
  double lo = a_min - 10.0, hi = a_min - 1e-14;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    const double g = periodic_mean([&](double t) { return mu / (a(t) - mid); });
    (g > 1.0 ? hi : lo) = mid;
  }
  return 0.5 * (lo + hi);
}

inline double rel(double a, double b) { return std::abs(a - b) / std::abs(b); }

}  // namespace testing
