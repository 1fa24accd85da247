#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "spechomog/expr.hpp"

namespace spechomog {

using Point = std::array<double, expr::kMaxDim>;

class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline double fold_unit(double t) { return t - std::floor(t); }

enum class KernelForm { Gaussian, LatticeGaussian, Custom };

/// Dispersal kernel J together with the user-supplied decay constants
/// (C, beta) of the bound 0 <= J(z) <= C exp(-|z|^(1+beta)).
struct KernelSpec {
  KernelForm form = KernelForm::Gaussian;
  double sigma = 1.0;  // Gaussian width
  double mu = 1.0;     // lattice-normalized Gaussian mass per period
  expr::Expression custom;  // in z1..zd
  double decay_C = 1.0;
  double decay_beta = 0.5;

  static KernelSpec gaussian(double sigma, double C, double beta);
  static KernelSpec lattice_gaussian(double mu, double C, double beta);
  static KernelSpec custom_expr(const std::string& text, double C, double beta);

  double value(const Point& z, int d) const;
};

// a^(delta)(x, xi) = max{a, max{ahat(x), hat_min + delta/2} + delta/2}, where
// ahat(x) = min over the torus sample grid of a(x, .) and hat_min is the
// minimum of ahat over the domain samples.
struct Regularization {
  double delta = 0.0;
  double hat_min = 0.0;
  int torus_n = 64;
};

struct CoefficientSpec {
  expr::Expression kappa = expr::Expression::constant(1.0);
  expr::Expression a = expr::Expression::constant(0.0);
  std::optional<Regularization> regularization;
};

struct DomainSpec {
  int d = 1;
  Point lower{0, 0, 0};
  Point upper{1, 1, 1};
  double volume() const;
  Point center() const;
};

struct ModelSpec {
  KernelSpec kernel;
  CoefficientSpec coefficients;
  DomainSpec domain;
};

struct ValidationCheck {
  std::string name;
  bool passed = true;
  double worst_value = 0.0;
  std::string worst_sample;
  std::string note;
};

struct ValidationReport {
  std::vector<ValidationCheck> checks;
  std::vector<std::string> notes;
  double a_min = 0.0, a_max = 0.0;  // over the validation samples
  double kappa_max = 0.0;
  int sample_count = 0;
  bool ok() const;
  std::string summary() const;
};

/// Runs every invariant check in order, stopping at the first failure.
ValidationReport validate_model(const ModelSpec& spec);

/// A ModelSpec that passed validation, plus quantities derived from the
/// validation samples. Immutable.
class Model {
 public:
  static Model validated(ModelSpec spec);  // throws ValidationError

  const ModelSpec& spec() const { return spec_; }
  int dim() const { return spec_.domain.d; }
  const DomainSpec& domain() const { return spec_.domain; }
  const KernelSpec& kernel() const { return spec_.kernel; }
  const ValidationReport& report() const { return report_; }

  // Conservative sup of kappa used for tail truncation (1.1 x sampled max).
  double kappa_bound() const { return 1.1 * report_.kappa_max; }

  double J(const Point& z) const { return spec_.kernel.value(z, dim()); }
  // Fast arguments are folded into the unit torus before evaluation.
  double kappa(const Point& x, const Point& y, const Point& xi, const Point& eta) const;
  double a(const Point& x, const Point& xi) const;
  bool kappa_is_constant() const { return spec_.coefficients.kappa.is_constant(); }
  bool kappa_depends_on_slow() const;
  bool a_depends_on_slow() const;

  // Copy with a replaced rate coefficient (validation is re-run).
  Model with_coefficients(CoefficientSpec c) const;

 private:
  double raw_a(const Point& x, const Point& xi) const;
  double hat_a(const Point& x) const;

  ModelSpec spec_;
  ValidationReport report_;
};

/// J(z) e^{p.z} kappa(x, x, xi, xi - z).
double tilted_kernel_value(const Model& m, const Point& p, const Point& x, const Point& xi, const Point& z);

/// Tail cutoff: 1.5 x the smallest R (doubling then bisection) with
/// C kappa_max (1+R)^d exp(-R^(1+beta) + |p| R) <= tol.
double truncation_radius(const KernelSpec& k, int d, double p_norm, double kappa_max, double tol);

/// Rate coefficient with the delta-floor construction applied. The floor is
/// computed from ahat over `x_samples` and a torus grid of `torus_n` points
/// per axis.
CoefficientSpec regularize_a(const Model& m, double delta, const std::vector<Point>& x_samples, int torus_n);

/// Deterministic Halton point in [0,1)^k (k <= 12).
std::vector<double> halton_point(int index, int k);

}  // namespace spechomog
