#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "spechomog/cell.hpp"
#include "spechomog/kernels.hpp"
#include "spechomog/model.hpp"

namespace spechomog::hj {

/// H(p, x) sampled on a closed x-grid over the box (boundary included) and a
/// uniform p-grid on [-p_max, p_max]^d. Multilinear in p with linear
/// extrapolation outside the grid, nearest node in x.
class HTable {
 public:
  using Fn = std::function<double(const Point& p, const Point& x)>;

  HTable() = default;
  HTable(int d, DomainSpec box, std::array<int, 3> x_counts, double p_max, int p_count);
  static HTable from_function(int d, const DomainSpec& box, std::array<int, 3> x_counts, double p_max, int p_count,
                              const Fn& f);

  int dim() const { return d_; }
  const DomainSpec& box() const { return box_; }
  const std::array<int, 3>& x_counts() const { return nx_; }
  double p_max() const { return p_max_; }
  int p_count() const { return np_; }
  double dp() const { return 2.0 * p_max_ / (np_ - 1); }
  double dx(int axis) const { return (box_.upper[axis] - box_.lower[axis]) / (nx_[axis] - 1); }

  std::int64_t x_size() const;
  std::int64_t p_size() const;
  std::array<int, 3> x_digits(std::int64_t ix) const;
  std::int64_t x_index(const std::array<int, 3>& dg) const;
  Point x_node(std::int64_t ix) const;
  Point p_node(std::int64_t ip) const;
  std::int64_t nearest_x(const Point& x) const;

  double& at(std::int64_t ix, std::int64_t ip) { return values_[ix * p_size() + ip]; }
  double at(std::int64_t ix, std::int64_t ip) const { return values_[ix * p_size() + ip]; }
  // Entries where the cell problem had no principal eigenvalue (set to m(x)).
  bool essential(std::int64_t ix, std::int64_t ip) const { return essential_[ix * p_size() + ip] != 0; }
  void set_essential(std::int64_t ix, std::int64_t ip, bool e) { essential_[ix * p_size() + ip] = e; }
  std::int64_t essential_count() const;

  double eval(const Point& p, std::int64_t ix, Point* grad = nullptr) const;
  double eval_at(const Point& p, const Point& x) const { return eval(p, nearest_x(x)); }

  // Grid argmax and max over p at each x node.
  Point pbar(std::int64_t ix) const;
  double max_over_p(std::int64_t ix) const;

  // Largest positive second difference along p grid lines (0 for concave data).
  double concavity_violation() const;
  // max |dH/dp_axis| from table differences over nodes with |p|_inf <= P.
  double slope_bound(int axis, double P) const;

 private:
  int d_ = 1;
  DomainSpec box_;
  std::array<int, 3> nx_{1, 1, 1};
  double p_max_ = 1.0;
  int np_ = 3;
  std::vector<double> values_;
  std::vector<char> essential_;
};

struct TableSpec {
  std::array<int, 3> x_counts{33, 1, 1};
  double p_max = 1.5;
  int p_count = 31;
  int torus_n = 64;
  cell::CellOptions cell;
};

/// H(p, x) from the cell problem at every (p, x) pair. Essential-bottom
/// entries are stored as m(x) and flagged. Throws when the table is not
/// concave along p grid lines within 1e-8.
HTable tabulate_H(const Model& model, const TableSpec& spec, bool parallel = true);

struct RegularizedTable {
  HTable table;
  bool regularized = false;
  double delta = 0.0;
};

/// Tabulates; if any entry is essential, re-tabulates with the
/// delta-regularized rate coefficient.
RegularizedTable tabulate_H_regularized(const Model& model, const TableSpec& spec, double delta, bool parallel = true);

enum class Route { Discounted, InfMax };
std::string to_string(Route r);

struct ErgodicSolution {
  double Lambda = 0.0;
  Vec W;  // on the table x-grid, mean zero
  double residual = 0.0;
  double lower_bound_check = 0.0;
  Route route = Route::Discounted;
  std::vector<double> deltas;
  std::vector<double> scaled_means;   // delta_k mean(u_k)
  std::vector<double> cauchy_ratios;  // |s_{k+1}-s_k| / |s_k-s_{k-1}|
  std::vector<double> coefficients;   // InfMax polynomial coefficients
  std::array<double, 3> theta{};      // largest local viscosity per axis
  int iterations = 0;
};

struct DiscountedOptions {
  int k_first = 3;
  int k_last = 8;
  double tol = 1e-10;
  int max_newton = 2000;
};

/// Monotone scheme for delta u - H(Du, x) = 0 on the table x-grid.
///
/// Interior: local Lax-Friedrichs,
///   -H((p+ + p-)/2, x) - sum_k theta_k/2 (p+_k - p-_k),
/// with theta_k an upper bound of |dH/dp_k| between p-_k and p+_k at that
/// node, continuous in both.
/// Boundary: state constraint with one-sided differences only; along an axis
/// with no exterior neighbour the gradient is min(p+, pbar) at the lower face
/// and max(p-, pbar) at the upper face.
class DiscountedScheme {
 public:
  explicit DiscountedScheme(const HTable& table);

  const HTable& table() const { return *table_; }

  // G(u) = delta u + Fhat(Du); optional Jacobian (viscosity frozen) and the
  // largest local viscosity per axis.
  Vec residual(const Vec& u, double delta, Eigen::SparseMatrix<double>* jac = nullptr,
               std::array<double, 3>* theta_max = nullptr) const;
  // Explicit update u - tau G(u); monotone near u for tau <= stable_step(delta, u).
  Vec update(const Vec& u, double delta, double tau) const;
  // Global-viscosity step; a reference scale, not a monotonicity bound for
  // the local viscosity (which grows with |p+ - p-| through the envelope).
  double stable_step(double delta) const;
  double stable_step(double delta, const Vec& u) const;

  // Damped Newton solve of G(u) = 0 from u0.
  Vec solve_newton(double delta, Vec u0, double tol, int max_iter, int* iterations = nullptr,
                   double* final_residual = nullptr) const;
  // Explicit value iteration; slow, used as a reference.
  Vec solve_value_iteration(double delta, Vec u0, double tol, int max_iter, int* iterations = nullptr) const;

 private:
  const HTable* table_;
  std::vector<Point> pbar_;
  std::array<std::int64_t, 3> stride_{};
  std::array<std::vector<double>, 3> envelope_;
  std::array<double, 3> envelope_lip_{};  // Lipschitz constant of each envelope in p
};

/// Global viscosity bound per axis: table slope bound over |p| <= P.
std::array<double, 3> lf_viscosity(const HTable& table, double P);

ErgodicSolution additive_eigenvalue(const HTable& table, Route route, const DiscountedOptions& opt = {});

/// L(q, x) = max_p (q.p + H(p, x)) on the p-grid with one local refinement.
double lagrangian(const HTable& table, const Point& q, std::int64_t ix);

/// Constant-trajectory bound Lambda >= -min_x max_p H(p, x).
double lambda_lower_bound(const HTable& table);

}  // namespace spechomog::hj
