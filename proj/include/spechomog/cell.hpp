#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

#include "spechomog/kernels.hpp"
#include "spechomog/model.hpp"

namespace spechomog::cell {

/// Uniform grid on the unit torus, n points per axis, nodes xi_k = k h.
/// Node index is row-major with axis 0 most significant.
struct TorusGrid {
  int d = 1;
  int n = 128;

  static TorusGrid make(int d, int n, std::int64_t node_cap = std::int64_t{1} << 20);

  double h() const { return 1.0 / n; }
  double cell_volume() const;  // h^d
  std::int64_t size() const;
  Point node(std::int64_t k) const;
  std::array<int, 3> digits(std::int64_t k) const;
  // Class of the lattice difference node(i) - node(j) modulo 1.
  std::int64_t difference_class(std::int64_t i, std::int64_t j) const;
};

enum class Classification { PrincipalEigenvalue, EssentialBottom };
std::string to_string(Classification c);

struct CellOptions {
  double tol = 1e-10;        // eigen residual
  double tol_trunc = 1e-10;  // kernel tail
  int max_iter = 2000000;
  double tol_class = 0.0;    // <= 0: 10 tol (1 + |m|)
  bool refine_classification = true;
  double p_max = 3.0;
  int p_points = 7;
  double tol_p = 1e-6;
  double hessian_step = 1e-2;
  double corrector_tol = 1e-12;
  std::int64_t node_cap = std::int64_t{1} << 20;
  std::int64_t dense_cap = std::int64_t{1} << 24;  // entries of the dense cell matrix
  bool parallel = true;
};

/// Assembled cell matrix at fixed (p, x) together with the tilted lattice
/// moments needed downstream.
///
/// M[i,j] = a_i delta_ij - W[i,j],  W[i,j] = h^d kappa(x,x,xi_i,xi_j) G0[i-j],
/// G0[c] = sum over z in hZ^d, |z|_inf <= R, z = c mod 1 of J(z) e^{p.z}.
/// G1 and G2 carry the extra factors z_a and z_a z_b.
struct CellOperator {
  TorusGrid grid;
  Point p{};
  Point x{};
  double radius = 0.0;
  Vec a;                                     // a(x, xi_i)
  std::shared_ptr<const DenseMatrix> kappa;  // h^d kappa(x, x, xi_i, xi_j)
  std::vector<double> G0;
  std::vector<std::vector<double>> G1;  // [axis][class]
  std::vector<std::vector<double>> G2;  // [a*d+b][class]
  DenseMatrix M;

  int dim() const { return grid.d; }
  double shift() const { return a.maxCoeff() + 1.0; }
  double m() const { return a.minCoeff(); }
  // W weighted by a class-indexed moment array.
  double weight(std::int64_t i, std::int64_t j, const std::vector<double>& moment) const;
  double self_weight() const;  // max_i W[i,i]
};

/// Per-(x, grid) cache: the kappa matrix and the rate vector do not depend on p.
class CellProblem {
 public:
  CellProblem(const Model& model, TorusGrid grid, Point x, CellOptions opt);

  const Model& model() const { return model_; }
  const TorusGrid& grid() const { return grid_; }
  const CellOptions& options() const { return opt_; }
  const Point& x() const { return x_; }
  double m() const { return a_.minCoeff(); }
  double M() const { return a_.maxCoeff(); }

  CellOperator assemble(const Point& p) const;

 private:
  Model model_;
  TorusGrid grid_;
  Point x_{};
  CellOptions opt_;
  Vec a_;
  std::shared_ptr<const DenseMatrix> kappa_;
};

CellOperator assemble_cell_operator(const Model& model, const TorusGrid& grid, const Point& p, const Point& x,
                                    double tol_trunc, bool parallel = true);

struct EigenResult {
  double H = 0.0;
  Vec phi;  // positive, sum phi h^d = 1
  double residual = 0.0;
  int iterations = 0;
};

EigenResult principal_eigenpair(const CellOperator& op, double tol, int max_iter, bool parallel = true);
EigenResult adjoint_eigenpair(const CellOperator& op, double tol, int max_iter, bool parallel = true);

struct CellEigenpair {
  double H = 0.0;
  double H_adjoint = 0.0;
  Vec phi, phiStar;
  double residual_direct = 0.0, residual_adjoint = 0.0;
  Classification classification = Classification::PrincipalEigenvalue;
};

struct HamiltonianResult {
  double H = 0.0;
  Classification classification = Classification::PrincipalEigenvalue;
  double m = 0.0;
  double gap = 0.0;         // m - H
  double coarse_gap = -1.0;  // m - H on the n/2 grid when the refinement test ran
  double residual = 0.0;
};

/// Principal eigenvalue plus the principal / essential-bottom decision.
/// A gap m - H at or below tol_class is essential. A gap within 100 self
/// weights of zero is re-checked on the n/2 grid: a discrete gap that shrinks
/// with h (ratio <= 0.75) is a grid artifact of an essential bottom.
HamiltonianResult hamiltonian(const CellProblem& cp, const Point& p);
HamiltonianResult hamiltonian(const Model& model, const Point& p, const Point& x, const TorusGrid& grid,
                              const CellOptions& opt);

CellEigenpair cell_eigenpair(const CellProblem& cp, const Point& p);

struct Maximizer {
  Point p0{};
  double H0 = 0.0;
  int evaluations = 0;
  double p_max = 0.0;  // final search box
};

/// Coarse grid on [-p_max, p_max]^d followed by compass search.
Maximizer maximize_H(const CellProblem& cp);

/// Q[j,k] = phi*_j W[j,k] phi_k, the factorized kernel aggregated by node
/// pairs (row j receives from column k through the offset z = xi_j - xi_k).
struct QKernel {
  TorusGrid grid;
  DenseMatrix Q;
  std::vector<DenseMatrix> Q1;  // [axis], moment z_a
  std::vector<DenseMatrix> Q2;  // [a*d+b], moment z_a z_b

  // max_i |row_i - col_i| / max_i row_i
  double mass_imbalance() const;
};

QKernel build_q_kernel(const CellOperator& op, const Vec& phi, const Vec& phiStar);

struct CorrectorResult {
  Vec chi;  // mean zero
  double residual = 0.0;       // |L chi + P b|_inf / |P b|_inf
  double inconsistency = 0.0;  // |mean b| / |b|_inf before projection
  int iterations = 0;
};

/// Solves sum_j Q[j,k] (chi_j - chi_k) = -sum_j Q1_axis[j,k] in the
/// mean-zero subspace.
CorrectorResult corrector_solve(const QKernel& q, int axis, double tol = 1e-12, bool parallel = true);

/// A = sym(A*) / sum phi phi* h^d with
/// A*_ab = sum_{j,k} (Q2_ab[j,k] / 2 + chi_a(j) Q1_b[j,k]) h^d.
/// Throws NumericalError when A is not positive definite.
Eigen::MatrixXd effective_matrix(const QKernel& q, const std::vector<Vec>& chi, const Vec& phi, const Vec& phiStar);

/// Central second differences of H at p0.
Eigen::MatrixXd hessian_fd(const CellProblem& cp, const Point& p0, double step);

struct EffectiveModel {
  int d = 1;
  Point p0{};
  double H0 = 0.0;
  Classification classification = Classification::PrincipalEigenvalue;
  CellEigenpair pair;
  std::vector<Vec> chiStar;
  Eigen::MatrixXd A, A_fd;
  double m = 0.0, M = 0.0;
  double mass_imbalance = 0.0;
  double corrector_residual = 0.0;
  int grid_n = 0;
};

/// p0, H(p0), correctors and A. For an essential bottom the correctors
/// and A are left empty.
EffectiveModel effective_model(const CellProblem& cp);

}  // namespace spechomog::cell
