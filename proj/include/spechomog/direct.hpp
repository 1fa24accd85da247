#pragma once

#include <array>
#include <complex>
#include <cstdint>
#include <optional>
#include <vector>

#include "spechomog/cell.hpp"
#include "spechomog/kernels.hpp"
#include "spechomog/model.hpp"

namespace spechomog::direct {

/// Nodes k h_x of the lattice h_x Z^d, h_x = eps / q, eps = 1/K, that lie in
/// the box inset by half a cell. x/eps = k/q then sits on every torus grid
/// whose n is a multiple of q.
struct EpsGrid {
  int d = 1;
  int K = 8;
  int q = 8;
  double eps = 0.125;
  double hx = 0.015625;
  DomainSpec box;
  std::array<std::int64_t, 3> first{};  // lattice index of the first node per axis
  std::array<int, 3> count{1, 1, 1};

  static EpsGrid make(const DomainSpec& box, int K, int q, std::int64_t node_cap = std::int64_t{1} << 22);
  std::int64_t size() const;
  std::array<std::int64_t, 3> lattice(std::int64_t i) const;
  Point node(std::int64_t i) const;
  Point fast(std::int64_t i) const;  // x_i / eps folded into [0,1)^d
  // Node index of a lattice point, or -1 when it is outside the grid.
  std::int64_t find(const std::array<std::int64_t, 3>& k) const;
};

struct DirectOperator {
  EpsGrid grid;
  Csr L;
  Vec a;  // a(x_i, x_i/eps)
  double radius = 0.0;
  double shift() const { return a.maxCoeff() + 1.0; }
};

/// (L rho)_i = a_i rho_i - (h_x/eps)^d sum_j J((x_i-x_j)/eps) kappa(x_i,x_j,x_i/eps,x_j/eps) rho_j,
/// over nodes x_j in Omega with |x_i - x_j|_inf <= eps R.
DirectOperator assemble_L_eps(const Model& model, const EpsGrid& grid, double tol_trunc, bool parallel = true,
                              std::int64_t nnz_cap = std::int64_t{1} << 25);

struct SpectralResult {
  double lambda_eps = 0.0;
  Vec rho;  // positive, infinity-norm 1
  double residual = 0.0;
  double lower_bound = 0.0;
  int iterations = 0;
  std::optional<double> mu_eps;
  std::optional<cell::Classification> classification;
};

SpectralResult bottom_of_spectrum(const DirectOperator& op, double tol, int max_iter, bool parallel = true);

/// min_i (L v)_i / v_i for a positive v.
double certify_lower_bound(const DirectOperator& op, const Vec& v);

/// A torus grid function sampled at x_i / eps. The torus n must be a
/// multiple of q.
Vec sample_cell_function(const EpsGrid& grid, const cell::TorusGrid& torus, const Vec& f);

/// The factorized operator: -(1/eps^{d+2}) h_x^d sum over the full lattice of
/// K(x/eps, y/eps) (v(y) - v(x)), v = 0 outside Omega, with
/// K(xi, eta) = J(xi - eta) e^{p0.(xi - eta)} kappa phi(eta) / phi(xi).
struct FactorizedOperator {
  EpsGrid grid;
  Csr L;
  double radius = 0.0;
};

FactorizedOperator assemble_factorized(const Model& model, const EpsGrid& grid, const Point& p0, const Vec& phi,
                                       const cell::TorusGrid& torus, double tol_trunc, bool parallel = true,
                                       std::int64_t nnz_cap = std::int64_t{1} << 25);

struct FactorizedSolve {
  Vec v;
  double relative_residual = 0.0;
  int iterations = 0;
};

/// (L~ + I) v = f by Jacobi-preconditioned GMRES.
FactorizedSolve factorized_resolvent_solve(const FactorizedOperator& op, const Vec& f, double tol = 1e-9,
                                           bool parallel = true);

/// Lowest k eigenvalues of the factorized operator by dense decomposition
/// (at most 2000 nodes), ordered by real part.
std::vector<std::complex<double>> factorized_eigenvalues(const FactorizedOperator& op, int k);

inline double mu_from_lambda(double lambda_eps, double H0, double eps) { return (lambda_eps - H0) / (eps * eps); }

}  // namespace spechomog::direct
