#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "spechomog/kernels.hpp"
#include "spechomog/model.hpp"

namespace spechomog::effective {

/// Interior nodes of a box, N_i per axis, spacing h_i = (u_i - l_i)/(N_i + 1).
/// Row-major node order with axis 0 most significant.
struct FDGrid {
  int d = 1;
  std::array<int, 3> N{1, 1, 1};
  Point lower{0, 0, 0};
  Point upper{1, 1, 1};
  std::array<double, 3> h{1, 1, 1};

  static FDGrid make(const DomainSpec& box, std::array<int, 3> N);
  std::int64_t size() const;
  std::array<int, 3> digits(std::int64_t k) const;
  std::int64_t index(const std::array<int, 3>& dg) const;
  Point node(std::int64_t k) const;
};

/// Discrete -A_ij d_i d_j with homogeneous Dirichlet data.
struct EffectiveOperator {
  FDGrid grid;
  Eigen::MatrixXd A;
  Csr K;
};

/// Three-point stencils for A_ii, four-point cross for A_ij (i != j).
/// Rejects A that is not symmetric positive definite.
EffectiveOperator assemble_effective(const Eigen::MatrixXd& A, const FDGrid& grid, bool parallel = true);

struct Spectrum {
  std::vector<double> values;     // ascending
  std::vector<double> residuals;  // |K x - t x| / (|t| |x|)
  Eigen::MatrixXd vectors;        // columns, unit 2-norm
  int iterations = 0;
};

/// k <= 8 smallest eigenvalues by inverse subspace iteration with block k + 2.
Spectrum dirichlet_spectrum(const EffectiveOperator& op, int k, double tol = 1e-10, int max_iter = 1000);

/// Dense reference for grids with at most 4096 nodes.
std::vector<double> dirichlet_spectrum_dense(const EffectiveOperator& op, int k);

struct ResolventResult {
  Vec v;
  double relative_residual = 0.0;
  int iterations = 0;
};

/// (K + I) v = f by conjugate gradients to relative residual tol.
ResolventResult resolvent_effective(const EffectiveOperator& op, const Vec& f, double tol = 1e-10);

/// Multilinear interpolation of a grid function, zero on the box boundary.
double interpolate(const FDGrid& grid, const Vec& v, const Point& x);

}  // namespace spechomog::effective
