#pragma once

#include <complex>
#include <functional>
#include <vector>

#include "spechomog/kernels.hpp"

namespace spechomog::linalg {

using Apply = std::function<void(const Vec& in, Vec& out)>;

struct PerronOptions {
  double shift = 0.0;  // s with sI - M entrywise nonnegative
  double tol = 1e-10;
  int max_iter = 200000;
  int aitken_every = 16;
};

struct PerronResult {
  double eigenvalue = 0.0;
  Vec vector;  // positive, infinity-norm 1
  double residual = 0.0;  // max_i |(Mv - lambda v)_i| / v_i
  int iterations = 0;
};

/// Bottom eigenvalue of M via power iteration on sI - M from the all-ones
/// vector. Throws NumericalError when max_iter is reached.
PerronResult perron_bottom(const Apply& apply_M, int n, const PerronOptions& opt);

struct KrylovResult {
  Vec x;
  double relative_residual = 0.0;
  int iterations = 0;
};

/// Restarted GMRES with optional right Jacobi preconditioning (empty
/// `diag` disables it). Throws NumericalError on stagnation.
KrylovResult gmres(const Apply& A, const Vec& b, const Vec& diag, double tol, int restart, int max_iter);

/// All eigenvalues of a dense matrix, sorted by increasing real part.
std::vector<std::complex<double>> eigenvalues_by_real_part(const DenseMatrix& A);

double bottom_real_part(const DenseMatrix& A);

}  // namespace spechomog::linalg
