#include "spechomog/effective.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>
#include <Eigen/IterativeLinearSolvers>
#include <Eigen/SparseCholesky>

namespace spechomog::effective {

FDGrid FDGrid::make(const DomainSpec& box, std::array<int, 3> N) {
  FDGrid g;
  g.d = box.d;
  g.lower = box.lower;
  g.upper = box.upper;
  double hmin = INFINITY, hmax = 0.0;
  for (int a = 0; a < g.d; ++a) {
    if (N[a] < 3) throw ValidationError("effective grid needs at least 3 interior nodes per axis");
    if (!(box.upper[a] > box.lower[a])) throw ValidationError("effective grid box has an empty axis");
    g.N[a] = N[a];
    g.h[a] = (box.upper[a] - box.lower[a]) / (N[a] + 1);
    hmin = std::min(hmin, g.h[a]);
    hmax = std::max(hmax, g.h[a]);
  }
  if (hmax / hmin > 8.0) throw ValidationError("effective grid anisotropy h_max/h_min exceeds 8");
  return g;
}

std::int64_t FDGrid::size() const {
  std::int64_t s = 1;
  for (int a = 0; a < d; ++a) s *= N[a];
  return s;
}

std::array<int, 3> FDGrid::digits(std::int64_t k) const {
  std::array<int, 3> out{};
  for (int a = d - 1; a >= 0; --a) {
    out[a] = static_cast<int>(k % N[a]);
    k /= N[a];
  }
  return out;
}

std::int64_t FDGrid::index(const std::array<int, 3>& dg) const {
  std::int64_t k = 0;
  for (int a = 0; a < d; ++a) k = k * N[a] + dg[a];
  return k;
}

Point FDGrid::node(std::int64_t k) const {
  const auto dg = digits(k);
  Point p{};
  for (int a = 0; a < d; ++a) p[a] = lower[a] + (dg[a] + 1) * h[a];
  return p;
}

EffectiveOperator assemble_effective(const Eigen::MatrixXd& A, const FDGrid& grid, bool parallel) {
  const int d = grid.d;
  if (A.rows() != d || A.cols() != d) throw ValidationError("effective matrix has the wrong size");
  if ((A - A.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, A.cwiseAbs().maxCoeff()))
    throw ValidationError("effective matrix is not symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (!(es.eigenvalues().minCoeff() > 0.0)) throw ValidationError("effective matrix is not positive definite");

  EffectiveOperator op;
  op.grid = grid;
  op.A = A;
  const auto n = static_cast<int>(grid.size());
  auto fill = [&](int i, CsrRow& row) {
    const auto dg = grid.digits(i);
    auto push = [&](std::array<int, 3> nb, double v) {
      for (int a = 0; a < d; ++a)
        if (nb[a] < 0 || nb[a] >= grid.N[a]) return;  // Dirichlet zero
      row.push(static_cast<int>(grid.index(nb)), v);
    };
    double diag = 0.0;
    for (int a = 0; a < d; ++a) diag += 2.0 * A(a, a) / (grid.h[a] * grid.h[a]);
    row.push(i, diag);
    for (int a = 0; a < d; ++a) {
      const double c = -A(a, a) / (grid.h[a] * grid.h[a]);
      auto m = dg, p = dg;
      --m[a];
      ++p[a];
      push(m, c);
      push(p, c);
    }
    for (int a = 0; a < d; ++a) {
      for (int b = a + 1; b < d; ++b) {
        if (A(a, b) == 0.0) continue;
        // -2 A_ab (u_{++} + u_{--} - u_{+-} - u_{-+}) / (4 h_a h_b)
        const double c = A(a, b) / (2.0 * grid.h[a] * grid.h[b]);
        for (int sa : {-1, 1}) {
          for (int sb : {-1, 1}) {
            auto nb = dg;
            nb[a] += sa;
            nb[b] += sb;
            push(nb, sa * sb > 0 ? -c : c);
          }
        }
      }
    }
  };
  op.K = kernels::assemble_rows(n, n, fill, parallel);
  return op;
}

namespace {

Eigen::MatrixXd start_basis(std::int64_t n, int b) {
  Eigen::MatrixXd X(n, b);
  for (int j = 0; j < b; ++j)
    for (std::int64_t i = 0; i < n; ++i) X(i, j) = std::sin((i + 1.0) * (j + 1.0) * 0.7071067811865476) + (j == 0);
  return X;
}

Eigen::MatrixXd orthonormalize(const Eigen::MatrixXd& X) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(X);
  return qr.householderQ() * Eigen::MatrixXd::Identity(X.rows(), X.cols());
}

}  // namespace

Spectrum dirichlet_spectrum(const EffectiveOperator& op, int k, double tol, int max_iter) {
  const auto n = op.grid.size();
  if (k < 1 || k > 8) throw ValidationError("dirichlet_spectrum supports 1 <= k <= 8");
  if (k > n) throw ValidationError("more eigenvalues requested than grid nodes");
  const int b = static_cast<int>(std::min<std::int64_t>(k + 2, n));
  const Eigen::SparseMatrix<double> K = op.K.to_eigen();
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt(K);
  if (ldlt.info() != Eigen::Success) throw NumericalError("effective operator factorization failed");

  Spectrum s;
  Eigen::MatrixXd X = orthonormalize(start_basis(n, b));
  for (int it = 1; it <= max_iter; ++it) {
    Eigen::MatrixXd Y = ldlt.solve(X);
    Y = orthonormalize(Y);
    const Eigen::MatrixXd KY = K * Y;
    const Eigen::MatrixXd T = Y.transpose() * KY;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (T + T.transpose()));
    X = Y * es.eigenvectors();
    const Eigen::MatrixXd KX = KY * es.eigenvectors();
    s.values.assign(k, 0.0);
    s.residuals.assign(k, 0.0);
    double worst = 0.0;
    for (int j = 0; j < k; ++j) {
      const double t = es.eigenvalues()(j);
      s.values[j] = t;
      s.residuals[j] = (KX.col(j) - t * X.col(j)).norm() / (std::abs(t) * X.col(j).norm());
      worst = std::max(worst, s.residuals[j]);
    }
    s.iterations = it;
    if (worst <= tol) {
      s.vectors = X.leftCols(k);
      return s;
    }
  }
  std::ostringstream os;
  os << "inverse subspace iteration did not converge in " << max_iter << " sweeps";
  throw NumericalError(os.str());
}

std::vector<double> dirichlet_spectrum_dense(const EffectiveOperator& op, int k) {
  if (op.grid.size() > 4096) throw ValidationError("dense effective spectrum limited to 4096 nodes");
  Eigen::MatrixXd K = op.K.to_dense();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (K + K.transpose()), Eigen::EigenvaluesOnly);
  const int kk = std::min<int>(k, static_cast<int>(K.rows()));
  return {es.eigenvalues().data(), es.eigenvalues().data() + kk};
}

ResolventResult resolvent_effective(const EffectiveOperator& op, const Vec& f, double tol) {
  const auto n = op.grid.size();
  if (f.size() != n) throw ValidationError("resolvent right-hand side has the wrong size");
  ResolventResult r;
  if (f.cwiseAbs().maxCoeff() == 0.0) {
    r.v = Vec::Zero(n);
    return r;
  }
  Eigen::SparseMatrix<double> K = op.K.to_eigen();
  Eigen::SparseMatrix<double> I(n, n);
  I.setIdentity();
  K += I;
  Eigen::ConjugateGradient<Eigen::SparseMatrix<double>, Eigen::Lower | Eigen::Upper> cg;
  cg.setTolerance(tol);
  cg.setMaxIterations(static_cast<int>(std::max<std::int64_t>(1000, 20 * n)));
  cg.compute(K);
  r.v = cg.solve(f);
  r.iterations = static_cast<int>(cg.iterations());
  r.relative_residual = (K * r.v - f).norm() / f.norm();
  if (cg.info() != Eigen::Success && r.relative_residual > tol)
    throw NumericalError("conjugate gradients did not reach the resolvent tolerance");
  return r;
}

double interpolate(const FDGrid& grid, const Vec& v, const Point& x) {
  const int d = grid.d;
  std::array<int, 3> c{};
  std::array<double, 3> t{};
  for (int a = 0; a < d; ++a) {
    // position in units of h counted from the lower boundary node (index -1)
    const double s = std::clamp((x[a] - grid.lower[a]) / grid.h[a], 0.0, grid.N[a] + 1.0);
    c[a] = std::min(static_cast<int>(std::floor(s)), grid.N[a]);
    t[a] = s - c[a];
  }
  double out = 0.0;
  for (int mask = 0; mask < (1 << d); ++mask) {
    std::array<int, 3> dg{};
    double w = 1.0;
    bool boundary = false;
    for (int a = 0; a < d; ++a) {
      const int bit = (mask >> a) & 1;
      dg[a] = c[a] + bit - 1;
      w *= bit ? t[a] : 1.0 - t[a];
      boundary |= dg[a] < 0 || dg[a] >= grid.N[a];
    }
    if (!boundary && w != 0.0) out += w * v[grid.index(dg)];
  }
  return out;
}

}  // namespace spechomog::effective
