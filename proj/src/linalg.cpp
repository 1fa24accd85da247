#include "spechomog/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include <Eigen/Eigenvalues>

#include "spechomog/model.hpp"

namespace spechomog::linalg {

namespace {

double inf_norm(const Vec& v) { return v.cwiseAbs().maxCoeff(); }

// Componentwise max |(Mv - lambda v)_i| / v_i. For a positive iterate this is
// the Collatz-Wielandt bracket width, so it bounds the eigenvalue error even
// when the Perron vector spans many decades.
double residual_inf(const Vec& Mv, const Vec& v, double lambda) {
  if (!(v.minCoeff() > 0.0)) return (Mv - lambda * v).cwiseAbs().maxCoeff() / inf_norm(v);
  return (Mv - lambda * v).cwiseAbs().cwiseQuotient(v).maxCoeff();
}

}  // namespace

PerronResult perron_bottom(const Apply& apply_M, int n, const PerronOptions& opt) {
  Vec v = Vec::Ones(n);
  Vec Mv(n), w(n);
  double hist[3] = {0, 0, 0};
  double best_res = INFINITY;

  for (int it = 1; it <= opt.max_iter; ++it) {
    apply_M(v, Mv);
    w = opt.shift * v - Mv;
    const double rayleigh = opt.shift - v.dot(w) / v.dot(v);
    double lambda = rayleigh;
    double res = residual_inf(Mv, v, lambda);

    hist[0] = hist[1];
    hist[1] = hist[2];
    hist[2] = rayleigh;
    if (opt.aitken_every > 0 && it >= 3 && it % opt.aitken_every == 0) {
      const double d1 = hist[2] - hist[1];
      const double d2 = hist[2] - 2 * hist[1] + hist[0];
      if (d2 != 0.0) {
        const double extrapolated = hist[2] - d1 * d1 / d2;
        const double res_x = residual_inf(Mv, v, extrapolated);
        if (std::isfinite(extrapolated) && res_x < res) {
          lambda = extrapolated;
          res = res_x;
        }
      }
    }
    best_res = std::min(best_res, res);
    if (res <= opt.tol) return {lambda, v, res, it};

    const double norm = inf_norm(w);
    if (!(norm > 0) || !std::isfinite(norm)) throw NumericalError("Perron iteration broke down (zero iterate)");
    v = w / norm;
  }
  throw NumericalError("Perron iteration did not converge in " + std::to_string(opt.max_iter) +
                       " sweeps (best residual " + std::to_string(best_res) + ")");
}

KrylovResult gmres(const Apply& A, const Vec& b, const Vec& diag, double tol, int restart, int max_iter) {
  const int n = static_cast<int>(b.size());
  KrylovResult out;
  out.x = Vec::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) return out;

  auto precond = [&](const Vec& u) -> Vec { return diag.size() ? Vec(u.cwiseQuotient(diag)) : u; };

  Vec r = b, tmp(n);
  int total = 0;
  double rel = 1.0;
  const int m = std::max(1, std::min(restart, n));
  while (total < max_iter) {
    A(out.x, tmp);
    r = b - tmp;
    double beta = r.norm();
    rel = beta / bnorm;
    if (rel <= tol) break;

    std::vector<Vec> V;
    V.reserve(m + 1);
    V.push_back(r / beta);
    Eigen::MatrixXd Hm = Eigen::MatrixXd::Zero(m + 1, m);
    Vec cs = Vec::Zero(m), sn = Vec::Zero(m), g = Vec::Zero(m + 1);
    g(0) = beta;
    int k = 0;
    for (; k < m && total < max_iter; ++k, ++total) {
      A(precond(V[k]), tmp);
      Vec wv = tmp;
      for (int j = 0; j <= k; ++j) {
        Hm(j, k) = wv.dot(V[j]);
        wv -= Hm(j, k) * V[j];
      }
      // One reorthogonalization pass keeps the basis clean for long cycles.
      for (int j = 0; j <= k; ++j) {
        const double c = wv.dot(V[j]);
        Hm(j, k) += c;
        wv -= c * V[j];
      }
      Hm(k + 1, k) = wv.norm();
      V.push_back(Hm(k + 1, k) > 0 ? Vec(wv / Hm(k + 1, k)) : Vec(Vec::Zero(n)));
      for (int j = 0; j < k; ++j) {
        const double t = cs(j) * Hm(j, k) + sn(j) * Hm(j + 1, k);
        Hm(j + 1, k) = -sn(j) * Hm(j, k) + cs(j) * Hm(j + 1, k);
        Hm(j, k) = t;
      }
      const double denom = std::hypot(Hm(k, k), Hm(k + 1, k));
      cs(k) = denom > 0 ? Hm(k, k) / denom : 1.0;
      sn(k) = denom > 0 ? Hm(k + 1, k) / denom : 0.0;
      Hm(k, k) = denom;
      Hm(k + 1, k) = 0.0;
      g(k + 1) = -sn(k) * g(k);
      g(k) = cs(k) * g(k);
      rel = std::abs(g(k + 1)) / bnorm;
      if (denom == 0.0) break;  // singular on the Krylov space; keep the first k columns
      if (rel <= tol) {
        ++k;
        ++total;
        break;
      }
    }
    if (k == 0) break;
    Vec y = Hm.topLeftCorner(k, k).triangularView<Eigen::Upper>().solve(g.head(k));
    Vec update = Vec::Zero(n);
    for (int j = 0; j < k; ++j) update += y(j) * V[j];
    out.x += precond(update);
    if (rel <= tol) {
      A(out.x, tmp);
      rel = (b - tmp).norm() / bnorm;
      if (rel <= 10 * tol) break;
    }
  }
  out.relative_residual = rel;
  out.iterations = total;
  if (rel > 10 * tol)
    throw NumericalError("GMRES stagnated at relative residual " + std::to_string(rel));
  return out;
}

std::vector<std::complex<double>> eigenvalues_by_real_part(const DenseMatrix& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(A), false);
  if (es.info() != Eigen::Success) throw NumericalError("dense eigendecomposition failed");
  std::vector<std::complex<double>> ev(es.eigenvalues().begin(), es.eigenvalues().end());
  std::sort(ev.begin(), ev.end(), [](const auto& a, const auto& b) {
    return a.real() < b.real() || (a.real() == b.real() && a.imag() < b.imag());
  });
  return ev;
}

// When the bottom eigenvector is graded over many decades the eigenvalue is
// badly conditioned for QR on A itself. One exact diagonal similarity with the
// dense solver's own eigenvector restores the lost digits.
double bottom_real_part(const DenseMatrix& A) {
  Eigen::EigenSolver<Eigen::MatrixXd> es(Eigen::MatrixXd(A), true);
  if (es.info() != Eigen::Success) throw NumericalError("dense eigendecomposition failed");
  const auto& ev = es.eigenvalues();
  Eigen::Index j = 0;
  for (Eigen::Index i = 1; i < ev.size(); ++i)
    if (ev[i].real() < ev[j].real()) j = i;
  Vec w = es.eigenvectors().col(j).cwiseAbs();
  w /= w.maxCoeff();
  if (w.minCoeff() > 1e-3) return ev[j].real();
  w = w.cwiseMax(1e-200);
  const DenseMatrix S = w.cwiseInverse().asDiagonal() * A * w.asDiagonal();
  return eigenvalues_by_real_part(S).front().real();
}

}  // namespace spechomog::linalg
