#include "spechomog/cell.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "spechomog/linalg.hpp"

namespace spechomog::cell {

namespace {

std::int64_t ipow(int n, int d) {
  std::int64_t r = 1;
  for (int i = 0; i < d; ++i) r *= n;
  return r;
}

double resolved_tol_class(const CellOptions& opt, double m) {
  return opt.tol_class > 0 ? opt.tol_class : 10.0 * opt.tol * (1.0 + std::abs(m));
}

double p_norm(const Point& p, int d) {
  double s = 0.0;
  for (int i = 0; i < d; ++i) s += p[i] * p[i];
  return std::sqrt(s);
}

std::string format_p(const Point& p, int d) {
  std::ostringstream os;
  os.precision(10);
  os << "(";
  for (int i = 0; i < d; ++i) os << (i ? ", " : "") << p[i];
  os << ")";
  return os.str();
}

// Tilted lattice moments G0, G1, G2 over the offsets hZ^d cut at |z|_inf <= R.
void lattice_moments(CellOperator& op, const Model& model) {
  const auto& g = op.grid;
  const int d = g.d, n = g.n;
  const double h = g.h();
  const std::int64_t N = g.size();
  const auto L = static_cast<int>(std::floor(op.radius * n));
  op.G0.assign(N, 0.0);
  op.G1.assign(d, std::vector<double>(N, 0.0));
  op.G2.assign(d * d, std::vector<double>(N, 0.0));

  std::array<int, 3> off{};
  for (int a = 0; a < d; ++a) off[a] = -L;
  while (true) {
    Point z{};
    double pz = 0.0;
    std::int64_t c = 0;
    for (int a = 0; a < d; ++a) {
      z[a] = off[a] * h;
      pz += op.p[a] * z[a];
      c = c * n + ((off[a] % n) + n) % n;
    }
    const double w = model.J(z) * std::exp(pz);
    op.G0[c] += w;
    for (int a = 0; a < d; ++a) {
      op.G1[a][c] += z[a] * w;
      for (int b = 0; b < d; ++b) op.G2[a * d + b][c] += z[a] * z[b] * w;
    }
    int a = d - 1;
    while (a >= 0 && off[a] == L) off[a--] = -L;
    if (a < 0) break;
    ++off[a];
  }
}

std::vector<std::int64_t> difference_table(const TorusGrid& g) {
  // class(i, j) for d = 1 is (i - j) mod n; in general it is assembled per axis.
  const std::int64_t N = g.size();
  std::vector<std::int64_t> cls(static_cast<std::size_t>(N * N));
  for (std::int64_t i = 0; i < N; ++i)
    for (std::int64_t j = 0; j < N; ++j) cls[i * N + j] = g.difference_class(i, j);
  return cls;
}

void assemble_matrix(CellOperator& op, bool parallel) {
  const std::int64_t N = op.grid.size();
  const auto cls = difference_table(op.grid);
  op.M.resize(N, N);
  const DenseMatrix& K = *op.kappa;
  auto row = [&](std::int64_t i) {
    for (std::int64_t j = 0; j < N; ++j) op.M(i, j) = -K(i, j) * op.G0[cls[i * N + j]];
    op.M(i, i) += op.a[i];
  };
  if (parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < N; ++i) row(i);
  } else {
    for (std::int64_t i = 0; i < N; ++i) row(i);
  }
  if (N > 1) {
    for (std::int64_t i = 0; i < N; ++i) {
      double off = 0.0;
      for (std::int64_t j = 0; j < N; ++j)
        if (j != i) off -= op.M(i, j);
      if (!(off > 0.0))
        throw NumericalError("grid too coarse: cell operator row " + std::to_string(i) + " has no coupling");
    }
  }
}

EigenResult perron_on(const DenseMatrix& M, double shift, double hd, double tol, int max_iter, bool parallel) {
  linalg::PerronOptions po;
  po.shift = shift;
  po.tol = tol;
  po.max_iter = max_iter;
  auto apply = [&](const Vec& in, Vec& out) {
    out.resize(in.size());
    if (parallel)
      kernels::dense_matvec(M, {in.data(), static_cast<size_t>(in.size())}, {out.data(), static_cast<size_t>(out.size())});
    else
      kernels::dense_matvec_serial(M, {in.data(), static_cast<size_t>(in.size())},
                                   {out.data(), static_cast<size_t>(out.size())});
  };
  auto r = linalg::perron_bottom(apply, static_cast<int>(M.rows()), po);
  if (!(r.vector.minCoeff() > 0.0)) throw NumericalError("Perron vector lost positivity");
  EigenResult e;
  e.H = r.eigenvalue;
  e.phi = r.vector / (r.vector.sum() * hd);
  e.residual = r.residual;
  e.iterations = r.iterations;
  return e;
}

// Discrete principal / essential decision for a computed H.
void classify(const CellProblem& cp, const CellOperator& op, HamiltonianResult& out) {
  const auto& opt = cp.options();
  out.m = op.m();
  out.gap = out.m - out.H;
  const double tc = resolved_tol_class(opt, out.m);
  if (out.gap <= tc) {
    out.classification = Classification::EssentialBottom;
    return;
  }
  out.classification = Classification::PrincipalEigenvalue;
  if (!opt.refine_classification || cp.grid().n / 2 < 4) return;
  if (out.gap > 100.0 * op.self_weight()) return;

  CellOptions coarse_opt = opt;
  coarse_opt.refine_classification = false;
  CellProblem coarse(cp.model(), TorusGrid::make(cp.grid().d, cp.grid().n / 2, opt.node_cap), cp.x(), coarse_opt);
  const auto cop = coarse.assemble(op.p);
  const auto ce = perron_on(cop.M, cop.shift(), coarse.grid().cell_volume(), opt.tol, opt.max_iter, opt.parallel);
  out.coarse_gap = cop.m() - ce.H;
  if (out.coarse_gap > 0 && out.gap / out.coarse_gap <= 0.75) out.classification = Classification::EssentialBottom;
}

CellEigenpair pair_from(const CellProblem& cp, const CellOperator& op) {
  const auto& opt = cp.options();
  const auto dir = principal_eigenpair(op, opt.tol, opt.max_iter, opt.parallel);
  const auto adj = adjoint_eigenpair(op, opt.tol, opt.max_iter, opt.parallel);
  if (std::abs(adj.H - dir.H) > 10.0 * opt.tol * std::max(1.0, std::abs(dir.H)))
    throw NumericalError("direct and adjoint cell eigenvalues disagree: " + std::to_string(dir.H) + " vs " +
                         std::to_string(adj.H));
  CellEigenpair pr;
  pr.H = dir.H;
  pr.H_adjoint = adj.H;
  pr.phi = dir.phi;
  pr.phiStar = adj.phi;
  pr.residual_direct = dir.residual;
  pr.residual_adjoint = adj.residual;
  HamiltonianResult hr;
  hr.H = dir.H;
  classify(cp, op, hr);
  pr.classification = hr.classification;
  return pr;
}

double principal_H(const CellProblem& cp, const Point& p) {
  const auto op = cp.assemble(p);
  const auto& opt = cp.options();
  return principal_eigenpair(op, opt.tol, opt.max_iter, opt.parallel).H;
}

}  // namespace

// ---------------------------------------------------------------------------

std::string to_string(Classification c) {
  return c == Classification::PrincipalEigenvalue ? "PrincipalEigenvalue" : "EssentialBottom";
}

TorusGrid TorusGrid::make(int d, int n, std::int64_t node_cap) {
  if (d < 1 || d > 3) throw ValidationError("torus dimension must be 1, 2 or 3");
  if (n < 4 || (n & (n - 1)) != 0) throw ValidationError("torus n must be a power of two >= 4, got " + std::to_string(n));
  if (ipow(n, d) > node_cap)
    throw ValidationError("torus grid has " + std::to_string(ipow(n, d)) + " nodes, above the cap " +
                          std::to_string(node_cap));
  return TorusGrid{d, n};
}

double TorusGrid::cell_volume() const { return std::pow(h(), d); }

std::int64_t TorusGrid::size() const { return ipow(n, d); }

std::array<int, 3> TorusGrid::digits(std::int64_t k) const {
  std::array<int, 3> out{};
  for (int a = d - 1; a >= 0; --a) {
    out[a] = static_cast<int>(k % n);
    k /= n;
  }
  return out;
}

Point TorusGrid::node(std::int64_t k) const {
  const auto dg = digits(k);
  Point p{};
  for (int a = 0; a < d; ++a) p[a] = dg[a] * h();
  return p;
}

std::int64_t TorusGrid::difference_class(std::int64_t i, std::int64_t j) const {
  const auto di = digits(i), dj = digits(j);
  std::int64_t c = 0;
  for (int a = 0; a < d; ++a) c = c * n + ((di[a] - dj[a]) % n + n) % n;
  return c;
}

double CellOperator::weight(std::int64_t i, std::int64_t j, const std::vector<double>& moment) const {
  return (*kappa)(i, j) * moment[grid.difference_class(i, j)];
}

double CellOperator::self_weight() const {
  double w = 0.0;
  for (std::int64_t i = 0; i < grid.size(); ++i) w = std::max(w, (*kappa)(i, i) * G0[0]);
  return w;
}

CellProblem::CellProblem(const Model& model, TorusGrid grid, Point x, CellOptions opt)
    : model_(model), grid_(grid), x_(x), opt_(opt) {
  const std::int64_t N = grid_.size();
  if (N * N > opt_.dense_cap)
    throw ValidationError("dense cell matrix with " + std::to_string(N) + "^2 entries exceeds the memory cap " +
                          std::to_string(opt_.dense_cap));
  a_.resize(N);
  for (std::int64_t i = 0; i < N; ++i) a_[i] = model_.a(x_, grid_.node(i));

  auto K = std::make_shared<DenseMatrix>(N, N);
  const double hd = grid_.cell_volume();
  auto row = [&](std::int64_t i) {
    const Point xi = grid_.node(i);
    for (std::int64_t j = 0; j < N; ++j) (*K)(i, j) = hd * model_.kappa(x_, x_, xi, grid_.node(j));
  };
  if (opt_.parallel) {
#pragma omp parallel for schedule(static)
    for (std::int64_t i = 0; i < N; ++i) row(i);
  } else {
    for (std::int64_t i = 0; i < N; ++i) row(i);
  }
  kappa_ = std::move(K);
}

CellOperator CellProblem::assemble(const Point& p) const {
  CellOperator op;
  op.grid = grid_;
  op.p = p;
  op.x = x_;
  op.radius = truncation_radius(model_.kernel(), grid_.d, p_norm(p, grid_.d), model_.kappa_bound(), opt_.tol_trunc);
  op.a = a_;
  op.kappa = kappa_;
  lattice_moments(op, model_);
  assemble_matrix(op, opt_.parallel);
  return op;
}

CellOperator assemble_cell_operator(const Model& model, const TorusGrid& grid, const Point& p, const Point& x,
                                    double tol_trunc, bool parallel) {
  CellOptions opt;
  opt.tol_trunc = tol_trunc;
  opt.parallel = parallel;
  return CellProblem(model, grid, x, opt).assemble(p);
}

EigenResult principal_eigenpair(const CellOperator& op, double tol, int max_iter, bool parallel) {
  return perron_on(op.M, op.shift(), op.grid.cell_volume(), tol, max_iter, parallel);
}

EigenResult adjoint_eigenpair(const CellOperator& op, double tol, int max_iter, bool parallel) {
  const DenseMatrix Mt = op.M.transpose();
  return perron_on(Mt, op.shift(), op.grid.cell_volume(), tol, max_iter, parallel);
}

HamiltonianResult hamiltonian(const CellProblem& cp, const Point& p) {
  const auto op = cp.assemble(p);
  const auto& opt = cp.options();
  const auto e = principal_eigenpair(op, opt.tol, opt.max_iter, opt.parallel);
  HamiltonianResult out;
  out.H = e.H;
  out.residual = e.residual;
  classify(cp, op, out);
  return out;
}

HamiltonianResult hamiltonian(const Model& model, const Point& p, const Point& x, const TorusGrid& grid,
                              const CellOptions& opt) {
  return hamiltonian(CellProblem(model, grid, x, opt), p);
}

CellEigenpair cell_eigenpair(const CellProblem& cp, const Point& p) { return pair_from(cp, cp.assemble(p)); }

Maximizer maximize_H(const CellProblem& cp) {
  const auto& opt = cp.options();
  const int d = cp.grid().d;
  Maximizer best;
  double p_max = opt.p_max;
  for (int attempt = 0; attempt < 2; ++attempt, p_max *= 2.0) {
    best = Maximizer{};
    best.H0 = -INFINITY;
    best.p_max = p_max;
    const int k = std::max(2, opt.p_points);
    const double step0 = 2.0 * p_max / (k - 1);
    std::array<int, 3> idx{};
    while (true) {
      Point p{};
      for (int a = 0; a < d; ++a) p[a] = -p_max + idx[a] * step0;
      const double H = principal_H(cp, p);
      ++best.evaluations;
      if (H > best.H0) {
        best.H0 = H;
        best.p0 = p;
      }
      int a = d - 1;
      while (a >= 0 && idx[a] == k - 1) idx[a--] = 0;
      if (a < 0) break;
      ++idx[a];
    }

    double step = step0;
    while (step >= opt.tol_p) {
      bool moved = false;
      for (int a = 0; a < d && !moved; ++a) {
        for (double sgn : {1.0, -1.0}) {
          Point p = best.p0;
          p[a] += sgn * step;
          const double H = principal_H(cp, p);
          ++best.evaluations;
          if (H > best.H0) {
            best.H0 = H;
            best.p0 = p;
            moved = true;
            break;
          }
        }
      }
      if (!moved) step *= 0.5;
    }

    bool on_boundary = false;
    for (int a = 0; a < d; ++a) on_boundary |= std::abs(best.p0[a]) >= p_max * (1.0 - 1e-9);
    if (!on_boundary) return best;
  }
  throw NumericalError("maximizer of H lies on the search-box boundary " + format_p(best.p0, d) +
                       " after enlarging to p_max = " + std::to_string(best.p_max));
}

QKernel build_q_kernel(const CellOperator& op, const Vec& phi, const Vec& phiStar) {
  const int d = op.dim();
  const std::int64_t N = op.grid.size();
  QKernel q;
  q.grid = op.grid;
  q.Q.resize(N, N);
  q.Q1.assign(d, DenseMatrix(N, N));
  q.Q2.assign(d * d, DenseMatrix(N, N));
  const auto cls = difference_table(op.grid);
  const DenseMatrix& K = *op.kappa;
#pragma omp parallel for schedule(static)
  for (std::int64_t j = 0; j < N; ++j) {
    for (std::int64_t k = 0; k < N; ++k) {
      const auto c = cls[j * N + k];
      const double base = phiStar[j] * K(j, k) * phi[k];
      q.Q(j, k) = base * op.G0[c];
      for (int a = 0; a < d; ++a) {
        q.Q1[a](j, k) = base * op.G1[a][c];
        for (int b = 0; b < d; ++b) q.Q2[a * d + b](j, k) = base * op.G2[a * d + b][c];
      }
    }
  }
  return q;
}

double QKernel::mass_imbalance() const {
  const Vec rows = Q.rowwise().sum();
  const Vec cols = Q.colwise().sum().transpose();
  return (rows - cols).cwiseAbs().maxCoeff() / rows.maxCoeff();
}

CorrectorResult corrector_solve(const QKernel& q, int axis, double tol, bool parallel) {
  const auto N = q.Q.rows();
  // The diagonal uses the row sums: with them the all-ones vector is an exact
  // left null vector, so the mean-zero right-hand side is consistent. Row and
  // column sums differ only by the mass imbalance.
  const Vec colsum = q.Q.colwise().sum().transpose();
  const Vec rowsum = q.Q.rowwise().sum();
  const DenseMatrix Qt = q.Q.transpose();
  Vec b = q.Q1.at(axis).colwise().sum().transpose();

  CorrectorResult out;
  const double bmax = b.cwiseAbs().maxCoeff();
  const double mean = b.mean();
  out.inconsistency = bmax > 0 ? std::abs(mean) / bmax : 0.0;
  Vec rhs = -(b.array() - mean).matrix();
  // A right-hand side at roundoff level (symmetric kernels) has no consistent
  // part left to solve for.
  const double scale = q.Q1.at(axis).cwiseAbs().colwise().sum().maxCoeff();
  if (rhs.cwiseAbs().maxCoeff() <= 1e-13 * scale) {
    out.chi = Vec::Zero(N);
    return out;
  }

  auto apply = [&](const Vec& in, Vec& y) {
    y.resize(N);
    std::span<const double> xs{in.data(), static_cast<size_t>(N)};
    std::span<double> ys{y.data(), static_cast<size_t>(N)};
    if (parallel)
      kernels::dense_matvec(Qt, xs, ys);
    else
      kernels::dense_matvec_serial(Qt, xs, ys);
    y -= rowsum.cwiseProduct(in);
  };
  const Vec diag = -rowsum;
  auto kr = linalg::gmres(apply, rhs, diag, tol, 60, 50000);
  out.chi = (kr.x.array() - kr.x.mean()).matrix();
  out.iterations = kr.iterations;
  // Residual of the original equation, with the column-sum diagonal.
  Vec r(N);
  apply(out.chi, r);
  r += (rowsum - colsum).cwiseProduct(out.chi);
  out.residual = (r - rhs).cwiseAbs().maxCoeff() / rhs.cwiseAbs().maxCoeff();
  return out;
}

Eigen::MatrixXd effective_matrix(const QKernel& q, const std::vector<Vec>& chi, const Vec& phi, const Vec& phiStar) {
  const int d = q.grid.d;
  const double hd = q.grid.cell_volume();
  Eigen::MatrixXd As(d, d);
  for (int a = 0; a < d; ++a) {
    for (int b = 0; b < d; ++b) {
      const double second = 0.5 * q.Q2[a * d + b].sum();
      const double first = (chi[a].transpose() * q.Q1[b]).sum();
      As(a, b) = (second + first) * hd;
    }
  }
  const double norm = phi.dot(phiStar) * hd;
  Eigen::MatrixXd A = 0.5 * (As + As.transpose()) / norm;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(A);
  if (!(es.eigenvalues().minCoeff() > 0.0)) {
    std::ostringstream os;
    os << "effective matrix is not positive definite (smallest eigenvalue " << es.eigenvalues().minCoeff()
       << "); the corrector formula guarantees A > 0 only at a principal eigenvalue";
    throw NumericalError(os.str());
  }
  return A;
}

Eigen::MatrixXd hessian_fd(const CellProblem& cp, const Point& p0, double step) {
  const int d = cp.grid().d;
  auto H = [&](const Point& p) { return principal_H(cp, p); };
  const double H0 = H(p0);
  Eigen::MatrixXd A(d, d);
  for (int a = 0; a < d; ++a) {
    Point pp = p0, pm = p0;
    pp[a] += step;
    pm[a] -= step;
    A(a, a) = (H(pp) - 2 * H0 + H(pm)) / (step * step);
    for (int b = 0; b < a; ++b) {
      Point q1 = p0, q2 = p0, q3 = p0, q4 = p0;
      q1[a] += step, q1[b] += step;
      q2[a] += step, q2[b] -= step;
      q3[a] -= step, q3[b] += step;
      q4[a] -= step, q4[b] -= step;
      A(a, b) = A(b, a) = (H(q1) - H(q2) - H(q3) + H(q4)) / (4 * step * step);
    }
  }
  return -0.5 * A;
}

EffectiveModel effective_model(const CellProblem& cp) {
  EffectiveModel em;
  em.d = cp.grid().d;
  em.grid_n = cp.grid().n;
  em.m = cp.m();
  em.M = cp.M();
  const auto mx = maximize_H(cp);
  em.p0 = mx.p0;
  const auto op = cp.assemble(mx.p0);
  em.pair = pair_from(cp, op);
  em.H0 = em.pair.H;
  em.classification = em.pair.classification;
  if (em.classification == Classification::EssentialBottom) return em;

  const auto q = build_q_kernel(op, em.pair.phi, em.pair.phiStar);
  em.mass_imbalance = q.mass_imbalance();
  for (int a = 0; a < em.d; ++a) {
    auto c = corrector_solve(q, a, cp.options().corrector_tol, cp.options().parallel);
    em.corrector_residual = std::max(em.corrector_residual, c.residual);
    em.chiStar.push_back(std::move(c.chi));
  }
  em.A = effective_matrix(q, em.chiStar, em.pair.phi, em.pair.phiStar);
  em.A_fd = hessian_fd(cp, em.p0, cp.options().hessian_step);
  return em;
}

}  // namespace spechomog::cell
