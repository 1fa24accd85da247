#include "spechomog/direct.hpp"

#include <algorithm>
#include <cmath>

#include "spechomog/linalg.hpp"

namespace spechomog::direct {

namespace {

std::int64_t floor_mod(std::int64_t a, std::int64_t m) { return ((a % m) + m) % m; }

// Offsets o in [-L, L]^d in lexicographic order.
std::vector<std::array<int, 3>> offsets(int d, int L) {
  std::vector<std::array<int, 3>> out;
  std::array<int, 3> o{};
  for (int a = 0; a < d; ++a) o[a] = -L;
  while (true) {
    out.push_back(o);
    int a = d - 1;
    while (a >= 0 && o[a] == L) o[a--] = -L;
    if (a < 0) break;
    ++o[a];
  }
  return out;
}

void check_nnz(std::int64_t rows, std::size_t per_row, std::int64_t cap) {
  if (rows * static_cast<std::int64_t>(per_row) > cap)
    throw ValidationError("direct operator would hold about " + std::to_string(rows * per_row) +
                          " nonzeros, above the cap " + std::to_string(cap) + "; reduce q or the domain");
}

void matvec(const Csr& A, const Vec& x, Vec& y, bool parallel) {
  y.resize(A.rows);
  std::span<const double> xs{x.data(), static_cast<size_t>(x.size())};
  std::span<double> ys{y.data(), static_cast<size_t>(y.size())};
  if (parallel)
    kernels::csr_matvec(A, xs, ys);
  else
    kernels::csr_matvec_serial(A, xs, ys);
}

}  // namespace

EpsGrid EpsGrid::make(const DomainSpec& box, int K, int q, std::int64_t node_cap) {
  if (K < 1) throw ValidationError("eps must be 1/K for a positive integer K");
  if (q < 1) throw ValidationError("direct refinement q must be positive");
  EpsGrid g;
  g.d = box.d;
  g.K = K;
  g.q = q;
  g.eps = 1.0 / K;
  g.hx = 1.0 / (static_cast<double>(K) * q);
  g.box = box;
  const double scale = static_cast<double>(K) * q;
  std::int64_t total = 1;
  for (int a = 0; a < g.d; ++a) {
    const auto lo = static_cast<std::int64_t>(std::ceil(box.lower[a] * scale + 0.5 - 1e-9));
    const auto hi = static_cast<std::int64_t>(std::floor(box.upper[a] * scale - 0.5 + 1e-9));
    if (hi < lo) throw ValidationError("direct grid has no interior node on an axis; increase K or q");
    g.first[a] = lo;
    g.count[a] = static_cast<int>(hi - lo + 1);
    total *= g.count[a];
  }
  if (total > node_cap)
    throw ValidationError("direct grid has " + std::to_string(total) + " nodes, above the cap " +
                          std::to_string(node_cap));
  return g;
}

std::int64_t EpsGrid::size() const {
  std::int64_t s = 1;
  for (int a = 0; a < d; ++a) s *= count[a];
  return s;
}

std::array<std::int64_t, 3> EpsGrid::lattice(std::int64_t i) const {
  std::array<std::int64_t, 3> k{};
  for (int a = d - 1; a >= 0; --a) {
    k[a] = first[a] + i % count[a];
    i /= count[a];
  }
  return k;
}

Point EpsGrid::node(std::int64_t i) const {
  const auto k = lattice(i);
  Point x{};
  for (int a = 0; a < d; ++a) x[a] = static_cast<double>(k[a]) * hx;
  return x;
}

Point EpsGrid::fast(std::int64_t i) const {
  const auto k = lattice(i);
  Point xi{};
  for (int a = 0; a < d; ++a) xi[a] = static_cast<double>(floor_mod(k[a], q)) / q;
  return xi;
}

std::int64_t EpsGrid::find(const std::array<std::int64_t, 3>& k) const {
  std::int64_t i = 0;
  for (int a = 0; a < d; ++a) {
    const auto r = k[a] - first[a];
    if (r < 0 || r >= count[a]) return -1;
    i = i * count[a] + r;
  }
  return i;
}

DirectOperator assemble_L_eps(const Model& model, const EpsGrid& grid, double tol_trunc, bool parallel,
                              std::int64_t nnz_cap) {
  if (model.dim() != grid.d) throw ValidationError("model and direct grid dimensions differ");
  const int d = grid.d;
  DirectOperator op;
  op.grid = grid;
  op.radius = truncation_radius(model.kernel(), d, 0.0, model.kappa_bound(), tol_trunc);
  const int L = static_cast<int>(std::floor(op.radius * grid.q));
  const auto offs = offsets(d, L);
  const auto N = grid.size();
  check_nnz(N, offs.size(), nnz_cap);

  const double w = std::pow(1.0 / grid.q, d);  // (h_x / eps)^d
  std::vector<double> Jw(offs.size());
  for (std::size_t t = 0; t < offs.size(); ++t) {
    Point z{};
    for (int a = 0; a < d; ++a) z[a] = static_cast<double>(offs[t][a]) / grid.q;
    Jw[t] = w * model.J(z);
  }
  const bool kconst = model.kappa_is_constant();
  const double kc = kconst ? model.kappa({}, {}, {}, {}) : 0.0;

  op.a.resize(N);
  for (std::int64_t i = 0; i < N; ++i) op.a[i] = model.a(grid.node(i), grid.fast(i));

  auto fill = [&](int i, CsrRow& row) {
    const auto ki = grid.lattice(i);
    const Point xi = grid.node(i), fi = grid.fast(i);
    double diag = op.a[i];
    for (std::size_t t = 0; t < offs.size(); ++t) {
      auto kj = ki;
      for (int a = 0; a < d; ++a) kj[a] -= offs[t][a];
      const auto j = grid.find(kj);
      if (j < 0) continue;
      const double kap = kconst ? kc : model.kappa(xi, grid.node(j), fi, grid.fast(j));
      const double v = -Jw[t] * kap;
      if (j == i)
        diag += v;
      else
        row.push(static_cast<int>(j), v);
    }
    row.push(i, diag);
  };
  op.L = kernels::assemble_rows(static_cast<int>(N), static_cast<int>(N), fill, parallel);
  return op;
}

SpectralResult bottom_of_spectrum(const DirectOperator& op, double tol, int max_iter, bool parallel) {
  const auto N = op.grid.size();
  if (N > 1) {
    for (std::int64_t i = 0; i < N; ++i)
      if (op.L.row_ptr[i + 1] - op.L.row_ptr[i] < 2)
        throw NumericalError("grid too coarse relative to the kernel width: row " + std::to_string(i) +
                             " has no coupling");
  }
  linalg::PerronOptions po;
  po.shift = op.shift();
  po.tol = tol;
  po.max_iter = max_iter;
  auto r = linalg::perron_bottom([&](const Vec& x, Vec& y) { matvec(op.L, x, y, parallel); },
                                 static_cast<int>(N), po);
  if (!(r.vector.minCoeff() > 0.0)) throw NumericalError("Perron vector lost positivity");
  SpectralResult s;
  s.lambda_eps = r.eigenvalue;
  s.rho = r.vector / r.vector.maxCoeff();
  s.residual = r.residual;
  s.iterations = r.iterations;
  s.lower_bound = certify_lower_bound(op, s.rho);
  return s;
}

double certify_lower_bound(const DirectOperator& op, const Vec& v) {
  if (v.size() != op.grid.size()) throw ValidationError("test function has the wrong size");
  if (!(v.minCoeff() > 0.0)) throw ValidationError("test function must be positive at every node");
  Vec Lv;
  matvec(op.L, v, Lv, false);
  return Lv.cwiseQuotient(v).minCoeff();
}

Vec sample_cell_function(const EpsGrid& grid, const cell::TorusGrid& torus, const Vec& f) {
  if (torus.d != grid.d) throw ValidationError("torus and direct grid dimensions differ");
  if (torus.n % grid.q != 0) throw ValidationError("torus n must be a multiple of the direct refinement q");
  const int stride = torus.n / grid.q;
  Vec out(grid.size());
  for (std::int64_t i = 0; i < grid.size(); ++i) {
    const auto k = grid.lattice(i);
    std::int64_t c = 0;
    for (int a = 0; a < grid.d; ++a) c = c * torus.n + floor_mod(k[a], grid.q) * stride;
    out[i] = f[c];
  }
  return out;
}

FactorizedOperator assemble_factorized(const Model& model, const EpsGrid& grid, const Point& p0, const Vec& phi,
                                       const cell::TorusGrid& torus, double tol_trunc, bool parallel,
                                       std::int64_t nnz_cap) {
  const int d = grid.d;
  if (torus.n % grid.q != 0) throw ValidationError("torus n must be a multiple of the direct refinement q");
  FactorizedOperator op;
  op.grid = grid;
  double pn = 0.0;
  for (int a = 0; a < d; ++a) pn += p0[a] * p0[a];
  op.radius = truncation_radius(model.kernel(), d, std::sqrt(pn), model.kappa_bound(), tol_trunc);
  const int L = static_cast<int>(std::floor(op.radius * grid.q));
  const auto offs = offsets(d, L);
  const auto N = grid.size();
  check_nnz(N, offs.size(), nnz_cap);

  // h_x^d / eps^{d+2} = (1/q)^d / eps^2
  const double w = std::pow(1.0 / grid.q, d) / (grid.eps * grid.eps);
  std::vector<double> Jw(offs.size());
  for (std::size_t t = 0; t < offs.size(); ++t) {
    Point z{};
    double pz = 0.0;
    for (int a = 0; a < d; ++a) {
      z[a] = static_cast<double>(offs[t][a]) / grid.q;
      pz += p0[a] * z[a];
    }
    Jw[t] = w * model.J(z) * std::exp(pz);
  }
  const int stride = torus.n / grid.q;
  auto phi_at = [&](const std::array<std::int64_t, 3>& k) {
    std::int64_t c = 0;
    for (int a = 0; a < d; ++a) c = c * torus.n + floor_mod(k[a], grid.q) * stride;
    return phi[c];
  };
  auto fast_of = [&](const std::array<std::int64_t, 3>& k) {
    Point f{};
    for (int a = 0; a < d; ++a) f[a] = static_cast<double>(floor_mod(k[a], grid.q)) / grid.q;
    return f;
  };
  auto pos_of = [&](const std::array<std::int64_t, 3>& k) {
    Point x{};
    for (int a = 0; a < d; ++a) x[a] = static_cast<double>(k[a]) * grid.hx;
    return x;
  };
  const bool kconst = model.kappa_is_constant();
  const double kc = kconst ? model.kappa({}, {}, {}, {}) : 0.0;

  auto fill = [&](int i, CsrRow& row) {
    const auto ki = grid.lattice(i);
    const Point xi = grid.node(i), fi = grid.fast(i);
    const double phi_i = phi_at(ki);
    double diag = 0.0;
    for (std::size_t t = 0; t < offs.size(); ++t) {
      bool zero = true;
      auto kj = ki;
      for (int a = 0; a < d; ++a) {
        kj[a] -= offs[t][a];
        zero &= offs[t][a] == 0;
      }
      if (zero) continue;
      const double kap = kconst ? kc : model.kappa(xi, pos_of(kj), fi, fast_of(kj));
      const double c = Jw[t] * kap * phi_at(kj) / phi_i;
      diag += c;  // full-lattice sum, exterior included
      const auto j = grid.find(kj);
      if (j >= 0) row.push(static_cast<int>(j), -c);
    }
    row.push(i, diag);
  };
  op.L = kernels::assemble_rows(static_cast<int>(N), static_cast<int>(N), fill, parallel);
  return op;
}

FactorizedSolve factorized_resolvent_solve(const FactorizedOperator& op, const Vec& f, double tol, bool parallel) {
  const auto N = op.grid.size();
  if (f.size() != N) throw ValidationError("right-hand side has the wrong size");
  FactorizedSolve s;
  if (f.cwiseAbs().maxCoeff() == 0.0) {
    s.v = Vec::Zero(N);
    return s;
  }
  Vec diag(N);
  for (std::int64_t i = 0; i < N; ++i) diag[i] = op.L.diagonal(static_cast<int>(i)) + 1.0;
  auto apply = [&](const Vec& x, Vec& y) {
    matvec(op.L, x, y, parallel);
    y += x;
  };
  auto r = linalg::gmres(apply, f, diag, tol, 80, 200000);
  s.v = r.x;
  s.iterations = r.iterations;
  Vec y;
  apply(s.v, y);
  s.relative_residual = (y - f).norm() / f.norm();
  return s;
}

std::vector<std::complex<double>> factorized_eigenvalues(const FactorizedOperator& op, int k) {
  if (op.grid.size() > 2000) throw ValidationError("dense factorized spectrum limited to 2000 nodes");
  auto ev = linalg::eigenvalues_by_real_part(op.L.to_dense());
  ev.resize(std::min<std::size_t>(ev.size(), static_cast<std::size_t>(k)));
  return ev;
}

}  // namespace spechomog::direct
