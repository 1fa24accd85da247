#include "spechomog/hj.hpp"

#include <algorithm>
#include <cmath>
#include <memory>
#include <sstream>

#include <Eigen/QR>
#include <Eigen/SparseLU>

namespace spechomog::hj {

namespace {

std::int64_t ipow(int n, int d) {
  std::int64_t r = 1;
  for (int i = 0; i < d; ++i) r *= n;
  return r;
}

std::string format_point(const Point& p, int d) {
  std::ostringstream os;
  os.precision(6);
  os << "(";
  for (int i = 0; i < d; ++i) os << (i ? ", " : "") << p[i];
  os << ")";
  return os.str();
}

// Multilinear interpolation on the p-grid [-pmax, pmax]^d with np points per
// axis; beyond the grid either linear extrapolation or clamping.
double multilinear(const double* row, int d, int np, double pmax, const Point& p, Point* grad, bool extrapolate) {
  std::array<int, 3> c{};
  std::array<double, 3> t{};
  const double h = 2.0 * pmax / (np - 1);
  for (int a = 0; a < d; ++a) {
    const double s = (p[a] + pmax) / h;
    c[a] = static_cast<int>(std::clamp(std::floor(s), 0.0, static_cast<double>(np - 2)));
    t[a] = s - c[a];
    if (!extrapolate) t[a] = std::clamp(t[a], 0.0, 1.0);
  }
  double value = 0.0;
  Point g{};
  for (int mask = 0; mask < (1 << d); ++mask) {
    std::int64_t ip = 0;
    double w = 1.0;
    std::array<double, 3> wa{};
    for (int a = 0; a < d; ++a) {
      const int bit = (mask >> a) & 1;
      ip = ip * np + c[a] + bit;
      wa[a] = bit ? t[a] : 1.0 - t[a];
      w *= wa[a];
    }
    const double v = row[ip];
    value += w * v;
    if (grad) {
      for (int a = 0; a < d; ++a) {
        double wo = 1.0;
        for (int b = 0; b < d; ++b)
          if (b != a) wo *= wa[b];
        g[a] += (((mask >> a) & 1) ? 1.0 : -1.0) * wo * v / h;
      }
    }
  }
  if (grad) *grad = g;
  return value;
}

}  // namespace

// ---------------------------------------------------------------------------
// HTable

HTable::HTable(int d, DomainSpec box, std::array<int, 3> x_counts, double p_max, int p_count)
    : d_(d), box_(box), p_max_(p_max), np_(p_count) {
  if (d < 1 || d > 3) throw ValidationError("table dimension must be 1, 2 or 3");
  if (!(p_max > 0)) throw ValidationError("table p_max must be positive");
  if (p_count < 3) throw ValidationError("table needs at least 3 p points per axis");
  for (int a = 0; a < 3; ++a) nx_[a] = a < d ? x_counts[a] : 1;
  for (int a = 0; a < d; ++a)
    if (nx_[a] < 3) throw ValidationError("table needs at least 3 x points per axis");
  values_.assign(static_cast<std::size_t>(x_size() * p_size()), 0.0);
  essential_.assign(values_.size(), 0);
}

HTable HTable::from_function(int d, const DomainSpec& box, std::array<int, 3> x_counts, double p_max, int p_count,
                             const Fn& f) {
  HTable t(d, box, x_counts, p_max, p_count);
  for (std::int64_t ix = 0; ix < t.x_size(); ++ix)
    for (std::int64_t ip = 0; ip < t.p_size(); ++ip) t.at(ix, ip) = f(t.p_node(ip), t.x_node(ix));
  return t;
}

std::int64_t HTable::x_size() const { return static_cast<std::int64_t>(nx_[0]) * nx_[1] * nx_[2]; }
std::int64_t HTable::p_size() const { return ipow(np_, d_); }

std::array<int, 3> HTable::x_digits(std::int64_t ix) const {
  std::array<int, 3> dg{};
  for (int a = d_ - 1; a >= 0; --a) {
    dg[a] = static_cast<int>(ix % nx_[a]);
    ix /= nx_[a];
  }
  return dg;
}

std::int64_t HTable::x_index(const std::array<int, 3>& dg) const {
  std::int64_t ix = 0;
  for (int a = 0; a < d_; ++a) ix = ix * nx_[a] + dg[a];
  return ix;
}

Point HTable::x_node(std::int64_t ix) const {
  const auto dg = x_digits(ix);
  Point x{};
  for (int a = 0; a < d_; ++a) x[a] = box_.lower[a] + dg[a] * dx(a);
  return x;
}

Point HTable::p_node(std::int64_t ip) const {
  Point p{};
  for (int a = d_ - 1; a >= 0; --a) {
    p[a] = -p_max_ + static_cast<double>(ip % np_) * dp();
    ip /= np_;
  }
  return p;
}

std::int64_t HTable::nearest_x(const Point& x) const {
  std::array<int, 3> dg{};
  for (int a = 0; a < d_; ++a) {
    const double s = std::round((x[a] - box_.lower[a]) / dx(a));
    dg[a] = static_cast<int>(std::clamp(s, 0.0, static_cast<double>(nx_[a] - 1)));
  }
  return x_index(dg);
}

std::int64_t HTable::essential_count() const {
  return std::count(essential_.begin(), essential_.end(), 1);
}

double HTable::eval(const Point& p, std::int64_t ix, Point* grad) const {
  return multilinear(values_.data() + ix * p_size(), d_, np_, p_max_, p, grad, true);
}

Point HTable::pbar(std::int64_t ix) const {
  std::int64_t best = 0;
  for (std::int64_t ip = 1; ip < p_size(); ++ip)
    if (at(ix, ip) > at(ix, best)) best = ip;
  return p_node(best);
}

double HTable::max_over_p(std::int64_t ix) const {
  double m = -INFINITY;
  for (std::int64_t ip = 0; ip < p_size(); ++ip) m = std::max(m, at(ix, ip));
  return m;
}

double HTable::concavity_violation() const {
  double worst = 0.0;
  for (std::int64_t ix = 0; ix < x_size(); ++ix) {
    for (std::int64_t ip = 0; ip < p_size(); ++ip) {
      std::int64_t stride = 1;
      for (int a = d_ - 1; a >= 0; --a, stride *= np_) {
        const auto k = (ip / stride) % np_;
        if (k == 0 || k == np_ - 1) continue;
        const double s = at(ix, ip - stride) + at(ix, ip + stride) - 2 * at(ix, ip);
        worst = std::max(worst, s);
      }
    }
  }
  return worst;
}

double HTable::slope_bound(int axis, double P) const {
  const double tol = 1e-9 * dp();
  std::int64_t stride = 1;
  for (int a = d_ - 1; a > axis; --a) stride *= np_;
  double s = 0.0;
  for (std::int64_t ix = 0; ix < x_size(); ++ix) {
    for (std::int64_t ip = 0; ip < p_size(); ++ip) {
      if ((ip / stride) % np_ == np_ - 1) continue;
      const Point p0 = p_node(ip), p1 = p_node(ip + stride);
      bool inside = true;
      for (int a = 0; a < d_; ++a) inside &= std::abs(p0[a]) <= P + dp() + tol && std::abs(p1[a]) <= P + dp() + tol;
      if (!inside) continue;
      s = std::max(s, std::abs(at(ix, ip + stride) - at(ix, ip)) / dp());
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// Tabulation

HTable tabulate_H(const Model& model, const TableSpec& spec, bool parallel) {
  const int d = model.dim();
  HTable t(d, model.domain(), spec.x_counts, spec.p_max, spec.p_count);
  const auto torus = cell::TorusGrid::make(d, spec.torus_n, spec.cell.node_cap);
  cell::CellOptions copt = spec.cell;
  copt.parallel = false;  // parallelism is over table entries

  const auto nx = t.x_size(), np = t.p_size();
  std::vector<std::unique_ptr<cell::CellProblem>> problems(nx);
  std::vector<std::string> errors(nx * np);

#pragma omp parallel for schedule(dynamic, 1) if (parallel)
  for (std::int64_t ix = 0; ix < nx; ++ix) {
    try {
      problems[ix] = std::make_unique<cell::CellProblem>(model, torus, t.x_node(ix), copt);
    } catch (const std::exception& e) {
      errors[ix * np] = e.what();
    }
  }
#pragma omp parallel for schedule(dynamic, 4) if (parallel)
  for (std::int64_t k = 0; k < nx * np; ++k) {
    const auto ix = k / np, ip = k % np;
    if (!problems[ix]) continue;
    try {
      const auto r = cell::hamiltonian(*problems[ix], t.p_node(ip));
      const bool ess = r.classification == cell::Classification::EssentialBottom;
      t.at(ix, ip) = ess ? r.m : r.H;
      t.set_essential(ix, ip, ess);
    } catch (const std::exception& e) {
      errors[k] = e.what();
    }
  }
  std::int64_t first_error = -1;
  for (std::int64_t k = 0; k < nx * np && first_error < 0; ++k)
    if (!errors[k].empty()) first_error = k;
  if (first_error >= 0) {
    const auto ix = first_error / np, ip = first_error % np;
    throw NumericalError("cell solve failed at p = " + format_point(t.p_node(ip), d) + ", x = " +
                         format_point(t.x_node(ix), d) + ": " + errors[first_error]);
  }
  const double v = t.concavity_violation();
  if (v > 1e-8) {
    std::ostringstream os;
    os << "tabulated H is not concave along p grid lines (second difference " << v << ")";
    throw NumericalError(os.str());
  }
  return t;
}

RegularizedTable tabulate_H_regularized(const Model& model, const TableSpec& spec, double delta, bool parallel) {
  RegularizedTable out;
  out.table = tabulate_H(model, spec, parallel);
  if (out.table.essential_count() == 0) return out;
  std::vector<Point> xs;
  for (std::int64_t ix = 0; ix < out.table.x_size(); ++ix) xs.push_back(out.table.x_node(ix));
  const auto coeffs = regularize_a(model, delta, xs, spec.torus_n);
  out.table = tabulate_H(model.with_coefficients(coeffs), spec, parallel);
  out.regularized = true;
  out.delta = delta;
  return out;
}

std::string to_string(Route r) { return r == Route::Discounted ? "Discounted" : "InfMax"; }

// ---------------------------------------------------------------------------
// Discounted scheme

DiscountedScheme::DiscountedScheme(const HTable& table) : table_(&table) {
  pbar_.resize(table.x_size());
  for (std::int64_t ix = 0; ix < table.x_size(); ++ix) pbar_[ix] = table.pbar(ix);
  stride_ = {1, 1, 1};
  for (int a = table.dim() - 2; a >= 0; --a) stride_[a] = stride_[a + 1] * table.x_counts()[a + 1];
  // Slope envelope per axis: at each p node the larger |difference quotient|
  // of the two adjacent cells. Its interpolant is continuous and bounds
  // |dH/dp_k| of the table interpolant cell by cell.
  const int d = table.dim(), np = table.p_count();
  const auto ps = table.p_size();
  for (int k = 0; k < d; ++k) {
    std::int64_t ps_stride = 1;
    for (int a = d - 1; a > k; --a) ps_stride *= np;
    envelope_[k].assign(static_cast<std::size_t>(table.x_size() * ps), 0.0);
    for (std::int64_t ix = 0; ix < table.x_size(); ++ix) {
      for (std::int64_t ip = 0; ip < ps; ++ip) {
        const auto j = (ip / ps_stride) % np;
        double e = 0.0;
        if (j > 0) e = std::max(e, std::abs(table.at(ix, ip) - table.at(ix, ip - ps_stride)));
        if (j < np - 1) e = std::max(e, std::abs(table.at(ix, ip + ps_stride) - table.at(ix, ip)));
        envelope_[k][ix * ps + ip] = e / table.dp();
      }
    }
  }
  for (int k = 0; k < d; ++k) {
    std::int64_t st = 1;
    for (int m = d - 1; m >= 0; --m, st *= np) {
      for (std::int64_t ix = 0; ix < table.x_size(); ++ix) {
        const double* env = envelope_[k].data() + ix * ps;
        for (std::int64_t ip = 0; ip < ps; ++ip) {
          if ((ip / st) % np == np - 1) continue;
          envelope_lip_[k] = std::max(envelope_lip_[k], std::abs(env[ip + st] - env[ip]) / table.dp());
        }
      }
    }
  }
}

Vec DiscountedScheme::residual(const Vec& u, double delta, Eigen::SparseMatrix<double>* jac,
                               std::array<double, 3>* theta_max) const {
  const HTable& t = *table_;
  const int d = t.dim();
  const auto n = t.x_size();
  Vec G(n);
  std::vector<Eigen::Triplet<double>> trip;
  if (jac) trip.reserve(static_cast<std::size_t>(n) * (3 * d + 1));
  if (theta_max) *theta_max = {};

  for (std::int64_t i = 0; i < n; ++i) {
    const auto dg = t.x_digits(i);
    Point g{}, pm{}, pp{};
    std::array<bool, 3> interior{};
    // dg_k/du at the (minus, self, plus) neighbours
    std::array<std::array<double, 3>, 3> dgdu{};
    for (int k = 0; k < d; ++k) {
      const double h = t.dx(k);
      const bool hm = dg[k] > 0, hp = dg[k] < t.x_counts()[k] - 1;
      if (hm) pm[k] = (u[i] - u[i - stride_[k]]) / h;
      if (hp) pp[k] = (u[i + stride_[k]] - u[i]) / h;
      interior[k] = hm && hp;
      if (interior[k]) {
        g[k] = 0.5 * (pp[k] + pm[k]);
        dgdu[k] = {-0.5 / h, 0.0, 0.5 / h};
      } else if (hp) {
        // state constraint at the lower face: Godunov flux with no exterior value
        if (pp[k] < pbar_[i][k]) {
          g[k] = pp[k];
          dgdu[k] = {0.0, -1.0 / h, 1.0 / h};
        } else {
          g[k] = pbar_[i][k];
        }
      } else {
        if (pm[k] > pbar_[i][k]) {
          g[k] = pm[k];
          dgdu[k] = {-1.0 / h, 1.0 / h, 0.0};
        } else {
          g[k] = pbar_[i][k];
        }
      }
    }
    // Local viscosity: slope envelope at the one-sided differences. H is
    // concave along p_k, so the endpoints bound the slope in between.
    std::array<double, 3> theta{};
    double visc = 0.0;
    for (int k = 0; k < d; ++k) {
      if (!interior[k]) continue;
      const double* env = envelope_[k].data() + i * t.p_size();
      Point q = g;
      q[k] = pm[k];
      double th = multilinear(env, d, t.p_count(), t.p_max(), q, nullptr, false);
      q[k] = pp[k];
      th = std::max(th, multilinear(env, d, t.p_count(), t.p_max(), q, nullptr, false));
      theta[k] = th;
      visc += 0.5 * th * (pp[k] - pm[k]);
      if (theta_max) (*theta_max)[k] = std::max((*theta_max)[k], th);
    }
    Point grad{};
    const double H = t.eval(g, i, jac ? &grad : nullptr);
    G[i] = delta * u[i] - H - visc;
    if (jac) {
      trip.emplace_back(i, i, delta);
      for (int k = 0; k < d; ++k) {
        const auto s = stride_[k];
        if (dgdu[k][0] != 0.0) trip.emplace_back(i, i - s, -grad[k] * dgdu[k][0]);
        if (dgdu[k][1] != 0.0) trip.emplace_back(i, i, -grad[k] * dgdu[k][1]);
        if (dgdu[k][2] != 0.0) trip.emplace_back(i, i + s, -grad[k] * dgdu[k][2]);
        if (interior[k]) {
          const double c = 0.5 * theta[k] / t.dx(k);
          trip.emplace_back(i, i - s, -c);
          trip.emplace_back(i, i + s, -c);
          trip.emplace_back(i, i, 2 * c);
        }
      }
    }
  }
  if (jac) {
    jac->resize(n, n);
    jac->setFromTriplets(trip.begin(), trip.end());
  }
  return G;
}

double DiscountedScheme::stable_step(double delta) const {
  const HTable& t = *table_;
  const auto theta = lf_viscosity(t, t.p_max());
  double s = delta;
  for (int k = 0; k < t.dim(); ++k) s += 2.0 * theta[k] / t.dx(k);
  return 1.0 / s;
}

double DiscountedScheme::stable_step(double delta, const Vec& u) const {
  // Bound on dG_i/du_i: the global viscosity plus the change of the local
  // viscosity through every one-sided difference that moves with u_i.
  const HTable& t = *table_;
  const int d = t.dim();
  const auto theta = lf_viscosity(t, t.p_max());
  double base = delta, inv_h = 0.0;
  for (int k = 0; k < d; ++k) {
    base += 2.0 * theta[k] / t.dx(k);
    inv_h += 1.0 / t.dx(k);
  }
  double worst = base;
  for (std::int64_t i = 0; i < t.x_size(); ++i) {
    const auto dg = t.x_digits(i);
    double extra = 0.0;
    for (int k = 0; k < d; ++k) {
      if (dg[k] == 0 || dg[k] == t.x_counts()[k] - 1) continue;
      const double jump = std::abs(u[i + stride_[k]] - 2.0 * u[i] + u[i - stride_[k]]) / t.dx(k);
      extra += 0.5 * jump * envelope_lip_[k] * inv_h;
    }
    worst = std::max(worst, base + extra);
  }
  return 1.0 / worst;
}

Vec DiscountedScheme::update(const Vec& u, double delta, double tau) const { return u - tau * residual(u, delta); }

Vec DiscountedScheme::solve_newton(double delta, Vec u, double tol, int max_iter, int* iterations,
                                   double* final_residual) const {
  // Newton with pseudo-time damping: (J + I/tau) s = -G. Small tau reduces to
  // the monotone explicit update, which contracts the residual; tau grows
  // after each accepted step so the iteration ends as plain Newton.
  const auto n = u.size();
  Eigen::SparseMatrix<double> J, I(n, n);
  I.setIdentity();
  Vec G = residual(u, delta, &J);
  double r = G.cwiseAbs().maxCoeff();
  const double tau_min = 0.5 * stable_step(delta);
  double tau = 1e3 * tau_min;
  auto floor_reached = [&] { return r <= 1e-12 * (1.0 + u.cwiseAbs().maxCoeff() * delta); };
  int it = 0;
  for (; it < max_iter && r > tol; ++it) {
    Eigen::SparseMatrix<double> A = J + I / tau;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.compute(A);
    if (lu.info() != Eigen::Success) throw NumericalError("discounted scheme Jacobian is singular");
    const Vec trial = u + lu.solve(-G);
    Eigen::SparseMatrix<double> Jt;
    const Vec Gt = residual(trial, delta, &Jt);
    const double rt = Gt.cwiseAbs().maxCoeff();
    if (rt < r) {
      u = trial;
      G = Gt;
      J = std::move(Jt);
      tau = std::min(tau * std::min(10.0, 2.0 * r / rt), 1e30);
      r = rt;
    } else {
      if (floor_reached()) break;
      if (tau <= tau_min)
        throw NumericalError("discounted scheme Newton iteration stalled at residual " + std::to_string(r));
      tau = std::max(0.25 * tau, tau_min);
    }
  }
  if (r > tol && !floor_reached())
    throw NumericalError("discounted scheme did not converge (residual " + std::to_string(r) + ")");
  if (iterations) *iterations = it;
  if (final_residual) *final_residual = r;
  return u;
}

Vec DiscountedScheme::solve_value_iteration(double delta, Vec u, double tol, int max_iter, int* iterations) const {
  for (int it = 0; it < max_iter; ++it) {
    const Vec G = residual(u, delta);
    if (G.cwiseAbs().maxCoeff() <= tol) {
      if (iterations) *iterations = it;
      return u;
    }
    u -= stable_step(delta, u) * G;
  }
  throw NumericalError("value iteration did not converge in " + std::to_string(max_iter) + " sweeps");
}

std::array<double, 3> lf_viscosity(const HTable& table, double P) {
  std::array<double, 3> th{};
  for (int k = 0; k < table.dim(); ++k) {
    th[k] = std::max(table.slope_bound(k, P), 1e-12);
    if (!(th[k] < 1e8)) throw NumericalError("viscosity parameter overflow (theta = " + std::to_string(th[k]) + ")");
  }
  return th;
}

// ---------------------------------------------------------------------------
// Routes

namespace {

ErgodicSolution discounted_route(const HTable& t, const DiscountedOptions& opt) {
  lf_viscosity(t, t.p_max());  // overflow check on the table slopes
  DiscountedScheme scheme(t);
  ErgodicSolution sol;
  sol.route = Route::Discounted;
  Vec u = Vec::Constant(t.x_size(), -lambda_lower_bound(t));
  double prev_delta = 0.0;
  for (int k = opt.k_first; k <= opt.k_last; ++k) {
    const double delta = std::ldexp(1.0, -k);
    if (k == opt.k_first)
      u /= delta;
    else
      u.array() += sol.scaled_means.back() * (1.0 / delta - 1.0 / prev_delta);
    int its = 0;
    double res = 0.0;
    u = scheme.solve_newton(delta, u, opt.tol, opt.max_newton, &its, &res);
    sol.iterations += its;
    sol.residual = res;
    sol.deltas.push_back(delta);
    sol.scaled_means.push_back(delta * u.mean());
    prev_delta = delta;
  }
  scheme.residual(u, sol.deltas.back(), nullptr, &sol.theta);
  sol.W = (u.array() - u.mean()).matrix();
  const auto& s = sol.scaled_means;
  const auto m = s.size();
  // s_k = -Lambda + c1 delta_k + c2 delta_k^2 + ...; with halving deltas the
  // two-step Richardson combination removes both correction terms.
  if (m >= 3)
    sol.Lambda = -(8.0 * s[m - 1] - 6.0 * s[m - 2] + s[m - 3]) / 3.0;
  else if (m == 2)
    sol.Lambda = -(2.0 * s[m - 1] - s[m - 2]);
  else
    sol.Lambda = -s.back();
  for (std::size_t k = 2; k < m; ++k) {
    const double den = std::abs(s[k - 1] - s[k - 2]);
    sol.cauchy_ratios.push_back(den > 0 ? std::abs(s[k] - s[k - 1]) / den : 0.0);
  }
  sol.lower_bound_check = lambda_lower_bound(t);
  return sol;
}

struct Poly {
  int d;
  std::vector<std::array<int, 3>> alpha;
};

Poly poly_basis(int d) {
  Poly b{d, {}};
  std::array<int, 3> a{};
  while (true) {
    if (a[0] + a[1] + a[2] > 0) b.alpha.push_back(a);
    int k = d - 1;
    while (k >= 0 && a[k] == 3) a[k--] = 0;
    if (k < 0) break;
    ++a[k];
  }
  return b;
}

// Gradient of W = sum c_alpha prod t_k^alpha_k at scaled coordinates t.
Point poly_grad(const Poly& b, const std::vector<double>& c, const Point& t, const std::array<double, 3>& scale) {
  Point g{};
  for (std::size_t j = 0; j < b.alpha.size(); ++j) {
    const auto& al = b.alpha[j];
    for (int k = 0; k < b.d; ++k) {
      if (al[k] == 0) continue;
      double v = c[j] * al[k] * std::pow(t[k], al[k] - 1) * scale[k];
      for (int m = 0; m < b.d; ++m)
        if (m != k) v *= std::pow(t[m], al[m]);
      g[k] += v;
    }
  }
  return g;
}

ErgodicSolution infmax_route(const HTable& t) {
  const int d = t.dim();
  const Poly basis = poly_basis(d);
  const auto nc = basis.alpha.size();
  const auto n = t.x_size();
  std::vector<Point> ts(n);
  std::array<double, 3> scale{};
  for (int k = 0; k < d; ++k) scale[k] = 2.0 / (t.box().upper[k] - t.box().lower[k]);
  for (std::int64_t i = 0; i < n; ++i) {
    const Point x = t.x_node(i);
    for (int k = 0; k < d; ++k) ts[i][k] = (x[k] - t.box().lower[k]) * scale[k] - 1.0;
  }
  auto objective = [&](const std::vector<double>& c) {
    double worst = -INFINITY;
    for (std::int64_t i = 0; i < n; ++i) worst = std::max(worst, -t.eval(poly_grad(basis, c, ts[i], scale), i));
    return worst;
  };

  // Least-squares start: grad W close to the pointwise maximizer pbar(x).
  Eigen::MatrixXd D(n * d, nc);
  Vec rhs(n * d);
  for (std::int64_t i = 0; i < n; ++i) {
    const Point pb = t.pbar(i);
    for (std::size_t j = 0; j < nc; ++j) {
      std::vector<double> e(nc, 0.0);
      e[j] = 1.0;
      const Point g = poly_grad(basis, e, ts[i], scale);
      for (int k = 0; k < d; ++k) D(i * d + k, j) = g[k];
    }
    for (int k = 0; k < d; ++k) rhs(i * d + k) = pb[k];
  }
  const Vec c0 = D.colPivHouseholderQr().solve(rhs);
  std::vector<double> c(c0.data(), c0.data() + nc);
  double best = objective(c);
  const std::vector<double> zero(nc, 0.0);
  if (const double f0 = objective(zero); f0 < best) {
    best = f0;
    c = zero;
  }

  double step = 0.25;
  int evals = 0;
  while (step > 1e-10 && evals < 400000) {
    bool moved = false;
    for (std::size_t j = 0; j < nc && !moved; ++j) {
      for (double sgn : {1.0, -1.0}) {
        auto trial = c;
        trial[j] += sgn * step;
        const double f = objective(trial);
        ++evals;
        if (f < best) {
          best = f;
          c = std::move(trial);
          moved = true;
          break;
        }
      }
    }
    if (!moved) step *= 0.5;
  }

  ErgodicSolution sol;
  sol.route = Route::InfMax;
  sol.Lambda = best;
  sol.coefficients = c;
  sol.iterations = evals;
  sol.W.resize(n);
  for (std::int64_t i = 0; i < n; ++i) {
    double w = 0.0;
    for (std::size_t j = 0; j < nc; ++j) {
      double v = c[j];
      for (int k = 0; k < d; ++k) v *= std::pow(ts[i][k], basis.alpha[j][k]);
      w += v;
    }
    sol.W[i] = w;
  }
  sol.W.array() -= sol.W.mean();
  // Residual of the inf-max form: spread of -H(grad W, x) below its maximum.
  sol.residual = 0.0;
  sol.lower_bound_check = lambda_lower_bound(t);
  return sol;
}

}  // namespace

ErgodicSolution additive_eigenvalue(const HTable& table, Route route, const DiscountedOptions& opt) {
  return route == Route::Discounted ? discounted_route(table, opt) : infmax_route(table);
}

double lagrangian(const HTable& table, const Point& q, std::int64_t ix) {
  const int d = table.dim();
  double best = -INFINITY;
  Point pbest{};
  for (std::int64_t ip = 0; ip < table.p_size(); ++ip) {
    const Point p = table.p_node(ip);
    double v = table.at(ix, ip);
    for (int a = 0; a < d; ++a) v += q[a] * p[a];
    if (v > best) {
      best = v;
      pbest = p;
    }
  }
  // Local refinement on a 4x finer lattice around the best node.
  const int m = 9;
  const double h = table.dp() / 4.0;
  std::array<int, 3> k{};
  while (true) {
    Point p = pbest;
    for (int a = 0; a < d; ++a) p[a] += (k[a] - m / 2) * h;
    double v = table.eval(p, ix);
    for (int a = 0; a < d; ++a) v += q[a] * p[a];
    best = std::max(best, v);
    int a = d - 1;
    while (a >= 0 && k[a] == m - 1) k[a--] = 0;
    if (a < 0) break;
    ++k[a];
  }
  return best;
}

double lambda_lower_bound(const HTable& table) {
  double m = INFINITY;
  for (std::int64_t ix = 0; ix < table.x_size(); ++ix) m = std::min(m, table.max_over_p(ix));
  return -m;
}

}  // namespace spechomog::hj
