#include "spechomog/experiments.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <random>

#include <CLI11.hpp>

#include "spechomog/cell.hpp"
#include "spechomog/direct.hpp"
#include "spechomog/effective.hpp"
#include "spechomog/hj.hpp"
#include "spechomog/linalg.hpp"

using nlohmann::json;

namespace spechomog::cli {

namespace {

constexpr const char* kVersion = "0.3.0";

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

json point_json(const Point& p, int d) { return std::vector<double>(p.begin(), p.begin() + d); }

json matrix_json(const Eigen::MatrixXd& A) {
  json out = json::array();
  for (int i = 0; i < A.rows(); ++i) {
    std::vector<double> row(A.cols());
    for (int j = 0; j < A.cols(); ++j) row[j] = A(i, j);
    out.push_back(row);
  }
  return out;
}

std::vector<std::string> axis_columns(const std::string& stem, int d) {
  std::vector<std::string> c;
  for (int a = 1; a <= d; ++a) c.push_back(stem + std::to_string(a));
  return c;
}

struct Context {
  const RunConfig& cfg;
  Model model;
  int d;
  cell::CellOptions copt;
  bool periodic;

  explicit Context(const RunConfig& c)
      : cfg(c), model(Model::validated(c.model)), d(c.model.domain.d), copt(cell_options(c)) {
    periodic = !model.kappa_depends_on_slow() && !model.a_depends_on_slow();
  }

  cell::TorusGrid torus(int n) const { return cell::TorusGrid::make(d, n, copt.node_cap); }
  cell::CellProblem cell_problem() const { return cell::CellProblem(model, torus(cfg.grids.torus_n), cfg.experiment.x, copt); }

  void require_periodic(const std::string& what) const {
    if (!periodic)
      throw ValidationError(what + " needs coefficients without slow-variable dependence (x, y)");
  }

  hj::TableSpec table_spec() const {
    hj::TableSpec s;
    s.x_counts = cfg.grids.hj_x_counts;
    s.p_max = cfg.grids.hj_p_max;
    s.p_count = cfg.grids.hj_p_count;
    s.torus_n = cfg.grids.hj_torus_n;
    s.cell = copt;
    return s;
  }

  Vec rhs_at(const direct::EpsGrid& g) const {
    Vec f(g.size());
    for (std::int64_t i = 0; i < g.size(); ++i) f[i] = eval_f(g.node(i));
    return f;
  }
  double eval_f(const Point& x) const {
    expr::Slots s{};
    for (int a = 0; a < d; ++a) s[expr::slot_of(expr::Family::X, a + 1)] = x[a];
    return cfg.experiment.f.evaluate(s);
  }
};

effective::EffectiveOperator effective_operator(const Context& c, const Eigen::MatrixXd& A) {
  const auto grid = effective::FDGrid::make(c.cfg.model.domain, c.cfg.grids.effective_N);
  return effective::assemble_effective(A, grid);
}

direct::SpectralResult direct_bottom(const Context& c, int K, direct::DirectOperator* keep = nullptr) {
  const auto g = direct::EpsGrid::make(c.cfg.model.domain, K, c.cfg.grids.direct_q);
  auto op = direct::assemble_L_eps(c.model, g, c.cfg.tol.truncation);
  auto s = direct::bottom_of_spectrum(op, c.cfg.tol.eigen, c.cfg.tol.max_iter);
  if (keep) *keep = std::move(op);
  return s;
}

// ---------------------------------------------------------------------------

ExperimentOutput run_cell_h(const Context& c) {
  ExperimentOutput out;
  const auto cp = c.cell_problem();
  out.table.columns = axis_columns("p", c.d);
  for (const char* col : {"H", "m", "gap", "classification", "residual"}) out.table.columns.push_back(col);
  for (const Point& p : c.cfg.experiment.p_list) {
    const auto r = cell::hamiltonian(cp, p);
    std::vector<std::string> row;
    for (int a = 0; a < c.d; ++a) row.push_back(fmt(p[a]));
    row.push_back(fmt(r.H));
    row.push_back(fmt(r.m));
    row.push_back(fmt(r.gap));
    row.push_back(cell::to_string(r.classification));
    row.push_back(fmt(r.residual));
    out.table.add(std::move(row));
  }
  out.results["x"] = point_json(c.cfg.experiment.x, c.d);
  out.results["points"] = c.cfg.experiment.p_list.size();
  return out;
}

json effective_summary(const cell::EffectiveModel& em) {
  json r;
  r["p0"] = point_json(em.p0, em.d);
  r["H0"] = em.H0;
  r["classification"] = cell::to_string(em.classification);
  r["m"] = em.m;
  if (em.classification == cell::Classification::PrincipalEigenvalue) {
    r["A"] = matrix_json(em.A);
    r["A_fd"] = matrix_json(em.A_fd);
    r["A_fd_relative_difference"] = (em.A - em.A_fd).norm() / em.A.norm();
    r["mass_imbalance"] = em.mass_imbalance;
    r["corrector_residual"] = em.corrector_residual;
  }
  return r;
}

ExperimentOutput run_effective(const Context& c) {
  ExperimentOutput out;
  c.require_periodic("the effective experiment");
  const auto cp = c.cell_problem();
  const auto em = cell::effective_model(cp);
  out.results = effective_summary(em);
  if (em.classification != cell::Classification::PrincipalEigenvalue)
    throw NumericalError("H(p0) is at the bottom of the essential spectrum; no effective operator");
  const auto op = effective_operator(c, em.A);
  const auto spec = effective::dirichlet_spectrum(op, c.cfg.experiment.k, c.cfg.tol.eigen);
  std::vector<double> dense;
  if (op.grid.size() <= 4096) dense = effective::dirichlet_spectrum_dense(op, c.cfg.experiment.k);
  out.table.columns = {"j", "Lambda", "residual", "Lambda_dense"};
  for (int j = 0; j < c.cfg.experiment.k; ++j)
    out.table.add({fmt(j + 1), fmt(spec.values[j]), fmt(spec.residuals[j]),
                   dense.empty() ? std::string() : fmt(dense[j])});
  out.results["Lambda"] = spec.values;
  out.results["effective_nodes"] = op.grid.size();
  return out;
}

ExperimentOutput run_direct(const Context& c) {
  ExperimentOutput out;
  std::optional<cell::EffectiveModel> em;
  if (c.periodic) {
    em = cell::effective_model(c.cell_problem());
    out.results["H0"] = em->H0;
    out.results["p0"] = point_json(em->p0, c.d);
    out.results["classification"] = cell::to_string(em->classification);
  }
  out.table.columns = {"eps", "K", "nodes", "lambda_eps", "mu_eps", "lower_bound", "residual", "iterations",
                       "min_a", "lambda_dense"};
  json lambdas = json::array();
  for (std::size_t i = 0; i < c.cfg.experiment.K_list.size(); ++i) {
    const int K = c.cfg.experiment.K_list[i];
    const double eps = c.cfg.experiment.eps_list[i];
    direct::DirectOperator op;
    const auto s = direct_bottom(c, K, &op);
    std::string mu;
    if (em && em->classification == cell::Classification::PrincipalEigenvalue)
      mu = fmt(direct::mu_from_lambda(s.lambda_eps, em->H0, eps));
    std::string dense;
    if (op.grid.size() <= c.cfg.grids.dense_max) dense = fmt(linalg::bottom_real_part(op.L.to_dense()));
    out.table.add({fmt(eps), fmt(K), fmt(static_cast<long long>(op.grid.size())), fmt(s.lambda_eps), mu,
                   fmt(s.lower_bound), fmt(s.residual), fmt(s.iterations), fmt(op.a.minCoeff()), dense});
    lambdas.push_back(s.lambda_eps);
  }
  out.results["lambda_eps"] = lambdas;
  return out;
}

ExperimentOutput run_asymptotics(const Context& c) {
  ExperimentOutput out;
  c.require_periodic("the asymptotics experiment");
  const auto cp = c.cell_problem();
  const auto em = cell::effective_model(cp);
  out.results = effective_summary(em);
  if (em.classification != cell::Classification::PrincipalEigenvalue)
    throw NumericalError("H(p0) is at the bottom of the essential spectrum; no two-term expansion");
  if (c.cfg.grids.torus_n % c.cfg.grids.direct_q != 0)
    throw ValidationError("grids.torus_n must be a multiple of grids.direct_q");
  const int k = c.cfg.experiment.k;
  const auto eop = effective_operator(c, em.A);
  const auto spec = effective::dirichlet_spectrum(eop, k, c.cfg.tol.eigen);
  out.results["Lambda"] = spec.values;

  struct Row {
    double eps, lambda, y;
    std::vector<double> mu_fact;
    double resolvent = NAN;
  };
  std::vector<Row> rows;
  for (std::size_t i = 0; i < c.cfg.experiment.K_list.size(); ++i) {
    const int K = c.cfg.experiment.K_list[i];
    Row r;
    r.eps = c.cfg.experiment.eps_list[i];
    r.lambda = direct_bottom(c, K).lambda_eps;
    r.y = r.lambda - em.H0;
    const auto g = direct::EpsGrid::make(c.cfg.model.domain, K, c.cfg.grids.direct_q);
    const auto fop = direct::assemble_factorized(c.model, g, em.p0, em.pair.phi, cp.grid(), c.cfg.tol.truncation);
    if (g.size() <= c.cfg.grids.dense_max)
      for (const auto& z : direct::factorized_eigenvalues(fop, k)) r.mu_fact.push_back(z.real());
    const Vec f = c.rhs_at(g);
    const auto sol = direct::factorized_resolvent_solve(fop, f);
    Vec fe(eop.grid.size());
    for (std::int64_t j = 0; j < eop.grid.size(); ++j) fe[j] = c.eval_f(eop.grid.node(j));
    const auto ve = effective::resolvent_effective(eop, fe, c.cfg.tol.eigen);
    Vec vi(g.size());
    for (std::int64_t j = 0; j < g.size(); ++j) vi[j] = effective::interpolate(eop.grid, ve.v, g.node(j));
    if (vi.norm() > 0) r.resolvent = (sol.v - vi).norm() / vi.norm();
    rows.push_back(std::move(r));
  }
  double num = 0.0, den = 0.0;
  for (const auto& r : rows) {
    num += r.y * r.eps * r.eps;
    den += std::pow(r.eps, 4);
  }
  const double slope = num / den;

  out.table.columns = {"eps", "eps2", "lambda_eps", "lambda_minus_H0", "mu_eps", "fit", "fit_residual"};
  for (int j = 1; j <= k; ++j) out.table.columns.push_back("mu" + std::to_string(j) + "_factorized");
  out.table.columns.push_back("resolvent_relative_error");
  json mus = json::array(), res = json::array();
  for (const auto& r : rows) {
    const double e2 = r.eps * r.eps;
    std::vector<std::string> row{fmt(r.eps), fmt(e2), fmt(r.lambda), fmt(r.y), fmt(r.y / e2), fmt(slope * e2),
                                 fmt(r.y - slope * e2)};
    for (int j = 0; j < k; ++j)
      row.push_back(j < static_cast<int>(r.mu_fact.size()) ? fmt(r.mu_fact[j]) : std::string());
    row.push_back(fmt(r.resolvent));
    out.table.add(std::move(row));
    mus.push_back(r.y / e2);
    res.push_back(std::isnan(r.resolvent) ? json(nullptr) : json(r.resolvent));
  }
  out.results["slope"] = slope;
  out.results["slope_relative_error"] = slope / spec.values[0] - 1.0;
  out.results["mu_eps"] = mus;
  out.results["mu_last_relative_error"] = mus.back().get<double>() / spec.values[0] - 1.0;
  out.results["resolvent_relative_error"] = res;
  return out;
}

struct HJRun {
  hj::RegularizedTable table;
  hj::ErgodicSolution disc, inf;
};

HJRun hj_run(const Context& c) {
  HJRun r;
  r.table = hj::tabulate_H_regularized(c.model, c.table_spec(), c.cfg.tol.delta);
  hj::DiscountedOptions o;
  o.tol = c.cfg.tol.hj;
  r.disc = hj::additive_eigenvalue(r.table.table, hj::Route::Discounted, o);
  r.inf = hj::additive_eigenvalue(r.table.table, hj::Route::InfMax, o);
  return r;
}

json hj_summary(const HJRun& r) {
  json j;
  j["Lambda"] = r.disc.Lambda;
  j["Lambda_infmax"] = r.inf.Lambda;
  j["Lambda_lb"] = r.disc.lower_bound_check;
  j["route"] = hj::to_string(r.disc.route);
  j["residual"] = r.disc.residual;
  j["deltas"] = r.disc.deltas;
  j["scaled_means"] = r.disc.scaled_means;
  j["cauchy_ratios"] = r.disc.cauchy_ratios;
  j["theta"] = std::vector<double>(r.disc.theta.begin(), r.disc.theta.begin() + r.table.table.dim());
  j["newton_iterations"] = r.disc.iterations;
  j["regularized"] = r.table.regularized;
  if (r.table.regularized) j["delta"] = r.table.delta;
  j["essential_entries"] = r.table.table.essential_count();
  j["concavity_violation"] = r.table.table.concavity_violation();
  return j;
}

ExperimentOutput run_hj(const Context& c) {
  ExperimentOutput out;
  const auto r = hj_run(c);
  const auto& t = r.table.table;
  out.results = hj_summary(r);
  out.table.columns = axis_columns("x", c.d);
  out.table.columns.push_back("W");
  out.table.columns.push_back("W_infmax");
  out.table.columns.push_back("max_p_H");
  for (const auto& s : axis_columns("pbar", c.d)) out.table.columns.push_back(s);
  for (std::int64_t i = 0; i < t.x_size(); ++i) {
    std::vector<std::string> row;
    const Point x = t.x_node(i), pb = t.pbar(i);
    for (int a = 0; a < c.d; ++a) row.push_back(fmt(x[a]));
    row.push_back(fmt(r.disc.W[i]));
    row.push_back(fmt(r.inf.W[i]));
    row.push_back(fmt(t.max_over_p(i)));
    for (int a = 0; a < c.d; ++a) row.push_back(fmt(pb[a]));
    out.table.add(std::move(row));
  }
  return out;
}

ExperimentOutput run_end_to_end(const Context& c) {
  ExperimentOutput out;
  const auto r = hj_run(c);
  out.results = hj_summary(r);
  out.table.columns = {"eps", "lambda_eps", "minus_Lambda", "abs_difference"};
  std::vector<double> gaps;
  for (std::size_t i = 0; i < c.cfg.experiment.K_list.size(); ++i) {
    const auto s = direct_bottom(c, c.cfg.experiment.K_list[i]);
    const double gap = std::abs(s.lambda_eps + r.disc.Lambda);
    gaps.push_back(gap);
    out.table.add({fmt(c.cfg.experiment.eps_list[i]), fmt(s.lambda_eps), fmt(-r.disc.Lambda), fmt(gap)});
  }
  // Ordered by decreasing eps so the trend reads left to right.
  std::vector<std::size_t> order(gaps.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::sort(order.begin(), order.end(),
            [&](auto a, auto b) { return c.cfg.experiment.eps_list[a] > c.cfg.experiment.eps_list[b]; });
  bool decreasing = true;
  for (std::size_t i = 1; i < order.size(); ++i) decreasing &= gaps[order[i]] < gaps[order[i - 1]];
  out.results["abs_difference"] = gaps;
  out.results["trend_decreasing"] = decreasing;
  return out;
}

// ---------------------------------------------------------------------------
// verify

struct Checks {
  CsvTable& table;
  std::vector<std::string>& failures;

  void add(const std::string& name, double value, double threshold, bool passed) {
    table.add({name, fmt(value), fmt(threshold), passed ? "pass" : "FAIL"});
    if (!passed) failures.push_back(name);
  }
  void at_most(const std::string& name, double value, double threshold) {
    add(name, value, threshold, value <= threshold);
  }
  void at_least(const std::string& name, double value, double threshold) {
    add(name, value, threshold, value >= threshold);
  }
};

int dense_torus_n(int d, int n, int dense_max) {
  while (n > 4 && std::pow(n, d) > dense_max) n /= 2;
  return n;
}

ExperimentOutput run_verify(const Context& c) {
  ExperimentOutput out;
  out.table.columns = {"check", "value", "threshold", "status"};
  Checks chk{out.table, out.failures};
  const auto& cfg = c.cfg;

  chk.add("model_validation", static_cast<double>(c.model.report().checks.size()), 0, c.model.report().ok());

  // Cell problem
  const auto cp = c.cell_problem();
  const double tol_class = cfg.tol.classification.value_or(10 * cfg.tol.eigen * (1 + std::abs(cp.m())));
  double above = -INFINITY, adj = 0.0;
  for (const Point& p : cfg.experiment.p_list) {
    const auto r = cell::hamiltonian(cp, p);
    above = std::max(above, r.H - r.m);
    const auto pr = cell::cell_eigenpair(cp, p);
    adj = std::max(adj, std::abs(pr.H_adjoint - pr.H) / std::max(1.0, std::abs(pr.H)));
  }
  chk.at_most("cell_H_below_min_a", above, tol_class);
  chk.at_most("cell_adjoint_agreement", adj, 10 * cfg.tol.eigen);
  {
    const int n = dense_torus_n(c.d, cfg.grids.torus_n, cfg.grids.dense_max);
    const auto op = cell::assemble_cell_operator(c.model, c.torus(n), cfg.experiment.p_list.front(),
                                                 cfg.experiment.x, cfg.tol.truncation);
    const auto pw = cell::principal_eigenpair(op, cfg.tol.eigen, cfg.tol.max_iter);
    chk.at_most("cell_power_vs_dense", std::abs(pw.H - linalg::bottom_real_part(op.M)), 1e-8);

    Vec x(op.M.rows());
    for (int i = 0; i < x.size(); ++i) x[i] = std::sin(1.0 + i);
    Vec y1(x.size()), y2(x.size());
    kernels::dense_matvec_serial(op.M, {x.data(), (size_t)x.size()}, {y1.data(), (size_t)y1.size()});
    kernels::dense_matvec(op.M, {x.data(), (size_t)x.size()}, {y2.data(), (size_t)y2.size()});
    chk.at_most("cell_matvec_serial_equals_parallel", (y1 - y2).cwiseAbs().maxCoeff(), 0.0);
  }

  // Effective model
  if (c.periodic) {
    const auto em = cell::effective_model(cp);
    if (em.classification == cell::Classification::PrincipalEigenvalue) {
      const auto q = cell::build_q_kernel(cp.assemble(em.p0), em.pair.phi, em.pair.phiStar);
      chk.at_most("q_mass_balance", q.mass_imbalance(), 1e-8);
      chk.at_most("corrector_residual", em.corrector_residual, 1e-8);
      chk.at_most("effective_A_vs_fd_hessian", (em.A - em.A_fd).norm() / em.A.norm(), 1e-3);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(em.A);
      chk.add("effective_A_positive_definite", es.eigenvalues().minCoeff(), 0, es.eigenvalues().minCoeff() > 0);
      const auto op = effective_operator(c, em.A);
      if (op.grid.size() <= 4096) {
        const int k = cfg.experiment.k;
        const auto s = effective::dirichlet_spectrum(op, k, cfg.tol.eigen);
        const auto dense = effective::dirichlet_spectrum_dense(op, k);
        double worst = 0.0;
        for (int j = 0; j < k; ++j) worst = std::max(worst, std::abs(s.values[j] - dense[j]) / dense[j]);
        chk.at_most("effective_subspace_vs_dense", worst, 1e-8);
      }
    }
  }

  // Direct operator
  {
    const auto& Ks = cfg.experiment.K_list;
    const int K = *std::min_element(Ks.begin(), Ks.end());
    direct::DirectOperator op;
    const auto s = direct_bottom(c, K, &op);
    chk.at_least("direct_certified_lower_bound", s.lambda_eps - s.lower_bound, -1e-12);
    if (op.grid.size() <= cfg.grids.dense_max)
      chk.at_most("direct_power_vs_dense", std::abs(s.lambda_eps - linalg::bottom_real_part(op.L.to_dense())), 1e-8);
    Vec x(op.grid.size());
    for (int i = 0; i < x.size(); ++i) x[i] = std::cos(0.5 + i);
    Vec y1(x.size()), y2(x.size());
    kernels::csr_matvec_serial(op.L, {x.data(), (size_t)x.size()}, {y1.data(), (size_t)y1.size()});
    kernels::csr_matvec(op.L, {x.data(), (size_t)x.size()}, {y2.data(), (size_t)y2.size()});
    chk.at_most("direct_matvec_serial_equals_parallel", (y1 - y2).cwiseAbs().maxCoeff(), 0.0);
    const auto op2 = direct::assemble_L_eps(c.model, op.grid, cfg.tol.truncation, false);
    chk.add("direct_assembly_serial_equals_parallel", 0, 0,
            op2.L.val == op.L.val && op2.L.col == op.L.col && op2.L.row_ptr == op.L.row_ptr);
  }

  // Hamilton-Jacobi
  {
    const auto r = hj_run(c);
    const auto& t = r.table.table;
    chk.at_most("hj_table_concavity", t.concavity_violation(), 1e-8);
    double worst = -INFINITY;
    const auto torus = c.torus(cfg.grids.hj_torus_n);
    Model tabulated = c.model;
    if (r.table.regularized) {
      std::vector<Point> xs;
      for (std::int64_t j = 0; j < t.x_size(); ++j) xs.push_back(t.x_node(j));
      tabulated = c.model.with_coefficients(regularize_a(c.model, r.table.delta, xs, cfg.grids.hj_torus_n));
    }
    for (std::int64_t i = 0; i < t.x_size(); ++i) {
      const cell::CellProblem p(tabulated, torus, t.x_node(i), c.copt);
      worst = std::max(worst, t.max_over_p(i) - p.m());
    }
    chk.at_most("hj_table_below_min_a", worst, tol_class);
    chk.at_least("hj_lambda_above_lower_bound", r.disc.Lambda - r.disc.lower_bound_check, -1e-6);
    chk.at_least("hj_infmax_not_below_discounted", r.inf.Lambda - r.disc.Lambda, -1e-3);
    double ratio = 0.0;
    for (double q : r.disc.cauchy_ratios) ratio = std::max(ratio, q);
    chk.at_most("hj_cauchy_ratio", ratio, 1.0);

    const hj::DiscountedScheme scheme(t);
    const double delta = 0.125;
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    std::uniform_int_distribution<std::int64_t> node(0, t.x_size() - 1);
    double worst_mono = INFINITY;
    for (int trial = 0; trial < 100; ++trial) {
      Vec u(t.x_size());
      for (auto& v : u) v = unif(rng) * t.dx(0);
      const auto j = node(rng);
      const double bump = 1e-3 * (1.0 + unif(rng));
      Vec up = u;
      up[j] += bump;
      const double tau = std::min(scheme.stable_step(delta, u), scheme.stable_step(delta, up));
      const Vec d = scheme.update(up, delta, tau) - scheme.update(u, delta, tau);
      worst_mono = std::min(worst_mono, d.minCoeff());
    }
    chk.at_least("hj_scheme_monotone", worst_mono, -1e-12);
  }

  // Regularization
  {
    const double delta = cfg.tol.delta;
    std::vector<Point> xs;
    for (int i = 0; i < 64; ++i) {
      const auto h = halton_point(i + 1, c.d);
      Point x{};
      for (int a = 0; a < c.d; ++a)
        x[a] = cfg.model.domain.lower[a] + h[a] * (cfg.model.domain.upper[a] - cfg.model.domain.lower[a]);
      xs.push_back(x);
    }
    const auto reg = c.model.with_coefficients(regularize_a(c.model, delta, xs, cfg.grids.hj_torus_n));
    double worst = 0.0;
    for (int i = 0; i < 10000; ++i) {
      const auto h = halton_point(i + 1, 2 * c.d);
      Point x{}, xi{};
      for (int a = 0; a < c.d; ++a) {
        x[a] = cfg.model.domain.lower[a] + h[a] * (cfg.model.domain.upper[a] - cfg.model.domain.lower[a]);
        xi[a] = h[c.d + a];
      }
      worst = std::max(worst, std::abs(reg.a(x, xi) - c.model.a(x, xi)));
    }
    chk.at_most("regularization_sup_norm", worst, delta);
  }

  out.results["checks"] = out.table.rows.size();
  out.results["failed"] = out.failures;
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------

void CsvTable::add(std::vector<std::string> row) { rows.push_back(std::move(row)); }

std::string CsvTable::render(const std::string& hash) const {
  std::string s;
  for (const auto& c : columns) s += c + ",";
  s += "config_hash\n";
  for (const auto& r : rows) {
    for (const auto& v : r) s += v + ",";
    s += hash + "\n";
  }
  return s;
}

std::string fmt(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string fmt(long long v) { return std::to_string(v); }

const std::vector<std::string>& experiment_names() {
  static const std::vector<std::string> names{"cell-h", "effective", "direct", "asymptotics",
                                              "hj", "end-to-end", "verify"};
  return names;
}

ExperimentOutput run_experiment(const std::string& name, const RunConfig& cfg) {
  const auto t0 = std::chrono::steady_clock::now();
  const Context c(cfg);
  ExperimentOutput out;
  if (name == "cell-h")
    out = run_cell_h(c);
  else if (name == "effective")
    out = run_effective(c);
  else if (name == "direct")
    out = run_direct(c);
  else if (name == "asymptotics")
    out = run_asymptotics(c);
  else if (name == "hj")
    out = run_hj(c);
  else if (name == "end-to-end")
    out = run_end_to_end(c);
  else if (name == "verify")
    out = run_verify(c);
  else
    throw ConfigError("experiment: unknown experiment '" + name + "'");
  out.timings["wall_seconds"] = seconds_since(t0);
  return out;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"spechomog: spectral homogenization of nonlocal operators"};
  std::string experiment, config_path, out_dir;
  int threads = 0;
  app.add_option("experiment", experiment, "experiment to run")
      ->required()
      ->check(CLI::IsMember(experiment_names()));
  app.add_option("--config", config_path, "JSON configuration file")->required();
  app.add_option("--out", out_dir, "output directory (overrides the config)");
  app.add_option("--threads", threads, "worker threads")->check(CLI::PositiveNumber);
  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  if (const char* env = std::getenv("SPECHOMOG_THREADS")) {
    char* end = nullptr;
    const long k = std::strtol(env, &end, 10);
    if (end == env || *end != '\0' || k < 1) {
      std::cerr << "SPECHOMOG_THREADS: expected a positive integer\n";
      return 2;
    }
    threads = static_cast<int>(k);
  }
  if (threads > 0) kernels::set_thread_count(threads);

  json manifest;
  manifest["tool"] = "spechomog";
  manifest["version"] = kVersion;
  manifest["experiment"] = experiment;
  manifest["threads"] = kernels::thread_count();

  std::filesystem::path dir = out_dir.empty() ? "results" : out_dir;
  int code = 0;
  auto write_manifest = [&] {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    std::ofstream(dir / "manifest.json") << manifest.dump(2) << "\n";
  };
  auto record_error = [&](int exit_code, const std::string& kind, const std::string& what) {
    manifest["status"] = "error";
    manifest["error"] = {{"kind", kind}, {"message", what}};
    manifest["exit_code"] = exit_code;
    std::cerr << "spechomog: " << kind << ": " << what << "\n";
    write_manifest();
    return exit_code;
  };

  RunConfig cfg;
  try {
    cfg = load_config(config_path);
  } catch (const ConfigError& e) {
    return record_error(2, "config error", e.what());
  }
  if (out_dir.empty()) dir = cfg.output;
  manifest["config_hash"] = cfg.hash;
  manifest["config"] = cfg.document;

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) return record_error(2, "config error", "output: cannot create directory " + dir.string());
  std::ofstream(dir / "config.schema.json") << config_schema().dump(2) << "\n";

  try {
    const auto out = run_experiment(experiment, cfg);
    const std::string csv = experiment + ".csv";
    std::ofstream(dir / csv, std::ios::binary) << out.table.render(cfg.hash);
    manifest["outputs"] = {{"csv", csv}, {"schema", "config.schema.json"}};
    manifest["results"] = out.results;
    manifest["timings"] = out.timings;
    if (!out.failures.empty()) {
      code = 3;
      manifest["status"] = "failed";
      std::cerr << "spechomog: " << out.failures.size() << " check(s) failed:";
      for (const auto& f : out.failures) std::cerr << " " << f;
      std::cerr << "\n";
    } else {
      manifest["status"] = "ok";
    }
    manifest["exit_code"] = code;
    write_manifest();
    return code;
  } catch (const ConfigError& e) {
    return record_error(2, "config error", e.what());
  } catch (const ValidationError& e) {
    return record_error(2, "validation error", e.what());
  } catch (const NumericalError& e) {
    return record_error(3, "numerical failure", e.what());
  } catch (const std::exception& e) {
    return record_error(3, "numerical failure", e.what());
  }
}

}  // namespace spechomog::cli
