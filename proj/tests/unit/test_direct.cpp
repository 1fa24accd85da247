#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "spechomog/cell.hpp"
#include "spechomog/direct.hpp"
#include "spechomog/linalg.hpp"

using namespace spechomog;
using namespace spechomog::direct;
using testing::gaussian_1d;
using testing::model_from;

namespace {

constexpr double kPi = std::numbers::pi;

testing::json on_box(testing::json m, double lo, double hi) {
  m["domain"] = {{"lower", {lo}}, {"upper", {hi}}};
  return m;
}

double J1(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2 * kPi); }

}  // namespace

TEST_CASE("grid alignment with the torus") {
  DomainSpec b;
  const auto g = EpsGrid::make(b, 8, 8);
  CHECK(g.size() == 63);
  CHECK(g.node(0)[0] == doctest::Approx(1.0 / 64));
  const int n = 64;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const double s = g.fast(i)[0] * n;
    CHECK(s == std::round(s));
  }
  CHECK_THROWS_AS(EpsGrid::make(b, 0, 8), ValidationError);
}

TEST_CASE("hand-assembled row") {
  const auto m = model_from(gaussian_1d("2"));
  const auto g = EpsGrid::make(m.domain(), 8, 8);
  const auto op = assemble_L_eps(m, g, 1e-10);
  const DenseMatrix L = op.L.to_dense();
  const int i = 31;
  const double w = g.hx / g.eps;
  for (int j = 0; j < g.size(); ++j) {
    const double z = (g.node(i)[0] - g.node(j)[0]) / g.eps;
    double expect = std::abs(z) <= op.radius ? -w * J1(z) : 0.0;
    if (i == j) expect += 2.0;
    CHECK(L(i, j) == doctest::Approx(expect).epsilon(1e-13).scale(1e-300));
  }
}

TEST_CASE("row sums: a - int J deep inside, larger near the boundary") {
  const auto m = model_from(on_box(gaussian_1d("2"), 0.0, 4.0));
  const auto g = EpsGrid::make(m.domain(), 8, 8);
  const auto op = assemble_L_eps(m, g, 1e-10);
  const Vec rows = op.L.to_dense().rowwise().sum();
  const std::int64_t mid = g.size() / 2;
  CHECK(std::abs(rows[mid] - 1.0) <= 1e-9);
  CHECK(rows[0] > rows[mid] + 0.1);
}

TEST_CASE("trivial bottom of the spectrum") {
  const auto m = model_from(gaussian_1d("2"));
  const auto g = EpsGrid::make(m.domain(), 16, 8);
  const auto op = assemble_L_eps(m, g, 1e-10);
  const auto s = bottom_of_spectrum(op, 1e-10, 2000000);
  CHECK(s.lambda_eps > 1.0);
  CHECK(s.lambda_eps < 2.0);
  CHECK(s.rho.minCoeff() > 0.0);
  const double eps2 = g.eps * g.eps;
  CHECK(testing::rel((s.lambda_eps - 1.0) / eps2, kPi * kPi / 2) <= 0.2);
  CHECK(s.lower_bound >= s.lambda_eps - 10 * s.residual);
  CHECK(s.lower_bound <= s.lambda_eps + 10 * s.residual);
  CHECK(std::abs(s.lambda_eps - linalg::bottom_real_part(op.L.to_dense())) <= 1e-8);
}

TEST_CASE("larger domain lowers lambda toward 2 - int J") {
  const auto small = model_from(gaussian_1d("2"));
  const auto big = model_from(on_box(gaussian_1d("2"), 0.0, 2.0));
  const double ls = bottom_of_spectrum(assemble_L_eps(small, EpsGrid::make(small.domain(), 8, 8), 1e-10), 1e-10, 2000000).lambda_eps;
  const double lb = bottom_of_spectrum(assemble_L_eps(big, EpsGrid::make(big.domain(), 8, 8), 1e-10), 1e-10, 2000000).lambda_eps;
  CHECK(lb < ls);
  CHECK(lb > 1.0);
}

TEST_CASE("dense oracle on a nontrivial periodic model") {
  const auto m = model_from(gaussian_1d("2 + 0.3*cos(2*pi*xi1)", "1 + 0.5*sin(2*pi*(xi1 - eta1))", 0.25));
  for (int K : {8, 16}) {
    const auto op = assemble_L_eps(m, EpsGrid::make(m.domain(), K, 8), 1e-10);
    const auto s = bottom_of_spectrum(op, 1e-11, 2000000);
    CHECK(std::abs(s.lambda_eps - linalg::bottom_real_part(op.L.to_dense())) <= 1e-8);
  }
}

TEST_CASE("certificates") {
  const auto m = model_from(gaussian_1d("2"));
  const auto op = assemble_L_eps(m, EpsGrid::make(m.domain(), 8, 8), 1e-10);
  const Vec ones = Vec::Ones(op.grid.size());
  const double lb = certify_lower_bound(op, ones);
  CHECK(lb == doctest::Approx(op.L.to_dense().rowwise().sum().minCoeff()).epsilon(1e-14));
  CHECK(lb <= bottom_of_spectrum(op, 1e-10, 2000000).lambda_eps);
  Vec bad = ones;
  bad[3] = 0.0;
  CHECK_THROWS_AS(certify_lower_bound(op, bad), ValidationError);
}

TEST_CASE("cell eigenfunction as a test function") {
  // Symmetric coefficients keep p0 = 0, so the bound approaches H(0).
  const auto m = model_from(gaussian_1d("2 + 0.3*cos(2*pi*xi1)", "1 + 0.2*cos(2*pi*(xi1 - eta1))", 0.3));
  const auto torus = cell::TorusGrid::make(1, 64);
  const cell::CellProblem cp(m, torus, {0.5}, {});
  const auto pr = cell::cell_eigenpair(cp, {0.0});
  double prev_gap = INFINITY;
  for (int K : {8, 16, 32}) {
    const auto g = EpsGrid::make(m.domain(), K, 8);
    const auto op = assemble_L_eps(m, g, 1e-10);
    const double lb = certify_lower_bound(op, sample_cell_function(g, torus, pr.phi));
    const double lam = bottom_of_spectrum(op, 1e-10, 2000000).lambda_eps;
    CHECK(lb <= lam + 1e-9);
    const double gap = std::abs(lb - pr.H);
    CHECK(gap <= prev_gap + 1e-12);
    prev_gap = gap;
  }
  CHECK(prev_gap <= 1e-5);
}

TEST_CASE("shifting a shifts lambda") {
  const auto m1 = model_from(gaussian_1d("2 + 0.3*cos(2*pi*xi1)"));
  const auto m2 = model_from(gaussian_1d("2.75 + 0.3*cos(2*pi*xi1)"));
  const auto l1 = bottom_of_spectrum(assemble_L_eps(m1, EpsGrid::make(m1.domain(), 8, 8), 1e-10), 1e-12, 2000000);
  const auto l2 = bottom_of_spectrum(assemble_L_eps(m2, EpsGrid::make(m2.domain(), 8, 8), 1e-10), 1e-12, 2000000);
  CHECK(std::abs(l2.lambda_eps - l1.lambda_eps - 0.75) <= 1e-12);
}

TEST_CASE("scaling kappa keeps the eigenvector") {
  const auto m1 = model_from(gaussian_1d("2"));
  const auto m2 = model_from(gaussian_1d("2", "1.5"));
  const auto r1 = bottom_of_spectrum(assemble_L_eps(m1, EpsGrid::make(m1.domain(), 8, 8), 1e-10), 1e-12, 2000000);
  const auto r2 = bottom_of_spectrum(assemble_L_eps(m2, EpsGrid::make(m2.domain(), 8, 8), 1e-10), 1e-12, 2000000);
  CHECK(r1.lambda_eps != r2.lambda_eps);
  Eigen::Index a1, a2;
  r1.rho.maxCoeff(&a1);
  r2.rho.maxCoeff(&a2);
  CHECK(a1 == a2);
  CHECK((r1.rho - r2.rho).cwiseAbs().maxCoeff() <= 1e-8);
}

TEST_CASE("serial and parallel paths agree bitwise") {
  const auto m = model_from(gaussian_1d("2 + 0.3*cos(2*pi*xi1)", "1 + 0.5*sin(2*pi*(xi1 - eta1))", 0.25));
  const auto g = EpsGrid::make(m.domain(), 16, 8);
  const auto a = assemble_L_eps(m, g, 1e-10, true);
  const auto b = assemble_L_eps(m, g, 1e-10, false);
  CHECK(a.L.val == b.L.val);
  CHECK(a.L.col == b.L.col);
  const auto sa = bottom_of_spectrum(a, 1e-10, 2000000, true);
  const auto sb = bottom_of_spectrum(b, 1e-10, 2000000, false);
  CHECK(sa.lambda_eps == sb.lambda_eps);
  CHECK(sa.rho == sb.rho);
}

TEST_CASE("factorized resolvent converges to the effective resolvent") {
  const auto m = model_from(gaussian_1d("2"));
  const auto torus = cell::TorusGrid::make(1, 64);
  const cell::CellProblem cp(m, torus, {0.5}, {});
  const auto pr = cell::cell_eigenpair(cp, {0.0});
  double prev = INFINITY;
  for (int K : {8, 16, 32}) {
    const auto g = EpsGrid::make(m.domain(), K, 8);
    const auto op = assemble_factorized(m, g, {0.0}, pr.phi, torus, 1e-10);
    Vec f(g.size()), exact(g.size());
    for (std::int64_t i = 0; i < g.size(); ++i) {
      f[i] = std::sin(kPi * g.node(i)[0]);
      exact[i] = f[i] / (1 + kPi * kPi / 2);
    }
    CHECK(factorized_resolvent_solve(op, Vec::Zero(g.size())).v.cwiseAbs().maxCoeff() == 0.0);
    const auto sol = factorized_resolvent_solve(op, f);
    CHECK(sol.relative_residual <= 1e-9);
    const double err = (sol.v - exact).norm() / exact.norm();
    CHECK(err < prev);
    prev = err;
  }
}

TEST_CASE("factorized eigenvalues match the shifted direct spectrum") {
  // Trivial case: L~ = (L - H0) / eps^2 exactly.
  const auto m = model_from(gaussian_1d("2"));
  const auto torus = cell::TorusGrid::make(1, 64);
  const auto pr = cell::cell_eigenpair(cell::CellProblem(m, torus, {0.5}, {}), {0.0});
  const auto g = EpsGrid::make(m.domain(), 8, 8);
  const auto fop = assemble_factorized(m, g, {0.0}, pr.phi, torus, 1e-10);
  const auto mu = factorized_eigenvalues(fop, 3);
  const double lam = bottom_of_spectrum(assemble_L_eps(m, g, 1e-10), 1e-12, 2000000).lambda_eps;
  CHECK(mu[0].real() == doctest::Approx(mu_from_lambda(lam, pr.H, g.eps)).epsilon(1e-6));
  CHECK(mu[1].real() > mu[0].real());
}

TEST_CASE("mu from lambda") {
  CHECK(mu_from_lambda(1.25, 1.25, 0.1) == 0.0);
  CHECK(mu_from_lambda(1.0 + 4.9 * 0.01, 1.0, 0.1) == doctest::Approx(4.9).epsilon(1e-12));
}
