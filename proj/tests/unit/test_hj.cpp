#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "spechomog/hj.hpp"

using namespace spechomog;
using namespace spechomog::hj;
using testing::gaussian_1d;
using testing::model_from;

namespace {

constexpr double kPi = std::numbers::pi;

DomainSpec unit(int d = 1) {
  DomainSpec b;
  b.d = d;
  return b;
}

HTable trivial_table() {
  return HTable::from_function(1, unit(), {33, 1, 1}, 1.5, 31,
                               [](const Point& p, const Point&) { return 2.0 - std::exp(0.5 * p[0] * p[0]); });
}

HTable ramp_table() {
  return HTable::from_function(1, unit(), {33, 1, 1}, 1.5, 31, [](const Point& p, const Point& x) {
    return 2.0 + x[0] - std::exp(0.5 * p[0] * p[0]);
  });
}

HTable well_table() {
  return HTable::from_function(1, unit(), {33, 1, 1}, 1.5, 31, [](const Point& p, const Point& x) {
    return -p[0] * p[0] - 0.3 * std::cos(2 * kPi * x[0]);
  });
}

TableSpec small_spec(int nx = 5) {
  TableSpec s;
  s.x_counts = {nx, 1, 1};
  s.p_max = 1.5;
  s.p_count = 11;
  s.torus_n = 32;
  return s;
}

}  // namespace

TEST_CASE("x-independent model gives identical table slices") {
  const auto m = model_from(gaussian_1d("2 + 0.3*cos(2*pi*xi1)"));
  const auto t = tabulate_H(m, small_spec());
  for (std::int64_t ix = 1; ix < t.x_size(); ++ix)
    for (std::int64_t ip = 0; ip < t.p_size(); ++ip) CHECK(t.at(ix, ip) == doctest::Approx(t.at(0, ip)).epsilon(1e-9));
}

TEST_CASE("slow ramp: H(p, x) = 2 + x - exp(p^2/2)") {
  const auto m = model_from(gaussian_1d("2 + x1"));
  const auto t = tabulate_H(m, small_spec());
  for (std::int64_t ix = 0; ix < t.x_size(); ++ix)
    for (std::int64_t ip = 0; ip < t.p_size(); ++ip) {
      const double p = t.p_node(ip)[0], x = t.x_node(ix)[0];
      CHECK(std::abs(t.at(ix, ip) - (2 + x - std::exp(0.5 * p * p))) <= 1e-6);
    }
  CHECK(t.concavity_violation() <= 1e-8);
  CHECK(t.essential_count() == 0);
}

TEST_CASE("table interpolation error is within the second-difference bound") {
  const auto m = model_from(gaussian_1d("2 + 0.3*cos(2*pi*xi1)", "1 + 0.5*sin(2*pi*(xi1 - eta1))", 0.25));
  const auto spec = small_spec(3);
  const auto t = tabulate_H(m, spec);
  double d2 = 0.0;
  for (std::int64_t ip = 1; ip + 1 < t.p_size(); ++ip)
    d2 = std::max(d2, std::abs(t.at(1, ip + 1) - 2 * t.at(1, ip) + t.at(1, ip - 1)));
  const cell::CellProblem cp(m, cell::TorusGrid::make(1, spec.torus_n), t.x_node(1), spec.cell);
  for (double p : {-1.37, -0.41, 0.22, 1.05}) {
    const double err = std::abs(t.eval({p}, 1) - cell::hamiltonian(cp, {p}).H);
    CHECK(err <= d2 / 8 * 1.5 + 1e-8);
  }
}

TEST_CASE("tabulation: serial equals parallel") {
  const auto m = model_from(gaussian_1d("2 + x1 + 0.3*sin(2*pi*xi1)"));
  const auto a = tabulate_H(m, small_spec(), true);
  const auto b = tabulate_H(m, small_spec(), false);
  for (std::int64_t ix = 0; ix < a.x_size(); ++ix)
    for (std::int64_t ip = 0; ip < a.p_size(); ++ip) CHECK(a.at(ix, ip) == b.at(ix, ip));
}

TEST_CASE("x-independent Hamiltonian: Lambda = -max H") {
  const auto t = trivial_table();
  const auto s = additive_eigenvalue(t, Route::Discounted);
  CHECK(std::abs(s.Lambda + 1.0) <= 1e-3);
  CHECK(lambda_lower_bound(t) == doctest::Approx(-1.0).epsilon(1e-14));
  CHECK(s.Lambda >= s.lower_bound_check - 1e-6);
  const auto inf = additive_eigenvalue(t, Route::InfMax);
  CHECK(std::abs(inf.Lambda + 1.0) <= 1e-3);
}

TEST_CASE("slow ramp: constant-trajectory bound is nearly sharp") {
  const auto t = ramp_table();
  const double lb = lambda_lower_bound(t);
  CHECK(lb == doctest::Approx(-1.0).epsilon(1e-14));
  const auto s = additive_eigenvalue(t, Route::Discounted);
  CHECK(s.Lambda >= lb - 1e-6);
  CHECK(s.Lambda <= lb + 0.05);
  const auto inf = additive_eigenvalue(t, Route::InfMax);
  CHECK(std::abs(inf.Lambda - s.Lambda) <= 2e-3);
  CHECK(inf.Lambda >= s.Lambda - 1e-3);
}

TEST_CASE("potential well: the two routes agree") {
  const auto t = well_table();
  const auto s = additive_eigenvalue(t, Route::Discounted);
  const auto inf = additive_eigenvalue(t, Route::InfMax);
  CHECK(s.Lambda >= s.lower_bound_check - 1e-6);
  CHECK(std::abs(inf.Lambda - s.Lambda) <= 2e-3);
  CHECK(inf.Lambda >= s.Lambda - 1e-3);
  for (double r : s.cauchy_ratios) CHECK(r <= 1.0);
  CHECK(std::abs(s.W.mean()) <= 1e-12);
}

TEST_CASE("two-dimensional well") {
  const auto t = HTable::from_function(2, unit(2), {9, 9, 1}, 1.5, 11, [](const Point& p, const Point& x) {
    return -p[0] * p[0] - p[1] * p[1] - 0.2 * std::cos(2 * kPi * x[0]) * std::cos(2 * kPi * x[1]);
  });
  const auto s = additive_eigenvalue(t, Route::Discounted);
  CHECK(s.Lambda >= s.lower_bound_check - 1e-6);
  CHECK(std::abs(s.Lambda - 0.2) <= 2e-2);
}

TEST_CASE("Lagrangian at q = 0 and convexity in q") {
  const auto t = well_table();
  for (std::int64_t ix : {0, 7, 16, 32}) CHECK(lagrangian(t, {0.0}, ix) >= t.max_over_p(ix));
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const double q1 = u(rng), q2 = u(rng);
    const std::int64_t ix = i % 33;
    const double mid = lagrangian(t, {0.5 * (q1 + q2)}, ix);
    CHECK(mid <= 0.5 * (lagrangian(t, {q1}, ix) + lagrangian(t, {q2}, ix)) + 1e-9);
  }
  // For H = -p^2 - V the Legendre transform is q^2/4 - V.
  const double V = 0.3 * std::cos(2 * kPi * t.x_node(5)[0]);
  CHECK(lagrangian(t, {0.8}, 5) == doctest::Approx(0.16 - V).epsilon(1e-3));
}

TEST_CASE("the scheme is monotone") {
  for (const auto& t : {trivial_table(), well_table(), ramp_table()}) {
    const DiscountedScheme scheme(t);
    std::mt19937_64 rng(20240601);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_int_distribution<std::int64_t> node(0, t.x_size() - 1);
    for (int trial = 0; trial < 100; ++trial) {
      Vec v(t.x_size());
      for (auto& e : v) e = u(rng) * t.dx(0);
      const auto j = node(rng);
      Vec w = v;
      w[j] += 1e-3 * (1.0 + u(rng));
      const double tau = std::min(scheme.stable_step(0.125, v), scheme.stable_step(0.125, w));
      const Vec diff = scheme.update(w, 0.125, tau) - scheme.update(v, 0.125, tau);
      CHECK(diff.minCoeff() >= -1e-12);
    }
  }
}

TEST_CASE("Newton and value iteration reach the same discounted solution") {
  const auto t = well_table();
  const DiscountedScheme scheme(t);
  const double delta = 0.125;
  const Vec u0 = Vec::Zero(t.x_size());
  const Vec a = scheme.solve_newton(delta, u0, 1e-11, 2000);
  const Vec b = scheme.solve_value_iteration(delta, u0, 1e-11, 2000000);
  CHECK((a - b).cwiseAbs().maxCoeff() <= 1e-8);
  CHECK(scheme.residual(a, delta).cwiseAbs().maxCoeff() <= 1e-10);
}

TEST_CASE("regularized tabulation for an essential-bottom model") {
  const auto m = model_from(testing::lattice_1d(0.05, "0.01 + 0.5*sqrt(abs(sin(pi*xi1)))"));
  auto spec = small_spec(3);
  spec.torus_n = 64;
  const auto plain = tabulate_H(m, spec);
  CHECK(plain.essential_count() > 0);
  const auto reg = tabulate_H_regularized(m, spec, 0.05);
  CHECK(reg.regularized);
  // The floor lifts every entry by at most delta.
  for (std::int64_t ix = 0; ix < plain.x_size(); ++ix)
    for (std::int64_t ip = 0; ip < plain.p_size(); ++ip) {
      CHECK(reg.table.at(ix, ip) >= plain.at(ix, ip) - 1e-9);
      CHECK(reg.table.at(ix, ip) <= plain.at(ix, ip) + 0.05 + 1e-9);
    }
  const auto s = additive_eigenvalue(reg.table, Route::Discounted);
  const double plain_lb = lambda_lower_bound(plain);
  CHECK(std::abs(s.Lambda - plain_lb) <= 0.05 + 1e-6);
}

TEST_CASE("viscosity overflow is reported") {
  const auto t = HTable::from_function(1, unit(), {9, 1, 1}, 1.5, 11,
                                       [](const Point& p, const Point&) { return -1e12 * p[0] * p[0]; });
  CHECK_THROWS_AS(additive_eigenvalue(t, Route::Discounted), NumericalError);
}
