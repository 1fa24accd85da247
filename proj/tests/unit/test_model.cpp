#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "helpers.hpp"
#include "spechomog/model.hpp"

using namespace spechomog;

namespace {

ModelSpec spec_1d(KernelSpec k, const std::string& kappa, const std::string& a) {
  ModelSpec s;
  s.kernel = std::move(k);
  s.coefficients.kappa = expr::Expression::parse(kappa);
  s.coefficients.a = expr::Expression::parse(a);
  return s;
}

const double kInvSqrt2Pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);

}  // namespace

TEST_CASE("gaussian decay constants") {
  // max over z of exp(z^1.5 - z^2/2) sits at z = 2.25
  double best = 0.0;
  for (int i = 0; i <= 100000; ++i) {
    const double z = 1e-4 * i;
    best = std::max(best, std::exp(std::pow(z, 1.5) - 0.5 * z * z));
  }
  CHECK(best == doctest::Approx(2.325).epsilon(1e-3));
  CHECK(validate_model(spec_1d(KernelSpec::gaussian(1.0, 2.325, 0.5), "1", "2")).ok());
  const auto bad = validate_model(spec_1d(KernelSpec::gaussian(1.0, 1.0, 1.0), "1", "2"));
  CHECK_FALSE(bad.ok());
  CHECK_THROWS_AS(Model::validated(spec_1d(KernelSpec::gaussian(1.0, 1.0, 1.0), "1", "2")), ValidationError);
}

TEST_CASE("nonpositive kappa fails validation") {
  CHECK_FALSE(validate_model(spec_1d(KernelSpec::gaussian(1.0, 2.325, 0.5), "-1", "2")).ok());
  CHECK_FALSE(validate_model(spec_1d(KernelSpec::gaussian(1.0, 2.325, 0.5), "sin(2*pi*xi1)", "2")).ok());
}

TEST_CASE("expression dimension must match the model") {
  CHECK_FALSE(validate_model(spec_1d(KernelSpec::gaussian(1.0, 2.325, 0.5), "1", "2 + xi2")).ok());
}

TEST_CASE("tilted kernel values") {
  const auto m = Model::validated(spec_1d(KernelSpec::gaussian(1.0, 2.325, 0.5), "1", "2"));
  CHECK(tilted_kernel_value(m, {0}, {0.5}, {0}, {0}) == doctest::Approx(kInvSqrt2Pi).epsilon(1e-14));
  CHECK(tilted_kernel_value(m, {1}, {0.5}, {0}, {1}) == doctest::Approx(kInvSqrt2Pi * std::exp(0.5)).epsilon(1e-14));

  const auto m2 =
      Model::validated(spec_1d(KernelSpec::gaussian(1.0, 2.325, 0.5), "1 + 0.5*sin(2*pi*eta1)", "2"));
  const double J = kInvSqrt2Pi * std::exp(-0.03125);
  CHECK(tilted_kernel_value(m2, {0}, {0.5}, {0.25}, {0.25}) == doctest::Approx(J).epsilon(1e-14));
}

TEST_CASE("tilted kernel is nonnegative and periodic in the fast variable") {
  const auto m = Model::validated(
      spec_1d(KernelSpec::gaussian(0.5, 10.0, 0.5), "1 + 0.5*sin(2*pi*(xi1 - eta1)) + 0.2*x1", "2 + x1"));
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0.0, 1.0), w(-2.0, 2.0);
  for (int i = 0; i < 10000; ++i) {
    const Point p{w(rng)}, x{u(rng)}, xi{w(rng)}, z{w(rng)};
    const double v = tilted_kernel_value(m, p, x, xi, z);
    REQUIRE(v >= 0.0);
    if (i % 10 == 0) {
      const Point xi1{xi[0] + 1.0};
      CHECK(tilted_kernel_value(m, p, x, xi1, z) == doctest::Approx(v).epsilon(1e-13));
    }
  }
}

TEST_CASE("truncation radius") {
  KernelSpec k = KernelSpec::gaussian(1.0, 1.0, 1.0);
  // root of (1 + R) exp(-R^2) = 1e-10
  double lo = 0.0, hi = 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    ((1 + mid) * std::exp(-mid * mid) > 1e-10 ? lo : hi) = mid;
  }
  const double R = truncation_radius(k, 1, 0.0, 1.0, 1e-10);
  CHECK(R == doctest::Approx(1.5 * lo).epsilon(1e-9));
  CHECK(lo == doctest::Approx(5.05).epsilon(0.02));
  CHECK(truncation_radius(k, 1, 0.0, 1.0, 1e-10) >= truncation_radius(k, 1, 0.0, 1.0, 1e-6));
  CHECK(truncation_radius(k, 1, 2.0, 1.0, 1e-10) >= truncation_radius(k, 1, 1.0, 1.0, 1e-10));
  KernelSpec k2 = KernelSpec::gaussian(1.0, 1.0, 0.1);
  CHECK_THROWS_AS(truncation_radius(k2, 1, 100.0, 1.0, 1e-10), NumericalError);
}

TEST_CASE("lattice-normalized gaussian sums to mu over the lattice") {
  const auto k = KernelSpec::lattice_gaussian(0.7, 1.0, 0.5);
  for (double zeta : {0.0, 0.13, 0.5, 0.91}) {
    double s = 0.0;
    for (int l = -6; l <= 6; ++l) s += k.value({zeta + l}, 1);
    CHECK(std::abs(s - 0.7) <= 1e-12);
  }
  double s2 = 0.0;
  for (int l1 = -6; l1 <= 6; ++l1)
    for (int l2 = -6; l2 <= 6; ++l2) s2 += k.value({0.3 + l1, 0.8 + l2}, 2);
  CHECK(std::abs(s2 - 0.7) <= 1e-12);
}

TEST_CASE("lattice kernel in d < 3 is flagged, not rejected") {
  const auto m = testing::model_from(testing::lattice_1d(1.0, "1 + 0.5*sin(2*pi*xi1)"));
  bool noted = false;
  for (const auto& n : m.report().notes) noted |= n.find("d >= 3") != std::string::npos;
  CHECK(noted);
}

TEST_CASE("regularization of a") {
  // a independent of xi: ahat = a, so a^(delta) = max{a, min a + delta/2} + delta/2.
  const auto m = testing::model_from(testing::gaussian_1d("2 + x1"));
  const double delta = 0.2;
  const auto reg = m.with_coefficients(regularize_a(m, delta, {}, 16));
  for (double x : {0.0, 0.05, 0.1, 0.15, 0.3, 0.9}) {
    const double expect = std::max(2 + x, 2 + 0.5 * delta) + 0.5 * delta;
    CHECK(reg.a({x}, {0.3}) == doctest::Approx(expect).epsilon(1e-14));
  }

  // Floor where a vanishes: a(0.5, 0.5) = 0 on the sample grid.
  const auto m2 = testing::model_from(testing::gaussian_1d("abs(x1 - 0.5) + abs(xi1 - 0.5)"));
  const auto reg2 = m2.with_coefficients(regularize_a(m2, 0.1, {}, 16));
  CHECK(reg2.a({0.5}, {0.5}) == doctest::Approx(0.1).epsilon(1e-14));

  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (int i = 0; i < 10000; ++i) {
    const Point x{u(rng)}, xi{u(rng)};
    worst = std::max(worst, std::abs(reg2.a(x, xi) - m2.a(x, xi)));
  }
  CHECK(worst <= 0.1 + 1e-12);
}

TEST_CASE("halton points are deterministic and in the unit cube") {
  const auto a = halton_point(5, 3), b = halton_point(5, 3);
  CHECK(a == b);
  for (double v : a) CHECK((v >= 0.0 && v < 1.0));
  CHECK(halton_point(6, 3) != a);
}
