#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>

#include "spechomog/effective.hpp"

using namespace spechomog;
using namespace spechomog::effective;

namespace {

constexpr double kPi = std::numbers::pi;

DomainSpec box(int d, double l = 0.0, double u = 1.0) {
  DomainSpec b;
  b.d = d;
  for (int a = 0; a < d; ++a) {
    b.lower[a] = l;
    b.upper[a] = u;
  }
  return b;
}

Eigen::MatrixXd mat1(double v) { return Eigen::MatrixXd::Constant(1, 1, v); }

// Eigenvalues of c (-D2) with Dirichlet data on N interior nodes of (0, L).
double discrete_eig(double c, int N, double L, int k) {
  const double h = L / (N + 1);
  const double s = std::sin(k * kPi * h / 2);
  return 4 * c * s * s / (h * h);
}

}  // namespace

TEST_CASE("1-D stencil") {
  const auto op = assemble_effective(mat1(0.5), FDGrid::make(box(1), {3, 1, 1}));
  const DenseMatrix K = op.K.to_dense();
  const double c = 0.5 * 16.0;
  Eigen::Matrix3d expect;
  expect << 2 * c, -c, 0, -c, 2 * c, -c, 0, -c, 2 * c;
  CHECK((K - expect).cwiseAbs().maxCoeff() <= 1e-13);
}

TEST_CASE("2-D Laplacian and mixed stencil symmetry") {
  const auto op = assemble_effective(Eigen::MatrixXd::Identity(2, 2), FDGrid::make(box(2), {4, 4, 1}));
  const DenseMatrix K = op.K.to_dense();
  const double c = 25.0;
  for (int i = 0; i < K.rows(); ++i) {
    CHECK(K(i, i) == doctest::Approx(4 * c));
    int neighbours = 0;
    for (int j = 0; j < K.cols(); ++j)
      if (j != i && K(i, j) != 0.0) {
        CHECK(K(i, j) == doctest::Approx(-c));
        ++neighbours;
      }
    CHECK(neighbours <= 4);
  }
  Eigen::MatrixXd A(2, 2);
  A << 1.0, 0.3, 0.3, 0.8;
  const DenseMatrix K2 = assemble_effective(A, FDGrid::make(box(2), {7, 5, 1})).K.to_dense();
  CHECK((K2 - K2.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * K2.cwiseAbs().maxCoeff());
}

TEST_CASE("non-SPD A is rejected") {
  Eigen::MatrixXd A(2, 2);
  A << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(assemble_effective(A, FDGrid::make(box(2), {5, 5, 1})), ValidationError);
  CHECK_THROWS_AS(assemble_effective(mat1(-1.0), FDGrid::make(box(1), {5, 1, 1})), ValidationError);
}

TEST_CASE("grid constraints") {
  CHECK_THROWS_AS(FDGrid::make(box(1), {2, 1, 1}), ValidationError);
  CHECK_THROWS_AS(FDGrid::make(box(2), {3, 63, 1}), ValidationError);
}

TEST_CASE("1-D Dirichlet spectrum") {
  const auto op = assemble_effective(mat1(0.5), FDGrid::make(box(1), {511, 1, 1}));
  const auto s = dirichlet_spectrum(op, 4);
  CHECK(s.values[0] == doctest::Approx(kPi * kPi / 2).epsilon(1e-4));
  for (int k = 1; k <= 4; ++k) {
    CHECK(s.values[k - 1] == doctest::Approx(discrete_eig(0.5, 511, 1.0, k)).epsilon(1e-9));
    CHECK(s.residuals[k - 1] <= 1e-10);
  }
}

TEST_CASE("2-D separable spectrum") {
  const auto op = assemble_effective(Eigen::MatrixXd::Identity(2, 2), FDGrid::make(box(2), {127, 127, 1}));
  const auto s = dirichlet_spectrum(op, 3);
  CHECK(s.values[0] == doctest::Approx(2 * kPi * kPi).epsilon(1e-3));
  CHECK(s.values[1] == doctest::Approx(5 * kPi * kPi).epsilon(1e-3));
  CHECK(s.values[2] == doctest::Approx(5 * kPi * kPi).epsilon(1e-3));
}

TEST_CASE("subspace iteration agrees with the dense reference") {
  Eigen::MatrixXd A(2, 2);
  A << 0.7, 0.2, 0.2, 0.5;
  const auto op = assemble_effective(A, FDGrid::make(box(2), {31, 31, 1}));
  const auto s = dirichlet_spectrum(op, 6);
  const auto d = dirichlet_spectrum_dense(op, 6);
  for (int k = 0; k < 6; ++k) CHECK(s.values[k] == doctest::Approx(d[k]).epsilon(1e-9));
  for (int k = 1; k < 6; ++k) CHECK(s.values[k] >= s.values[k - 1]);
  CHECK(s.values[0] > 0.0);
}

TEST_CASE("second-order refinement") {
  const double exact = kPi * kPi / 2;
  std::vector<double> err;
  for (int N : {31, 63, 127}) {
    const auto op = assemble_effective(mat1(0.5), FDGrid::make(box(1), {N, 1, 1}));
    err.push_back(std::abs(dirichlet_spectrum(op, 1).values[0] - exact));
  }
  for (std::size_t i = 1; i < err.size(); ++i) CHECK(std::log2(err[i - 1] / err[i]) >= 1.9);
}

TEST_CASE("Dirichlet monotonicity under shrinking the box") {
  const auto big = assemble_effective(mat1(1.0), FDGrid::make(box(1, 0.0, 1.0), {127, 1, 1}));
  const auto small = assemble_effective(mat1(1.0), FDGrid::make(box(1, 0.2, 0.8), {127, 1, 1}));
  CHECK(dirichlet_spectrum(small, 1).values[0] >= dirichlet_spectrum(big, 1).values[0]);
}

TEST_CASE("resolvent") {
  const auto g = FDGrid::make(box(1), {255, 1, 1});
  const auto op = assemble_effective(mat1(1.0), g);
  Vec f = Vec::Zero(g.size());
  CHECK(resolvent_effective(op, f).v.cwiseAbs().maxCoeff() == 0.0);

  Vec exact(g.size());
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const double x = g.node(i)[0];
    f[i] = (1 + kPi * kPi) * std::sin(kPi * x);
    exact[i] = std::sin(kPi * x);
  }
  const auto r = resolvent_effective(op, f);
  CHECK(r.relative_residual <= 1e-10);
  const double h = g.h[0];
  CHECK((r.v - exact).cwiseAbs().maxCoeff() <= 2.0 * h * h);
  CHECK(r.v.cwiseAbs().maxCoeff() <= f.cwiseAbs().maxCoeff());
}

TEST_CASE("resolvent preserves symmetry about the centre") {
  const auto g = FDGrid::make(box(2), {21, 17, 1});
  Eigen::MatrixXd A(2, 2);
  A << 0.8, 0.0, 0.0, 0.3;
  const auto op = assemble_effective(A, g);
  Vec f(g.size());
  for (std::int64_t i = 0; i < g.size(); ++i) {
    const Point x = g.node(i);
    f[i] = std::cos(3 * (x[0] - 0.5)) + (x[1] - 0.5) * (x[1] - 0.5);
  }
  const Vec v = resolvent_effective(op, f, 1e-14).v;
  for (std::int64_t i = 0; i < g.size(); ++i) {
    auto dg = g.digits(i);
    dg[0] = g.N[0] - 1 - dg[0];
    dg[1] = g.N[1] - 1 - dg[1];
    CHECK(std::abs(v[i] - v[g.index(dg)]) <= 1e-12);
  }
}

TEST_CASE("interpolation is exact on nodes and zero on the boundary") {
  const auto g = FDGrid::make(box(1), {9, 1, 1});
  Vec v(g.size());
  for (std::int64_t i = 0; i < g.size(); ++i) v[i] = 1.0 + i;
  for (std::int64_t i = 0; i < g.size(); ++i) CHECK(interpolate(g, v, g.node(i)) == doctest::Approx(v[i]));
  CHECK(interpolate(g, v, {0.0}) == 0.0);
  CHECK(interpolate(g, v, {0.05}) == doctest::Approx(0.5));
}
