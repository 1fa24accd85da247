#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "spechomog/expr.hpp"

using spechomog::expr::DomainError;
using spechomog::expr::Expression;
using spechomog::expr::ParseError;
using spechomog::expr::UnboundVariable;
using spechomog::expr::UnknownIdentifier;

namespace {
const std::map<std::string, double> kNone;
}

TEST_CASE("free variables of simple expressions") {
  CHECK(Expression::parse("1 + 0.5*sin(2*pi*xi1)").free_vars() == std::set<std::string>{"xi1"});
  CHECK(Expression::parse("exp(-(x1-y1)^2)").free_vars() == std::set<std::string>{"x1", "y1"});
  CHECK(Expression::parse("3.0").free_vars().empty());
  CHECK(Expression::parse("xi1*eta1").free_vars() == std::set<std::string>{"eta1", "xi1"});
}

TEST_CASE("syntax errors carry the byte offset") {
  try {
    Expression::parse("2*)");
    FAIL("no error");
  } catch (const ParseError& e) {
    CHECK(e.offset() == 2);
  }
  CHECK_THROWS_AS(Expression::parse(""), ParseError);
  CHECK_THROWS_AS(Expression::parse("sin(x1"), ParseError);
  CHECK_THROWS_AS(Expression::parse("2 x1"), ParseError);
}

TEST_CASE("unknown identifiers are named") {
  try {
    Expression::parse("a");
    FAIL("no error");
  } catch (const UnknownIdentifier& e) {
    CHECK(e.name() == "a");
  }
  CHECK_THROWS_AS(Expression::parse("tan(x1)"), UnknownIdentifier);
  CHECK_THROWS_AS(Expression::parse("x4"), UnknownIdentifier);
}

TEST_CASE("evaluation") {
  CHECK(Expression::parse("1 + 0.5*sin(2*pi*xi1)").evaluate({{"xi1", 0.25}}) == doctest::Approx(1.5).epsilon(1e-15));
  CHECK(Expression::parse("pi^2").evaluate(kNone) == doctest::Approx(std::numbers::pi * std::numbers::pi));
  CHECK(Expression::parse("2^3^2").evaluate(kNone) == 512.0);
  CHECK(Expression::parse("-2^2").evaluate(kNone) == -4.0);
  CHECK(Expression::parse("min(x1, 3) + max(x1, 3) + abs(-x1)").evaluate({{"x1", 1.0}}) == 5.0);
  CHECK(Expression::parse("sqrt(4) * log(exp(2)) / 2 - cos(0)").evaluate(kNone) == doctest::Approx(1.0));
}

TEST_CASE("domain errors name the subexpression") {
  CHECK_THROWS_AS(Expression::parse("log(x1)").evaluate({{"x1", -1.0}}), DomainError);
  CHECK_THROWS_AS(Expression::parse("sqrt(x1)").evaluate({{"x1", -1.0}}), DomainError);
  CHECK_THROWS_AS(Expression::parse("1/x1").evaluate({{"x1", 0.0}}), DomainError);
  CHECK_THROWS_AS(Expression::parse("x1^0.5").evaluate({{"x1", -2.0}}), DomainError);
  CHECK(Expression::parse("x1^2").evaluate({{"x1", -2.0}}) == 4.0);
  try {
    Expression::parse("1 + log(x1 - 2)").evaluate({{"x1", 1.0}});
  } catch (const DomainError& e) {
    CHECK(e.subexpression().find("log") != std::string::npos);
  }
}

TEST_CASE("missing bindings are an error") {
  CHECK_THROWS_AS(Expression::parse("x1 + xi1").evaluate({{"x1", 1.0}}), UnboundVariable);
}

TEST_CASE("print round trip on random bindings") {
  const char* sources[] = {
      "1 + 0.5*sin(2*pi*xi1)", "exp(-(x1-y1)^2)*(2 - cos(2*pi*eta1))", "-x1^2 + abs(xi1 - 0.5)/3",
      "max(x1, min(y1, xi1)) - 2^-xi1", "sqrt(1 + x1*x1) * exp(-2*eta1) - -3",
  };
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  for (const char* s : sources) {
    const auto e = Expression::parse(s);
    const auto r = Expression::parse(e.print());
    for (int t = 0; t < 100; ++t) {
      std::map<std::string, double> b{{"x1", u(rng)}, {"y1", u(rng)}, {"xi1", u(rng)}, {"eta1", u(rng)}};
      CHECK(e.evaluate(b) == r.evaluate(b));
    }
  }
}

TEST_CASE("evaluation is pure and slot evaluation agrees") {
  const auto e = Expression::parse("sin(x1)*exp(xi1) + eta1");
  std::map<std::string, double> b{{"x1", 0.3}, {"xi1", 0.7}, {"eta1", -0.1}};
  const double v = e.evaluate(b);
  for (int i = 0; i < 10; ++i) CHECK(e.evaluate(b) == v);
  using spechomog::expr::Family;
  using spechomog::expr::slot_of;
  spechomog::expr::Slots s{};
  s[slot_of(Family::X, 1)] = 0.3;
  s[slot_of(Family::Xi, 1)] = 0.7;
  s[slot_of(Family::Eta, 1)] = -0.1;
  CHECK(e.evaluate(s) == v);
}

TEST_CASE("kernel offset family is opt-in") {
  CHECK_THROWS_AS(Expression::parse("z1"), UnknownIdentifier);
  CHECK(Expression::parse("exp(-z1^2)", spechomog::expr::ParseOptions::kernel_offsets()).evaluate({{"z1", 0.0}}) == 1.0);
}
