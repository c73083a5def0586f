#include <doctest.h>

#include <cmath>

#include "loralab/grad.hpp"

using namespace loralab;

namespace {

struct HalfSquaredNorm : DiffObjective {
  Index n;
  explicit HalfSquaredNorm(Index n_) : n(n_) {}
  Index param_count() const override { return n; }
  double eval(const Vector& p) const override { return 0.5 * p.squaredNorm(); }
  GradRecord eval_with_grad(const Vector& p) const override { return {eval(p), p}; }
};

struct Rosenbrock : DiffObjective {
  Index param_count() const override { return 2; }
  double eval(const Vector& p) const override {
    double a = 1.0 - p[0];
    double b = p[1] - p[0] * p[0];
    return a * a + 100.0 * b * b;
  }
  GradRecord eval_with_grad(const Vector& p) const override {
    Vector g(2);
    double b = p[1] - p[0] * p[0];
    g[0] = -2.0 * (1.0 - p[0]) - 400.0 * p[0] * b;
    g[1] = 200.0 * b;
    return {eval(p), g};
  }
};

struct BadGradient : DiffObjective {
  Index param_count() const override { return 1; }
  double eval(const Vector& p) const override { return p[0]; }
  GradRecord eval_with_grad(const Vector& p) const override {
    Vector g(1);
    g[0] = std::nan("");
    return {p[0], g};
  }
};

}  // namespace

TEST_CASE("value and gradient of the half squared norm") {
  HalfSquaredNorm obj(2);
  Vector p(2);
  p << 1, 2;
  GradRecord rec = value_and_grad(obj, p);
  CHECK(rec.value == 2.5);
  CHECK(rec.gradient[0] == 1.0);
  CHECK(rec.gradient[1] == 2.0);
}

TEST_CASE("central differences agree with an analytic gradient") {
  Rosenbrock obj;
  Vector p(2);
  p << -0.3, 0.7;
  GradRecord rec = value_and_grad(obj, p);
  Vector fd = finite_difference_gradient(obj, p);
  CHECK(max_relative_gradient_error(rec.gradient, fd) < 1e-5);
}

TEST_CASE("value equals plain evaluation bitwise") {
  Rosenbrock obj;
  Vector p(2);
  p << 0.123456789, -1.98765;
  CHECK(value_and_grad(obj, p).value == obj.eval(p));
}

TEST_CASE("non-finite gradients are rejected") {
  BadGradient obj;
  Vector p(1);
  p << 1.0;
  CHECK_THROWS_AS(value_and_grad(obj, p), NumericalError);
}

TEST_CASE("size mismatches violate the contract") {
  HalfSquaredNorm obj(3);
  CHECK_THROWS_AS(value_and_grad(obj, Vector::Zero(2)), ContractViolation);
}

TEST_CASE("relative error gate ignores tiny components") {
  Vector a(2), b(2);
  a << 1e-12, 1.0;
  b << -1e-12, 1.0 + 1e-7;
  CHECK(max_relative_gradient_error(a, b) == doctest::Approx(1e-7).epsilon(1e-2));
}
