#include "doctest.h"
#include "oracles.hpp"
#include "renorm/mollifier.hpp"

#include <cmath>
#include <numbers>

using namespace renorm;

namespace {

Mollifier lambda_kernel(std::function<double(const Point&)> rho, std::function<Vector(const Point&)> grad,
                        int dim) {
  Mollifier m;
  m.name = "lambda";
  m.dim = dim;
  m.rho = std::move(rho);
  m.grad_rho = std::move(grad);
  return m;
}

Mollifier sine_kernel() {
  // 1 + 0.5 sin(y1) has gamma-mass exactly 1 and sup 1.5
  Mollifier m = expression_kernel("1 + 0.5*sin(x1)", 2, KernelMode::gaussian, false);
  m.sup_rho = 1.5;
  return m;
}

Mollifier hermite_kernel() {
  Vector lin(2), quad(2);
  lin << 0.4, -0.3;
  quad << 0.2, 0.1;
  return hermite_square_kernel(1.0, lin, quad);
}

}  // namespace

TEST_CASE("validate_kernel examples") {
  const GaussianSpace sp(2, 20, 20000);
  CHECK(validate_kernel(unit_kernel(2), sp).pass);
  CHECK(validate_kernel(hermite_kernel(), sp).pass);
  CHECK(validate_kernel(sine_kernel(), sp).pass);

  auto unnormalized = lambda_kernel([](const Point& y) { return std::max(0.0, 1.0 - y.squaredNorm()); },
                                    [](const Point& y) {
                                      return (y.squaredNorm() < 1 ? (-2.0 * y).eval() : Vector::Zero(2).eval());
                                    },
                                    2);
  auto r = validate_kernel(unnormalized, sp);
  CHECK_FALSE(r.pass);
  CHECK(r.nonnegative);
  CHECK_FALSE(r.unit_mass);

  const double c = 0.5;
  auto signed_kernel = lambda_kernel([c](const Point& y) { return 1.0 - y[1] * y[1] / c; },
                                     [c](const Point& y) {
                                       Vector g = Vector::Zero(2);
                                       g[1] = -2.0 * y[1] / c;
                                       return g;
                                     },
                                     2);
  r = validate_kernel(signed_kernel, sp);
  CHECK_FALSE(r.pass);
  CHECK_FALSE(r.nonnegative);
  CHECK_THROWS_AS(require_valid_kernel(signed_kernel, sp), std::invalid_argument);
}

TEST_CASE("gradient mismatch is caught") {
  auto k = hermite_kernel();
  k.grad_rho = [](const Point& y) { return (0.1 * y).eval(); };
  const auto r = validate_kernel(k, GaussianSpace(2));
  CHECK_FALSE(r.gradient_ok);
  CHECK_FALSE(r.pass);
}

TEST_CASE("lebesgue bump") {
  for (int d : {1, 2, 3}) {
    const auto m = lebesgue_bump(d);
    const auto r = validate_kernel(m, GaussianSpace(d));
    CHECK_MESSAGE(r.pass, r.failure);
  }
  // independent normalization in 1D: adaptive Simpson of the raw profile
  const double z = oracle::integrate([](double y) { return std::abs(y) < 1 ? std::exp(-1 / (1 - y * y)) : 0.0; },
                                     -1.0, 1.0, 1e-14);
  const auto m = lebesgue_bump(1);
  CHECK(m.rho(Point::Zero(1)) == doctest::Approx(std::exp(-1.0) / z).epsilon(1e-10));
}

TEST_CASE("OU parameters") {
  for (double eps : {1.0, 0.2, 1e-3}) {
    const OUParams p(eps);
    CHECK(p.a * p.a + p.s * p.s == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(p.C == doctest::Approx(std::exp(eps) * std::sqrt(1 - std::exp(-2 * eps))).epsilon(1e-13));
  }
  CHECK_THROWS_AS(OUParams(0.0), std::invalid_argument);
  // C_eps / sqrt(2 eps) -> 1
  double prev = 1e9;
  for (double eps = 0.2; eps > 1e-6; eps *= 0.5) {
    const double dev = std::abs(OUParams(eps).C / std::sqrt(2 * eps) - 1.0);
    CHECK(dev < prev);
    prev = dev;
  }
  CHECK(prev < 1e-5);
}

TEST_CASE("s-average closed forms") {
  for (double eps : {0.4, 0.2, 0.05, 0.0125}) {
    const OUParams p(eps);
    CHECK(s_average(eps, [](double s) { return std::exp(-s); }) == doctest::Approx(p.a).epsilon(1e-12));
    CHECK(s_average(eps, [](double) { return 1.0; }) == doctest::Approx(std::acos(p.a) / p.C).epsilon(1e-12));
    CHECK(s_average(eps, [](double s) { return std::exp(-2 * s); }) ==
          doctest::Approx((std::acos(p.a) + p.a * p.s) / (2 * p.C)).epsilon(1e-12));
    CHECK(s_average(eps, [](double s) { return std::exp(-s) * std::sqrt(-std::expm1(-2 * s)); }) ==
          doctest::Approx(p.a * p.s / 2).epsilon(1e-12));
  }
  const auto g = geometric_grid(0.2, 0.025);
  REQUIRE(g.size() == 4);
  CHECK(g[3] == doctest::Approx(0.025));
}

TEST_CASE("apply_teps examples") {
  const GaussianSpace sp(2, 16);
  const auto one = unit_kernel(2);
  Point x(2);
  x << 1.3, -0.4;
  for (double eps : {0.5, 0.1}) {
    const OUParams p(eps);
    CHECK(apply_teps(one, p, [](double, const Point& z) { return z[0]; }, 0.0, x, sp) ==
          doctest::Approx(p.a * 1.3).epsilon(1e-13));
    CHECK(apply_teps(one, p, [](double, const Point&) { return 2.5; }, 0.0, x, sp) ==
          doctest::Approx(2.5).epsilon(1e-14));
  }
  // Mehler action on x1^2 at eps = 0.5, x = (1, 0): 1D oracle
  const OUParams p(0.5);
  Point e1 = Point::Zero(2);
  e1[0] = 1.0;
  const double ref = oracle::normal_expect([&](double z) { return std::pow(p.a + p.s * z, 2); });
  const double v = apply_teps(one, p, [](double, const Point& z) { return z[0] * z[0]; }, 0.0, e1, sp);
  CHECK(v == doctest::Approx(ref).epsilon(1e-12));
  CHECK(v == doctest::Approx(std::exp(-1.0) + (1 - std::exp(-1.0))).epsilon(1e-12));
}

TEST_CASE("adjoint examples") {
  const GaussianSpace sp(2, 16);
  const auto one = unit_kernel(2);
  const OUParams p(0.3);
  for (const auto& tf : test_function_battery(2)) {
    for (const auto& x : sample_gaussian(sp, 5, 8)) {
      const TimeFn f = [&](double, const Point& z) { return tf.value(z); };
      CHECK_MESSAGE(apply_teps(one, p, f, 0.0, x, sp) ==
                        doctest::Approx(apply_teps_adjoint(one, p, f, 0.0, x, sp)).epsilon(1e-12),
                    tf.name);
    }
  }
  // f = 1: int rho(y^eps) dgamma -> 1
  const auto k = hermite_kernel();
  Point x(2);
  x << 0.8, -1.1;
  double prev = 1e9;
  for (double eps : {0.2, 0.05, 0.0125, 0.003, 8e-4, 2e-4}) {
    const double v = apply_teps_adjoint(k, OUParams(eps), [](double, const Point&) { return 1.0; }, 0.0, x, sp);
    const double dev = std::abs(v - 1.0);
    CHECK(dev < prev);
    prev = dev;
  }
  CHECK(prev < 0.05);
}

TEST_CASE("duality pairing identity") {
  const GaussianSpace sp(2, 28);
  const auto k = hermite_kernel();
  const auto bat = test_function_battery(2);
  for (double eps : {0.2, 0.05}) {
    const OUParams p(eps);
    for (std::size_t i = 0; i < bat.size(); ++i) {
      const auto& phi = bat[i];
      const auto& u = bat[(i + 3) % bat.size()];
      const TimeFn fphi = [&](double, const Point& z) { return phi.value(z); };
      const TimeFn fu = [&](double, const Point& z) { return u.value(z); };
      const double lhs =
          expect(sp, [&](const Point& x) { return apply_teps(k, p, fphi, 0.0, x, sp) * u.value(x); }).value;
      const double rhs =
          expect(sp, [&](const Point& x) { return phi.value(x) * apply_teps_adjoint(k, p, fu, 0.0, x, sp); }).value;
      CHECK_MESSAGE(std::abs(lhs - rhs) < 1e-6, phi.name << " / " << u.name);
    }
  }
}

TEST_CASE("contraction") {
  const GaussianSpace sp(2, 14);
  const auto one = unit_kernel(2);
  const auto sk = sine_kernel();
  const OUParams p(0.1);
  for (const auto& tf : test_function_battery(2)) {
    const TimeFn f = [&](double, const Point& z) { return tf.value(z); };
    const double l1 = expect(sp, [&](const Point& x) { return std::abs(tf.value(x)); }).value;
    const double t1 = expect(sp, [&](const Point& x) { return std::abs(apply_teps(sk, p, f, 0, x, sp)); }).value;
    CHECK(t1 <= sk.sup_rho * l1 + 1e-9);
    for (double q : {1.0, 2.0, 4.0}) {
      const double nf = expect(sp, [&](const Point& x) { return std::pow(std::abs(tf.value(x)), q); }).value;
      const double nt =
          expect(sp, [&](const Point& x) { return std::pow(std::abs(apply_teps(one, p, f, 0, x, sp)), q); }).value;
      CHECK_MESSAGE(nt <= nf + 1e-9, tf.name << " p=" << q);
    }
  }
}

TEST_CASE("strong convergence along the geometric grid") {
  const GaussianSpace sp(2, 14);
  const auto k = hermite_kernel();
  const double mass = kernel_mass(k, sp).value;
  for (const auto& tf : test_function_battery(2)) {
    if (tf.name == "const") continue;
    const TimeFn f = [&](double, const Point& z) { return tf.value(z); };
    double prev = 1e9;
    for (double eps : geometric_grid(0.2, 0.025)) {
      const OUParams p(eps);
      const double err = std::sqrt(expect(sp, [&](const Point& x) {
                                     const double d = apply_teps(k, p, f, 0, x, sp) - tf.value(x) * mass;
                                     return d * d;
                                   }).value);
      CHECK_MESSAGE(err < prev, tf.name << " eps=" << eps);
      prev = err;
    }
  }
}

TEST_CASE("lebesgue convolution") {
  const auto m = lebesgue_bump(1);
  Point x = Point::Constant(1, 0.7);
  CHECK(apply_conv(m, 0.1, [](double, const Point& z) { return 3 * z[0] - 1; }, 0, x) ==
        doctest::Approx(3 * 0.7 - 1).epsilon(1e-12));
  CHECK(apply_conv(m, 0.1, [](double, const Point&) { return 4.0; }, 0, x) == doctest::Approx(4.0).epsilon(1e-10));
  // second moment of the bump, by adaptive Simpson on the raw profile
  const auto prof = [](double y) { return std::abs(y) < 1 ? std::exp(-1 / (1 - y * y)) : 0.0; };
  const double z = oracle::integrate(prof, -1, 1, 1e-14);
  const double m2 = oracle::integrate([&](double y) { return y * y * prof(y); }, -1, 1, 1e-14) / z;
  CHECK(apply_conv(m, 0.1, [](double, const Point& p) { return p[0] * p[0]; }, 0, x) ==
        doctest::Approx(0.49 + 0.01 * m2).epsilon(1e-10));
  CHECK_THROWS_AS(apply_conv(unit_kernel(1), 0.1, [](double, const Point&) { return 1.0; }, 0, x),
                  std::invalid_argument);
}
