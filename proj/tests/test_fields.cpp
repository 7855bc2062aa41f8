#include "doctest.h"
#include "oracles.hpp"
#include "renorm/fields.hpp"

#include <cmath>
#include <numbers>

using namespace renorm;

namespace {

Vector vec2(double a, double b) {
  Vector v(2);
  v << a, b;
  return v;
}

BVField sign_x2_field() {
  return BVField::two_sided(vec2(0, 1), 0.0, SmoothField::constant(vec2(-1, 0)),
                            SmoothField::constant(vec2(1, 0)), "sign-x2");
}

// Piecewise field with non-constant pieces across {x2 = 0.3}.
BVField wavy_field() {
  auto below = SmoothField::from_expressions({"x1", "sin(x1)"});
  auto above = SmoothField::from_expressions({"1 + x2", "cos(x1) - 0.5*x2"});
  return BVField::two_sided(vec2(0, 1), 0.3, below, above, "wavy");
}

}  // namespace

TEST_CASE("eval_field examples") {
  Vector h(3);
  h << 1, -2, 0.5;
  CHECK(eval_field(SmoothField::constant(h), Point::Random(3)) == h);

  const auto fv = eval_field(sign_x2_field(), vec2(0, 1));
  CHECK(fv.value == vec2(1, 0));
  CHECK_FALSE(fv.on_interface);

  Matrix m(2, 2);
  m << 0, 1, -1, 0;
  CHECK(eval_field(SmoothField::linear(m), vec2(1, 0)) == vec2(0, -1));
}

TEST_CASE("interface hit takes the upper piece and flags it") {
  const auto fv = eval_field(sign_x2_field(), vec2(0.4, 0.0));
  CHECK(fv.on_interface);
  CHECK(fv.value == vec2(1, 0));
}

TEST_CASE("gaussian divergence examples") {
  const Point x = vec2(0.7, -1.3);
  const Vector h = vec2(2.0, 0.5);
  CHECK(gauss_divergence(SmoothField::constant(h), x) == doctest::Approx(-h.dot(x)));
  Matrix e11 = Matrix::Zero(2, 2);
  e11(0, 0) = 1;
  CHECK(gauss_divergence(SmoothField::linear(e11), x) == doctest::Approx(1 - 0.49));
  CHECK(gauss_divergence(SmoothField::zero(2), x) == 0.0);
  // sign field: div = -sign(x2) x1 off the interface
  CHECK(gauss_divergence(sign_x2_field(), x) == doctest::Approx(0.7));
}

TEST_CASE("jacobians match finite differences") {
  const GaussianSpace sp(3);
  Matrix m = Matrix::Random(3, 3);
  CHECK(jacobian_fd_error(SmoothField::linear(m), sp) < 1e-6);
  const auto f = SmoothField::from_expressions({"sin(x1*x2) + x3", "exp(-x1^2/2)*x2", "atan(x3 - x1)"});
  CHECK(jacobian_fd_error(f, sp) < 1e-6);
  for (const auto& x : sample_gaussian(sp, 5)) CHECK(f.euclid_div(x) == f.jacobian(x).trace());
}

TEST_CASE("integration by parts for smooth fields") {
  const GaussianSpace sp(2, 48);
  std::vector<SmoothField> fields{
      SmoothField::from_expressions({"sin(x2)", "x1*x2"}),
      SmoothField::from_expressions({"erf(x1 - x2)", "cos(x1) + 0.3*x2^2"}),
      SmoothField::linear((Matrix(2, 2) << 0.3, -1.2, 0.8, 0.1).finished()),
  };
  for (const auto& b : fields) {
    for (const auto& tf : test_function_battery(2)) {
      const double lhs = expect(sp, [&](const Point& x) { return tf.grad(x).dot(b.eval(x)); }).value;
      const double rhs = expect(sp, [&](const Point& x) { return tf.value(x) * gauss_divergence(b, x); }).value;
      CHECK_MESSAGE(std::abs(lhs + rhs) < 1e-8, tf.name);
    }
  }
}

TEST_CASE("derivative measure of the sign field") {
  const GaussianSpace sp(2);
  const auto dm = derivative_measure(sign_x2_field(), sp);
  CHECK(dm.tv_ac == 0.0);
  REQUIRE(dm.jump_parts.size() == 1);
  Matrix expected = Matrix::Zero(2, 2);
  expected(0, 1) = 2.0;
  CHECK((dm.jump_parts[0].density(vec2(0.3, 0.0)) - expected).norm() == 0.0);
  CHECK(dm.tv_jump == doctest::Approx(2.0 / std::sqrt(2 * std::numbers::pi)).epsilon(1e-12));
  CHECK(dm.tv_jump == doctest::Approx(0.7978845608).epsilon(1e-9));
  CHECK(total_variation(dm) == doctest::Approx(0.7979).epsilon(1e-4));

  const Matrix p = polar_part(dm, vec2(-1.0, 0.0), {0});
  Matrix e12 = Matrix::Zero(2, 2);
  e12(0, 1) = 1.0;
  CHECK((p - e12).norm() == 0.0);
  CHECK_THROWS_AS(polar_part(dm, vec2(1.0, 1.0)), std::domain_error);
}

TEST_CASE("derivative measure of linear and constant fields") {
  const GaussianSpace sp(2);
  Matrix m(2, 2);
  m << 0, 1, -1, 0;
  const auto dm = derivative_measure(BVField::smooth(SmoothField::linear(m)), sp);
  CHECK(dm.tv_jump == 0.0);
  CHECK(dm.tv_ac == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
  CHECK(total_variation(dm) == doctest::Approx(std::sqrt(2.0)).epsilon(1e-13));
  const Matrix p = polar_part(dm, vec2(0.2, 5.0));
  CHECK((p - m / std::sqrt(2.0)).norm() < 1e-15);

  const auto dc = derivative_measure(BVField::smooth(SmoothField::constant(vec2(1, 2))), sp);
  CHECK(total_variation(dc) == 0.0);
  CHECK(dc.jump_parts.empty());
  const auto dz = derivative_measure(BVField::smooth(SmoothField::zero(2)), sp);
  CHECK(total_variation(dz) == 0.0);
  CHECK_THROWS_AS(polar_part(dz, vec2(0, 0)), std::domain_error);
}

TEST_CASE("polar parts have unit norm") {
  const GaussianSpace sp(2);
  const auto dm = derivative_measure(wavy_field(), sp);
  for (const auto& x : sample_gaussian(sp, 50, 3)) {
    CHECK(polar_part(dm, x).norm() == doctest::Approx(1.0).epsilon(1e-14));
    Point on = x;
    on[1] = 0.3;
    CHECK(polar_part(dm, on, {0}).norm() == doctest::Approx(1.0).epsilon(1e-14));
  }
}

TEST_CASE("distributional pairing reconstructs Db from its parts") {
  // -int b_i (d_j psi - x_j psi) dgamma = int psi d(Db)_ij. The left side is
  // integrated with adaptive Simpson across the interface (independent oracle).
  const BVField b = wavy_field();
  const GaussianSpace sp(2, 30);
  const auto dm = derivative_measure(b, sp);
  const Rule1D& gh = gauss_hermite_rule(40);
  for (const auto& tf : test_function_battery(2)) {
    for (int i = 0; i < 2; ++i) {
      for (int j = 0; j < 2; ++j) {
        double lhs = 0.0;
        for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
          const double x1 = gh.nodes[k];
          lhs += gh.weights[k] * oracle::normal_expect(
                                     [&](double x2) {
                                       const Point x = vec2(x1, x2);
                                       const double v = eval_field(b, x).value[i];
                                       return -v * (tf.grad(x)[j] - x[j] * tf.value(x));
                                     },
                                     {0.3});
        }
        const double ac = expect(sp, [&](const Point& x) { return tf.value(x) * dm.ac_density(x)(i, j); },
                                 Method::quadrature)
                              .value;
        const double jump = hyperplane_expect(dm.jump_parts[0].iface.normal, 0.3, sp, [&](const Point& x) {
                              return tf.value(x) * dm.jump_parts[0].density(x)(i, j);
                            }).value;
        // the ac integral crosses the interface, so compare against the
        // same split oracle for the volume part
        double ac_ref = 0.0;
        for (std::size_t k = 0; k < gh.nodes.size(); ++k) {
          const double x1 = gh.nodes[k];
          ac_ref += gh.weights[k] * oracle::normal_expect(
                                        [&](double x2) {
                                          const Point x = vec2(x1, x2);
                                          return tf.value(x) * dm.ac_density(x)(i, j);
                                        },
                                        {0.3});
        }
        CHECK_MESSAGE(std::abs(lhs - (ac_ref + jump)) < 1e-8, tf.name << " " << i << j);
        CHECK(std::isfinite(ac));
      }
    }
  }
}

TEST_CASE("jump bookkeeping") {
  const GaussianSpace sp(2);
  CHECK(max_normal_jump(sign_x2_field(), sp) == 0.0);
  CHECK(max_normal_jump(wavy_field(), sp) > 0.1);
  BVField declared(2, {Interface{vec2(0, 1), 0.0, [](const Point&) { return vec2(2, 0); }}},
                   {SmoothField::constant(vec2(-1, 0)), SmoothField::constant(vec2(1, 0))});
  CHECK(max_declared_jump_error(declared, sp) == 0.0);
  BVField wrong(2, {Interface{vec2(0, 1), 0.0, [](const Point&) { return vec2(1, 0); }}},
                {SmoothField::constant(vec2(-1, 0)), SmoothField::constant(vec2(1, 0))});
  CHECK(max_declared_jump_error(wrong, sp) == doctest::Approx(1.0));
  CHECK_THROWS_AS(BVField(2, {Interface{vec2(0, 1), 0.0, {}}}, {SmoothField::zero(2)}), std::invalid_argument);
}

TEST_CASE("hyperplane surface integrals") {
  const GaussianSpace sp(3, 20);
  Vector nu(3);
  nu << 1, 2, -2;
  nu /= 3.0;
  // unit integrand: the 1D density at the offset
  const double c = 0.8;
  CHECK(hyperplane_expect(nu, c, sp, [](const Point&) { return 1.0; }).value ==
        doctest::Approx(oracle::phi(c)).epsilon(1e-13));
  // E over the plane of |x|^2 is phi(c)(c^2 + 2)
  CHECK(hyperplane_expect(nu, c, sp, [](const Point& x) { return x.squaredNorm(); }).value ==
        doctest::Approx(oracle::phi(c) * (c * c + 2.0)).epsilon(1e-12));
  const Matrix w = complement_basis(nu);
  CHECK((w.transpose() * w - Matrix::Identity(2, 2)).norm() < 1e-14);
  CHECK((w.transpose() * nu).norm() < 1e-14);
}

TEST_CASE("integrate_against_tv equals tv for F = 1") {
  const GaussianSpace sp(2, 24);
  for (const auto& b : {sign_x2_field(), wavy_field()}) {
    const auto dm = derivative_measure(b, sp);
    const double v = integrate_against_tv(dm, [](const Point&, const Matrix&) { return 1.0; }).value;
    CHECK(v == doctest::Approx(total_variation(dm)).epsilon(1e-12));
  }
}

TEST_CASE("time-sliced total variation") {
  const GaussianSpace sp(2);
  Matrix m(2, 2);
  m << 0, 1, -1, 0;
  TimeSlicedField tf{{0.0, 0.5, 2.0}, {sign_x2_field(), BVField::smooth(SmoothField::linear(m))}};
  CHECK(tf.at(0.1).name() == "sign-x2");
  CHECK(tf.at(1.0).is_smooth());
  CHECK(tf.total_variation(sp) ==
        doctest::Approx(0.5 * 2.0 * oracle::phi(0.0) + 1.5 * std::sqrt(2.0)).epsilon(1e-12));
}

TEST_CASE("renormalization functions respect their bounds") {
  CHECK(check_renorm_bounds(arctan_renorm()));
  CHECK(check_renorm_bounds(algebraic_renorm()));
  auto bad = arctan_renorm();
  bad.sup_defect = 1.0;  // true sup is pi/2
  CHECK_FALSE(check_renorm_bounds(bad));
  const auto alg = algebraic_renorm();
  for (double z : {-3.0, -0.2, 0.0, 0.7, 40.0}) {
    const double h = 1e-6;
    CHECK(alg.beta_prime(z) == doctest::Approx((alg.beta(z + h) - alg.beta(z - h)) / (2 * h)).epsilon(1e-8));
  }
}
