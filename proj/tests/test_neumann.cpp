#include "doctest.h"
#include "renorm/expression.hpp"
#include "renorm/neumann.hpp"

#include <cmath>

using namespace renorm;

namespace {

ScalarFn expr(const std::string& text, int dim) {
  const Expression e = Expression::parse(text, dim);
  return [e](const Point& x) { return e.eval(x); };
}

ScalarFn constant(double c) {
  return [c](const Point&) { return c; };
}

}  // namespace

TEST_CASE("domains and meshes") {
  const Domain disk = Domain::disk(1.0, 8);
  CHECK(disk.mesh.boundary.size() == 8);
  const Domain fine = disk.refined().refined();
  CHECK(fine.mesh.elements.size() == 8 * 16);
  CHECK(fine.mesh.boundary.size() == 32);
  for (const auto& f : fine.mesh.boundary) CHECK(fine.mesh.nodes[f.nodes[0]].norm() == doctest::Approx(1.0));
  CHECK(fine.contains(Point::Zero(2)));
  CHECK_FALSE(fine.contains(Point::Constant(2, 0.8)));
  CHECK(Domain::interval(-1, 1, 4).refined().mesh.h() == doctest::Approx(0.25));
  std::vector<Point> bad(4, Point::Zero(2));
  bad[1] << 1, 0;
  bad[2] << 0.2, 0.2;
  bad[3] << 0, 1;
  CHECK_THROWS_AS(Domain::polygon(bad), std::invalid_argument);
  CHECK_THROWS_AS(solve_neumann(Domain::interval(-1, 1, 4), 0.0, constant(1)), std::invalid_argument);
}

TEST_CASE("constant data is reproduced exactly") {
  const auto sol = solve_neumann(Domain::interval(-1, 1, 16), 1.0, constant(1.0));
  CHECK((sol.eta.array() - 1.0).abs().maxCoeff() < 1e-12);
  CHECK(sol.discrete_residual < 1e-12);
  const ExtendedField b = extended_field(sol);
  CHECK(b.tv_jump < 1e-12);
  const auto w = weak_div_check(b, test_function_battery(1));
  CHECK(w.max_residual < 1e-12);
  const auto c = comparison_check(sol);
  CHECK(c.pass);
  CHECK(c.lambda_max_eta == doctest::Approx(1.0).epsilon(1e-12));

  const auto disk = solve_neumann(Domain::disk(1.0, 8).refined(), 2.0, constant(0.7));
  CHECK((disk.eta.array() - 0.35).abs().maxCoeff() < 1e-12);
  const auto zero = solve_neumann(Domain::disk(1.0, 8), 1.0, constant(0.0));
  CHECK(zero.eta.lpNorm<Eigen::Infinity>() == 0.0);
}

TEST_CASE("1D self-convergence against a fine reference") {
  const ScalarFn f = expr("x1", 1);
  const auto ref = solve_neumann(Domain::interval(-1, 1, 10000), 1.0, f);
  std::vector<double> h, err;
  Domain d = Domain::interval(-1, 1, 8);
  for (int level = 0; level < 4; ++level, d = d.refined()) {
    const auto sol = solve_neumann(d, 1.0, f);
    double e = 0.0;
    for (const auto& x : d.mesh.nodes) e = std::max(e, std::abs(sol.value(x) - ref.value(x)));
    h.push_back(d.mesh.h());
    err.push_back(e);
  }
  CHECK(loglog_slope(h, err) > 1.8);
  CHECK(err.back() < 1e-3);
  // odd data, odd solution
  const auto sol = solve_neumann(Domain::interval(-1, 1, 32), 1.0, f);
  CHECK(sol.value(Point::Zero(1)) == doctest::Approx(0.0).scale(1.0).epsilon(1e-12));
}

TEST_CASE("refinement study in 1D") {
  const auto st = refinement_study(Domain::interval(-1, 1, 4), 1.0, expr("x1", 1), 5, test_function_battery(1));
  REQUIRE(st.levels.size() == 6);
  MESSAGE("residual order " << st.residual_order << ", l2 order " << st.l2_order);
  CHECK(std::abs(st.residual_order - 2.0) < 0.3);
  CHECK(st.l2_order >= 1.8);
  for (std::size_t i = 1; i < st.levels.size(); ++i) CHECK(st.levels[i].tv_jump < st.levels[i - 1].tv_jump);
  for (const auto& r : st.levels) {
    CHECK(r.energy <= r.energy_bound);
    CHECK(r.comparison_pass);
    CHECK(r.lambda_max_eta <= 1.0);
  }
}

TEST_CASE("BV form of the extended field") {
  const auto sol = solve_neumann(Domain::interval(-1, 1, 32), 1.0, expr("x1", 1));
  const ExtendedField b = extended_field(sol);
  const BVField bv = b.bv_field();
  REQUIRE(bv.interfaces().size() == 2);
  Point x(1);
  for (double t : {-0.9, -0.3, 0.41, 0.99}) {
    x[0] = t;
    CHECK((eval_field(bv, x).value - b.value(x)).norm() == 0.0);
  }
  x[0] = 1.5;
  CHECK(eval_field(bv, x).value.norm() == 0.0);
  // jump across x = 1 is -eta'(1) from inside
  x[0] = 1.0;
  CHECK(bv.jump(1, x)[0] == doctest::Approx(-sol.grad_eta.back()[0]));
  const GaussianSpace sp(1, 8);
  CHECK(derivative_measure(bv, sp).tv_jump == doctest::Approx(b.tv_jump).epsilon(1e-12));
  CHECK_THROWS_AS(extended_field(solve_neumann(Domain::disk(1.0, 8).refined(), 1.0, constant(1))).bv_field(),
                  std::domain_error);
}

TEST_CASE("disk: weak divergence, trace and comparison") {
  const auto st = refinement_study(Domain::disk(1.0, 8), 1.0, expr("x1 + 0.5*x2*x2", 2), 4, test_function_battery(2));
  MESSAGE("residual order " << st.residual_order << ", normal trace order " << st.normal_trace_order);
  CHECK(st.levels.back().weak_residual < 1e-3);
  CHECK(st.normal_trace_order > 0.5);
  CHECK(st.levels.back().normal_trace_l1 < 0.5 * st.levels.front().normal_trace_l1);
  for (const auto& r : st.levels) {
    CHECK(r.energy <= r.energy_bound);
    CHECK(r.comparison_pass);
  }
}

TEST_CASE("comparison principle on a data battery") {
  for (const std::string f : {"x1", "tanh(3*x1)", "x1*x1", "cos(3*x1)", "sign(x1)"}) {
    for (double lambda : {0.5, 1.0, 4.0}) {
      const auto sol = solve_neumann(Domain::interval(-1.5, 1, 64), lambda, expr(f, 1));
      const auto c = comparison_check(sol);
      CHECK_MESSAGE(c.pass, f << " lambda=" << lambda << " max " << c.lambda_max_eta << " min " << c.lambda_min_eta);
      CHECK(sol.energy_bound_holds());
    }
  }
}
