#include "doctest.h"
#include "renorm/experiment.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

using namespace renorm;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("renorm_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("grids") {
  CHECK(parse_grid(Json(0.5)) == std::vector<double>{0.5});
  CHECK(parse_grid(Json::array({1, 5, 20})) == std::vector<double>{1, 5, 20});
  CHECK(parse_grid(Json("1,5,20")) == std::vector<double>{1, 5, 20});
  CHECK(parse_grid(Json("0.2:0.025")) == std::vector<double>{0.2, 0.1, 0.05, 0.025});
  CHECK_THROWS_AS(parse_grid(Json::array()), DescriptorError);
  CHECK_THROWS_AS(parse_grid(Json("a,b")), DescriptorError);
}

TEST_CASE("matrix and field descriptors") {
  CHECK(parse_matrix(Json("e11"), 2, 1).m(0, 0) == 1.0);
  const HSMatrix r = parse_matrix(Json("random:7"), 3, 1);
  CHECK(r.hs_norm == doctest::Approx(1.0));
  CHECK((r.m - parse_matrix(Json("random:7"), 3, 99).m).norm() == 0.0);  // explicit seed wins
  CHECK(parse_matrix(Json::array({Json::array({0, 2}), Json::array({0, 0})}), 2, 1).m(0, 1) == 2.0);
  CHECK_THROWS_AS(parse_matrix(Json("e99"), 2, 1), DescriptorError);
  CHECK_THROWS_AS(parse_matrix(Json::array({Json::array({1, 2})}), 2, 1), DescriptorError);

  const BVField s = parse_field(Json("sign-x2"), 2, 1);
  CHECK(eval_field(s, Point{{0.3, 0.5}}).value[0] == 1.0);
  CHECK(eval_field(s, Point{{0.3, -0.5}}).value[0] == -1.0);
  CHECK_THROWS_AS(parse_field(Json("sign-x3"), 2, 1), DescriptorError);

  const BVField lin = parse_field(Json("linear:e11"), 2, 1);
  CHECK(eval_field(lin, Point{{0.7, 2.0}}).value[0] == doctest::Approx(0.7));
  const Json smooth = {{"kind", "smooth"}, {"components", {"x1*x2", "sin(x1)"}}};
  CHECK(eval_field(parse_field(smooth, 2, 1), Point{{2.0, 3.0}}).value[0] == doctest::Approx(6.0));
  CHECK_THROWS_AS(parse_field(Json({{"kind", "smooth"}, {"components", {"x1", "x7"}}}), 2, 1), DescriptorError);
  CHECK_THROWS_AS(parse_field(Json({{"kind", "warp"}}), 2, 1), DescriptorError);
}

TEST_CASE("kernels, scalars, test functions") {
  const GaussianSpace sp(2);
  CHECK(parse_kernels(Json("one"), 2, HSMatrix::e11(2), sp).front().name == "one");
  const auto flows = parse_kernels(Json("flow:T=1,5"), 2, HSMatrix::e11(2), sp);
  REQUIRE(flows.size() == 2);
  CHECK(flows[1].name == "flow:T=5");
  CHECK_THROWS_AS(parse_kernels(Json("gaussian"), 2, HSMatrix::e11(2), sp), DescriptorError);

  CHECK(parse_scalar(Json("exp(x)*x"), 1)(Point::Constant(1, 1.0)) == doctest::Approx(std::exp(1.0)));
  CHECK(parse_scalar(Json(0.25), 3)(Point::Zero(3)) == 0.25);
  CHECK_THROWS_AS(parse_scalar(Json("x1 +"), 2), DescriptorError);

  CHECK(parse_test_functions(Json("battery"), 2).size() == 10);
  CHECK(parse_test_functions(Json::array({"one", "gauss_bump"}), 2).size() == 2);
  CHECK_THROWS_AS(parse_test_functions(Json::array({"nope"}), 2), DescriptorError);
  CHECK(parse_betas(Json::array({"arctan", "algebraic"})).size() == 2);
}

TEST_CASE("domains") {
  CHECK(parse_domain(Json("interval")).mesh.elements.size() == 4);
  CHECK(parse_domain(Json("disk")).dim == 2);
  const Json tri = {{"kind", "polygon"}, {"vertices", {{0, 0}, {1, 0}, {0, 1}}}};
  CHECK(parse_domain(tri).dim == 2);
  const Json cw = {{"kind", "polygon"}, {"vertices", {{0, 0}, {0, 1}, {1, 0}}}};
  CHECK_THROWS_AS(parse_domain(cw), DescriptorError);
}

TEST_CASE("number formatting round-trips") {
  for (double v : {0.1, 1.0 / 3.0, -2.5e-17, 6.02214076e23, 1.0}) CHECK(std::stod(fmt(v)) == v);
  CHECK(fmt(std::nan("")) == "nan");
  CHECK(fmt(-INFINITY) == "-inf");
  CHECK(fmt(true) == "true");
}

TEST_CASE("csv emission") {
  const fs::path dir = scratch("csv");
  fs::create_directories(dir);
  Table t{"empty.csv", {"a", "b"}, {}};
  write_csv(t, dir);
  CHECK(slurp(dir / "empty.csv") == "a,b\n");
  t.file = "quoted.csv";
  t.add({"x,y", "say \"hi\""});
  write_csv(t, dir);
  CHECK(slurp(dir / "quoted.csv") == "a,b\n\"x,y\",\"say \"\"hi\"\"\"\n");
  CHECK_THROWS_AS(t.add({"only one"}), std::logic_error);
}

TEST_CASE("exit statuses") {
  Json summary;
  const fs::path bad = scratch("bad");
  CHECK(run_and_emit(Json({{"experiment", "nope"}}), bad, &summary) == 2);
  CHECK(fs::exists(bad / "failure.json"));
  CHECK_FALSE(fs::exists(bad / "summary.json"));
  CHECK(run_and_emit(Json({{"experiment", "neumann"}, {"lambda", -1}}), scratch("lam")) == 2);
  CHECK(run_and_emit(Json({{"experiment", "defect"}, {"field", "sign-x9"}}), scratch("fld")) == 2);

  // u = 1 is not a solution for sign-x2; demanding one is a numeric failure
  const fs::path strict = scratch("strict");
  const Json cfg = {{"experiment", "defect"}, {"field", "sign-x2"}, {"require_solution", true}, {"eps", 0.2}};
  CHECK(run_and_emit(cfg, strict) == 3);
  const Json failure = Json::parse(slurp(strict / "failure.json"));
  CHECK(failure["status"] == 3);
  CHECK(std::string(failure["error"]).find("not a weak solution") != std::string::npos);
}

TEST_CASE("summary echo and reproducibility") {
  const Json cfg = {{"experiment", "neumann"}, {"domain", "interval"}, {"f", "x"}, {"lambda", 1}, {"refine", 3}};
  const fs::path a = scratch("rep_a"), b = scratch("rep_b");
  Json summary;
  REQUIRE(run_and_emit(cfg, a, &summary) == 0);
  REQUIRE(run_and_emit(cfg, b) == 0);
  CHECK(summary["schema"] == kSchemaId);
  CHECK(summary["config"] == cfg);
  CHECK_FALSE(std::string(summary["version"]).empty());
  for (const char* f : {"convergence.csv", "solution.csv", "comparison.csv", "solution.vtk"}) {
    CHECK(fs::exists(a / f));
    CHECK(slurp(a / f) == slurp(b / f));
  }
  CHECK(slurp(a / "comparison.csv") == "f,lambda,lambda_max_eta,lambda_min_eta,f_max,f_min,tolerance,pass,energy_bound_holds\n");
  const Json on_disk = Json::parse(slurp(a / "summary.json"));
  CHECK(on_disk["results"]["energy_bound"] == true);
}

TEST_CASE("optimize and identities runners") {
  Artifacts art;
  run_experiment(Json({{"experiment", "identities"}, {"dims", {2}}, {"samples", 10}}), art);
  REQUIRE(art.tables.size() == 1);
  CHECK(art.tables[0].rows.size() == 3);
  CHECK(art.summary["pass"] == true);

  Artifacts opt;
  run_experiment(Json({{"experiment", "optimize"}, {"matrix", "e11"}, {"T", "1"}, {"space", {{"mc_budget", 20000}}}}), opt);
  REQUIRE(opt.tables[0].rows.size() == 1);
  CHECK(opt.tables[0].columns.back() == "pass");
  CHECK(opt.tables[0].rows[0].back() == "true");
}
