#include "renorm/descriptors.hpp"

#include "renorm/expression.hpp"
#include "renorm/optimizer.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>

namespace renorm {

namespace {

[[noreturn]] void fail(const std::string& what) { throw DescriptorError(what); }

std::string kind_of(const Json& j) {
  if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string()) fail("descriptor needs a string 'kind': " + j.dump());
  return j["kind"].get<std::string>();
}

double number(const Json& j, const std::string& key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j[key].is_number()) fail("'" + key + "' must be a number");
  return j[key].get<double>();
}

Vector vector_of(const Json& j, int dim, const std::string& what) {
  if (!j.is_array() || static_cast<int>(j.size()) != dim) fail(what + ": expected an array of length " + std::to_string(dim));
  Vector v(dim);
  for (int i = 0; i < dim; ++i) {
    if (!j[i].is_number()) fail(what + ": non-numeric entry");
    v[i] = j[i].get<double>();
  }
  return v;
}

std::vector<std::string> strings_of(const Json& j, const std::string& what) {
  if (!j.is_array()) fail(what + ": expected an array of strings");
  std::vector<std::string> out;
  for (const auto& e : j) {
    if (!e.is_string()) fail(what + ": expected strings");
    out.push_back(e.get<std::string>());
  }
  return out;
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) out.push_back(item);
  return out;
}

double to_double(const std::string& s) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) fail("not a number: '" + s + "'");
    return v;
  } catch (const std::logic_error&) {
    fail("not a number: '" + s + "'");
  }
}

SmoothField smooth_from(const Json& comps, int dim, const std::string& what) {
  const auto c = strings_of(comps, what);
  if (static_cast<int>(c.size()) != dim) fail(what + ": need one expression per component");
  try {
    return SmoothField::from_expressions(c);
  } catch (const ExpressionError& e) {
    fail(what + ": " + e.what());
  }
}

}  // namespace

HSMatrix parse_matrix(const Json& j, int dim, std::uint64_t seed) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "e11") return HSMatrix::e11(dim);
    if (s == "e12") {
      Matrix m = Matrix::Zero(dim, dim);
      if (dim < 2) fail("matrix e12 needs dim >= 2");
      m(0, 1) = 1.0;
      return HSMatrix(m);
    }
    if (s == "skew") {
      if (dim < 2) fail("matrix skew needs dim >= 2");
      return HSMatrix::skew(dim);
    }
    if (s == "random") return HSMatrix::random_unit(dim, seed);
    if (s.rfind("random:", 0) == 0) return HSMatrix::random_unit(dim, static_cast<std::uint64_t>(to_double(s.substr(7))));
    fail("unknown matrix '" + s + "'");
  }
  if (j.is_array()) {
    if (static_cast<int>(j.size()) != dim) fail("matrix: expected " + std::to_string(dim) + " rows");
    Matrix m(dim, dim);
    for (int i = 0; i < dim; ++i) m.row(i) = vector_of(j[i], dim, "matrix row").transpose();
    return HSMatrix(m);
  }
  fail("matrix: expected a name or an array of rows");
}

BVField parse_field(const Json& j, int dim, std::uint64_t seed) {
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s.rfind("sign-x", 0) == 0) {
      const int k = static_cast<int>(to_double(s.substr(6)));
      if (k < 1 || k > dim || dim < 2) fail("field '" + s + "': coordinate out of range");
      Vector nu = Vector::Zero(dim), e1 = Vector::Zero(dim);
      nu[k - 1] = 1.0;
      e1[k == 1 ? 1 : 0] = 1.0;
      return BVField::two_sided(nu, 0.0, SmoothField::constant(-e1), SmoothField::constant(e1), s);
    }
    if (s.rfind("linear:", 0) == 0) {
      return BVField(dim, {}, {SmoothField::linear(parse_matrix(Json(s.substr(7)), dim, seed).m)}, s);
    }
    fail("unknown field '" + s + "'");
  }
  const std::string kind = kind_of(j);
  const std::string name = j.value("name", kind);
  if (kind == "linear") {
    if (!j.contains("matrix")) fail("linear field needs 'matrix'");
    const auto seed2 = static_cast<std::uint64_t>(number(j, "seed", static_cast<double>(seed)));
    return BVField(dim, {}, {SmoothField::linear(parse_matrix(j["matrix"], dim, seed2).m)}, name);
  }
  if (kind == "constant") return BVField(dim, {}, {SmoothField::constant(vector_of(j.at("value"), dim, "constant"))}, name);
  if (kind == "smooth") {
    if (!j.contains("components")) fail("smooth field needs 'components'");
    return BVField(dim, {}, {smooth_from(j["components"], dim, "smooth field")}, name);
  }
  if (kind == "two_sided") {
    if (!j.contains("normal") || !j.contains("below") || !j.contains("above"))
      fail("two_sided field needs 'normal', 'below' and 'above'");
    return BVField::two_sided(vector_of(j["normal"], dim, "normal"), number(j, "offset", 0.0),
                              smooth_from(j["below"], dim, "below"), smooth_from(j["above"], dim, "above"), name);
  }
  if (kind == "bv") {
    if (!j.contains("interfaces") || !j.contains("pieces")) fail("bv field needs 'interfaces' and 'pieces'");
    std::vector<Interface> ifaces;
    for (const auto& i : j["interfaces"]) {
      Interface iface;
      iface.normal = vector_of(i.at("normal"), dim, "interface normal");
      iface.offset = number(i, "offset", 0.0);
      ifaces.push_back(std::move(iface));
    }
    std::vector<SmoothField> pieces;
    for (const auto& p : j["pieces"]) pieces.push_back(smooth_from(p, dim, "piece"));
    try {
      return BVField(dim, std::move(ifaces), std::move(pieces), name);
    } catch (const std::invalid_argument& e) {
      fail(std::string("bv field: ") + e.what());
    }
  }
  fail("unknown field kind '" + kind + "'");
}

HSMatrix default_kernel_matrix(const BVField& b, const GaussianSpace& space) {
  const DerivativeMeasure dm = derivative_measure(b, space);
  if (!dm.jump_parts.empty()) {
    const auto& iface = dm.jump_parts.front().iface;
    const Point x = iface.offset / iface.normal.squaredNorm() * iface.normal;
    return HSMatrix(polar_part(dm, x, {0}));
  }
  try {
    return HSMatrix(polar_part(dm, Point::Zero(b.dim())));
  } catch (const std::domain_error&) {
    return HSMatrix::e11(b.dim());
  }
}

std::vector<Mollifier> parse_kernels(const Json& j, int dim, const HSMatrix& flow_matrix, const GaussianSpace& space) {
  if (j.is_array()) {
    std::vector<Mollifier> out;
    for (const auto& e : j) {
      auto ks = parse_kernels(e, dim, flow_matrix, space);
      out.insert(out.end(), ks.begin(), ks.end());
    }
    return out;
  }
  auto flow = [&](const std::vector<double>& horizons, const HSMatrix& m, KernelMode mode, int nodes) {
    std::vector<Mollifier> out;
    for (double t : horizons) {
      if (!(t > 0.0)) fail("flow kernel: horizons must be positive");
      Mollifier k = mode == KernelMode::gaussian ? averaged_kernel(m, t, nodes, space).kernel
                                                 : averaged_kernel_lebesgue(m, t, nodes).kernel;
      std::ostringstream os;
      os << "flow:T=" << t;
      k.name = os.str();
      out.push_back(std::move(k));
    }
    return out;
  };
  if (j.is_string()) {
    const std::string s = j.get<std::string>();
    if (s == "one") return {unit_kernel(dim)};
    if (s == "bump") return {lebesgue_bump(dim)};
    if (s == "hermite") return {hermite_square_kernel(1.0, Vector::Constant(dim, 0.3), Vector::Constant(dim, 0.2))};
    if (s.rfind("flow:T=", 0) == 0) return flow(parse_grid(Json(s.substr(7))), flow_matrix, KernelMode::gaussian, 0);
    fail("unknown kernel '" + s + "'");
  }
  const std::string kind = kind_of(j);
  if (kind == "hermite") {
    return {hermite_square_kernel(number(j, "c0", 1.0), vector_of(j.at("lin"), dim, "lin"),
                                  vector_of(j.at("quad"), dim, "quad"))};
  }
  if (kind == "flow") {
    if (!j.contains("T")) fail("flow kernel needs 'T'");
    const HSMatrix m = j.contains("matrix") ? parse_matrix(j["matrix"], dim, 0) : flow_matrix;
    const std::string mode = j.value("mode", "gaussian");
    if (mode != "gaussian" && mode != "lebesgue") fail("flow kernel: mode must be gaussian or lebesgue");
    return flow(parse_grid(j["T"]), m, mode == "gaussian" ? KernelMode::gaussian : KernelMode::lebesgue,
                static_cast<int>(number(j, "nodes", 0)));
  }
  if (kind == "expr") {
    const std::string mode = j.value("mode", "gaussian");
    if (mode != "gaussian" && mode != "lebesgue") fail("expr kernel: mode must be gaussian or lebesgue");
    try {
      Mollifier k = expression_kernel(j.at("expr").get<std::string>(), dim,
                                      mode == "gaussian" ? KernelMode::gaussian : KernelMode::lebesgue,
                                      j.value("normalize", true));
      k.name = j.value("name", k.name);
      return {k};
    } catch (const ExpressionError& e) {
      fail(std::string("expr kernel: ") + e.what());
    }
  }
  fail("unknown kernel kind '" + kind + "'");
}

ScalarFn parse_scalar(const Json& j, int dim) {
  if (j.is_number()) {
    const double c = j.get<double>();
    return [c](const Point&) { return c; };
  }
  if (!j.is_string()) fail("scalar function: expected a number or an expression");
  std::string text = j.get<std::string>();
  // "x" is accepted for x1 in 1D
  if (dim == 1) {
    std::string out;
    for (std::size_t i = 0; i < text.size(); ++i) {
      out += text[i];
      const bool var = text[i] == 'x' && (i == 0 || !std::isalpha(static_cast<unsigned char>(text[i - 1]))) &&
                       (i + 1 == text.size() || !std::isalnum(static_cast<unsigned char>(text[i + 1])));
      if (var) out += '1';
    }
    text = out;
  }
  try {
    const Expression e = Expression::parse(text, dim);
    return [e](const Point& x) { return e.eval(x); };
  } catch (const ExpressionError& e) {
    fail(std::string("scalar function: ") + e.what());
  }
}

std::vector<TestFunction> parse_test_functions(const Json& j, int dim) {
  const auto battery = test_function_battery(dim);
  std::vector<std::string> names;
  if (j.is_string()) names = {j.get<std::string>()};
  else names = strings_of(j, "test functions");
  std::vector<TestFunction> out;
  for (const auto& n : names) {
    if (n == "battery") {
      out.insert(out.end(), battery.begin(), battery.end());
      continue;
    }
    if (n == "one") {
      out.push_back(constant_test_function(dim));
      continue;
    }
    auto it = std::find_if(battery.begin(), battery.end(), [&](const TestFunction& t) { return t.name == n; });
    if (it == battery.end()) fail("unknown test function '" + n + "'");
    out.push_back(*it);
  }
  if (out.empty()) fail("test functions: empty list");
  return out;
}

std::vector<RenormFunction> parse_betas(const Json& j) {
  std::vector<std::string> names;
  if (j.is_string()) names = {j.get<std::string>()};
  else names = strings_of(j, "betas");
  std::vector<RenormFunction> out;
  for (const auto& n : names) {
    if (n == "arctan") out.push_back(arctan_renorm());
    else if (n == "algebraic") out.push_back(algebraic_renorm());
    else fail("unknown beta '" + n + "'");
  }
  if (out.empty()) fail("betas: empty list");
  return out;
}

Domain parse_domain(const Json& j) {
  try {
    if (j.is_string()) {
      const std::string s = j.get<std::string>();
      if (s == "interval") return Domain::interval(-1.0, 1.0, 4);
      if (s == "disk") return Domain::disk(1.0, 8);
      fail("unknown domain '" + s + "'");
    }
    const std::string kind = kind_of(j);
    if (kind == "interval")
      return Domain::interval(number(j, "a", -1.0), number(j, "b", 1.0), static_cast<int>(number(j, "elements", 4)));
    if (kind == "disk") return Domain::disk(number(j, "radius", 1.0), static_cast<int>(number(j, "segments", 8)));
    if (kind == "polygon") {
      std::vector<Point> v;
      for (const auto& p : j.at("vertices")) v.push_back(vector_of(p, 2, "vertex"));
      return Domain::polygon(v);
    }
    fail("unknown domain kind '" + kind + "'");
  } catch (const std::invalid_argument& e) {
    fail(std::string("domain: ") + e.what());
  }
}

std::vector<double> parse_grid(const Json& j) {
  std::vector<double> out;
  if (j.is_number()) {
    out.push_back(j.get<double>());
  } else if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_number()) fail("grid: non-numeric entry");
      out.push_back(e.get<double>());
    }
  } else if (j.is_string()) {
    const std::string s = j.get<std::string>();
    const auto colon = s.find(':');
    if (colon != std::string::npos) {
      try {
        out = geometric_grid(to_double(s.substr(0, colon)), to_double(s.substr(colon + 1)));
      } catch (const std::invalid_argument& e) {
        fail(std::string("grid: ") + e.what());
      }
    } else {
      for (const auto& part : split(s, ',')) out.push_back(to_double(part));
    }
  } else {
    fail("grid: expected a number, an array or a string");
  }
  if (out.empty()) fail("grid: empty");
  for (double v : out)
    if (!std::isfinite(v)) fail("grid: non-finite entry");
  return out;
}

GaussianSpace parse_space(const Json& j, int dim, std::uint64_t seed) {
  if (!j.is_null() && !j.is_object()) fail("space: expected an object");
  const Json o = j.is_null() ? Json::object() : j;
  const int order = static_cast<int>(number(o, "quad_order", 12));
  const auto budget = static_cast<std::int64_t>(number(o, "mc_budget", 100000));
  if (order < 1 || budget < 64) fail("space: quad_order >= 1 and mc_budget >= 64 required");
  return GaussianSpace(dim, order, budget, seed);
}

}  // namespace renorm
