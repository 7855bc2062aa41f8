#include "renorm/experiment.hpp"

#include "renorm/cyl_approx.hpp"
#include "renorm/optimizer.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <mutex>

#ifndef RENORM_VERSION
#define RENORM_VERSION "0.0.0-unknown"
#endif

namespace renorm {

std::string version_string() { return RENORM_VERSION; }

void Table::add(std::vector<std::string> row) {
  if (row.size() != columns.size()) throw std::logic_error("Table::add: column count mismatch in " + file);
  rows.push_back(std::move(row));
}

std::string fmt(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string fmt(bool v) { return v ? "true" : "false"; }

namespace {

std::string csv_cell(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Json jnum(double v) { return std::isfinite(v) ? Json(v) : Json(fmt(v)); }

int get_int(const Json& cfg, const std::string& key, int fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg[key].is_number_integer()) throw DescriptorError("'" + key + "' must be an integer");
  return cfg[key].get<int>();
}

double get_num(const Json& cfg, const std::string& key, double fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg[key].is_number()) throw DescriptorError("'" + key + "' must be a number");
  return cfg[key].get<double>();
}

bool get_bool(const Json& cfg, const std::string& key, bool fallback) {
  if (!cfg.contains(key)) return fallback;
  if (!cfg[key].is_boolean()) throw DescriptorError("'" + key + "' must be a boolean");
  return cfg[key].get<bool>();
}

Json get(const Json& cfg, const std::string& key, Json fallback) { return cfg.contains(key) ? cfg[key] : fallback; }

std::uint64_t seed_of(const Json& cfg) {
  if (!cfg.contains("seed")) return 20140301;
  if (!cfg["seed"].is_number_unsigned() && !cfg["seed"].is_number_integer()) throw DescriptorError("'seed' must be an integer");
  return cfg["seed"].get<std::uint64_t>();
}

// ---------------------------------------------------------------------------
// defect
// ---------------------------------------------------------------------------

void run_defect(const Json& cfg, Artifacts& out) {
  const std::uint64_t seed = seed_of(cfg);
  const int dim = get_int(cfg, "dim", 2);
  if (!cfg.contains("field")) throw DescriptorError("defect: 'field' is required");
  const BVField b = parse_field(cfg["field"], dim, seed);
  const GaussianSpace space = parse_space(get(cfg, "space", Json()), dim, seed);
  const HSMatrix flow_m = cfg.contains("kernel_matrix") ? parse_matrix(cfg["kernel_matrix"], dim, seed)
                                                        : default_kernel_matrix(b, space);

  DefectSetup s;
  s.b = b;
  s.kernels = parse_kernels(get(cfg, "kernels", "one"), dim, flow_m, space);
  if (cfg.contains("limit_kernels")) s.limit_kernels = parse_kernels(cfg["limit_kernels"], dim, flow_m, space);
  s.eps_grid = parse_grid(get(cfg, "eps", "0.2:0.025"));
  s.phis = parse_test_functions(get(cfg, "phis", Json::array({"one"})), dim);
  s.betas = parse_betas(get(cfg, "betas", "arctan"));
  s.require_solution = get_bool(cfg, "require_solution", false);
  const std::string am = get(cfg, "aniso_method", "automatic").get<std::string>();
  if (am == "automatic") s.aniso_method = Method::automatic;
  else if (am == "quadrature") s.aniso_method = Method::quadrature;
  else if (am == "monte_carlo") s.aniso_method = Method::monte_carlo;
  else throw DescriptorError("aniso_method must be automatic, quadrature or monte_carlo");

  const Json time = get(cfg, "time", Json::object());
  s.horizon = get_num(time, "horizon", 1.0);
  const int nodes = get_int(time, "nodes", 0);
  if (nodes > 0) {
    const Rule1D tr = gauss_legendre_rule(nodes, 0.0, s.horizon);
    s.times = tr.nodes;
    s.time_weights = tr.weights;
  }

  const Json sol = get(cfg, "solution", "one");
  if (sol == "flow") {
    if (!b.is_smooth()) throw DescriptorError("defect: solution 'flow' needs a linear field");
    const HSMatrix m(b.pieces()[0].jacobian(Point::Zero(dim)));
    auto cache = std::make_shared<std::map<double, FlowSolution>>();
    for (double t : s.times) cache->emplace(t, FlowSolution(m, t));
    s.u = [m, cache](double t, const Point& x) {
      auto it = cache->find(t);
      return it != cache->end() ? it->second.ut(x) : FlowSolution(m, t).ut(x);
    };
    s.u_name = "flow";
  } else if (sol.is_number() || sol == "one") {
    const double c = sol.is_number() ? sol.get<double>() : 1.0;
    s.u = [c](double, const Point&) { return c; };
    s.u_name = sol.is_number() ? fmt(c) : "one";
    s.u_sup = std::abs(c);
  } else if (sol.is_object() && sol.contains("expr")) {
    const ScalarFn f = parse_scalar(sol["expr"], dim);
    s.u = [f](double, const Point& x) { return f(x); };
    s.u_name = sol["expr"].get<std::string>();
  } else {
    throw DescriptorError("defect: 'solution' must be \"one\", \"flow\", a number or {\"expr\": ...}");
  }
  s.u_sup = get_num(cfg, "u_sup", s.u_sup);

  const DefectReport rep = defect_experiment(s, space);
  const DerivativeMeasure dm = derivative_measure(b, space);

  Table rows{"defect_report.csv",
             {"eps", "kernel", "phi", "beta", "residual_pairing", "residual_se", "aniso_bound", "aniso_se", "aniso_alt",
              "first_error", "second_error", "rhs", "chain_pass"},
             {}};
  for (const auto& r : rep.rows)
    rows.add({fmt(r.eps), r.kernel, r.phi, r.beta, fmt(r.residual_pairing.value), fmt(r.residual_pairing.std_error),
              fmt(r.aniso_bound.value), fmt(r.aniso_bound.std_error), fmt(r.aniso_alt), fmt(r.first_error),
              fmt(r.second_error), fmt(r.rhs), fmt(r.chain_pass)});
  out.tables.push_back(std::move(rows));
  Table lim{"limits.csv",
            {"kernel", "phi", "aniso_limit", "aniso_se", "defect_limit", "residual_limit", "errors_finite"},
            {}};
  for (const auto& l : rep.limits)
    lim.add({l.kernel, l.phi, fmt(l.aniso_limit.value), fmt(l.aniso_limit.std_error), fmt(l.defect_limit),
             fmt(l.residual_limit), fmt(l.errors_finite)});
  out.tables.push_back(std::move(lim));

  // decay of the residual pairing per (kernel, phi), first beta
  Json decay = Json::array();
  for (const auto& k : s.kernels) {
    for (const auto& phi : s.phis) {
      std::vector<double> v;
      for (const auto& r : rep.rows)
        if (r.kernel == k.name && r.phi == phi.name && r.beta == s.betas.front().name) v.push_back(r.residual_pairing.value);
      bool monotone = true;
      for (std::size_t i = 1; i < v.size(); ++i) monotone = monotone && v[i] < v[i - 1];
      const double limit = extrapolate_to_zero(s.eps_grid, v);
      decay.push_back({{"kernel", k.name}, {"phi", phi.name}, {"initial", jnum(v.front())}, {"final", jnum(v.back())},
                       {"limit", jnum(limit)}, {"monotone", monotone},
                       {"relative_limit", jnum(std::abs(limit) / v.front())}});
    }
  }
  out.summary["precheck_residual"] = jnum(rep.precheck_residual);
  out.summary["precheck_threshold"] = jnum(rep.precheck_threshold);
  out.summary["is_solution"] = rep.is_solution;
  out.summary["chain_pass"] = rep.chain_pass;
  out.summary["defect_limit"] = jnum(rep.defect_limit);
  out.summary["tv_jump"] = jnum(dm.tv_jump);
  out.summary["tv_ac"] = jnum(dm.tv_ac);
  out.summary["kernel_matrix"] = Json::array();
  for (int i = 0; i < dim; ++i) {
    Json row = Json::array();
    for (int j = 0; j < dim; ++j) row.push_back(flow_m.m(i, j));
    out.summary["kernel_matrix"].push_back(row);
  }
  out.summary["decay"] = decay;
}

// ---------------------------------------------------------------------------
// optimize
// ---------------------------------------------------------------------------

void run_optimize(const Json& cfg, Artifacts& out) {
  const std::uint64_t seed = seed_of(cfg);
  Json mats = get(cfg, "matrices", Json());
  if (mats.is_null()) mats = Json::array({{{"matrix", get(cfg, "matrix", "e11")}, {"dim", get_int(cfg, "dim", 2)}}});
  if (!mats.is_array() || mats.empty()) throw DescriptorError("optimize: 'matrices' must be a nonempty array");
  const std::vector<double> horizons = parse_grid(get(cfg, "T", Json::array({1, 5, 20})));
  const std::string mode = get(cfg, "mode", "gaussian").get<std::string>();
  if (mode != "gaussian" && mode != "lebesgue") throw DescriptorError("optimize: mode must be gaussian or lebesgue");
  const KernelMode km = mode == "gaussian" ? KernelMode::gaussian : KernelMode::lebesgue;

  std::vector<std::pair<std::string, HSMatrix>> parsed;
  for (const auto& e : mats) {
    if (!e.is_object() || !e.contains("matrix")) throw DescriptorError("optimize: each entry needs 'matrix'");
    const int dim = get_int(e, "dim", 2);
    const std::string label = e["matrix"].is_string() ? e["matrix"].get<std::string>() : "explicit";
    parsed.emplace_back(label + "@" + std::to_string(dim), parse_matrix(e["matrix"], dim, seed));
  }

  Table t{"bound_table.csv", {"matrix", "dim", "T", "J", "bound", "std_error", "pass"}, {}};
  Json runs = Json::array();
  bool pass = true;
  out.tables.push_back(t);
  for (const auto& [label, m] : parsed) {
    const GaussianSpace space = parse_space(get(cfg, "space", Json()), m.dim(), seed);
    const auto t0 = std::chrono::steady_clock::now();
    const BoundReport r = verify_bound(m, horizons, space, km);
    const double secs = seconds_since(t0);
    for (const auto& row : r.rows)
      out.tables.back().add({label, std::to_string(m.dim()), fmt(row.horizon), fmt(row.J), fmt(row.bound),
                             fmt(row.std_error), fmt(row.pass)});
    runs.push_back({{"matrix", label}, {"pass", r.pass}, {"monotone", r.monotone}, {"seconds", secs}});
    pass = pass && r.pass;
  }
  out.summary["pass"] = pass;
  out.summary["runs"] = runs;
}

// ---------------------------------------------------------------------------
// expflow
// ---------------------------------------------------------------------------

void run_expflow(const Json& cfg, Artifacts& out) {
  const std::uint64_t seed = seed_of(cfg);
  if (!cfg.contains("normalization") && !cfg.contains("flow"))
    throw DescriptorError("expflow: need a 'normalization' or a 'flow' section");
  if (cfg.contains("normalization")) {
    const Json& n = cfg["normalization"];
    const int count = get_int(n, "count", 20);
    std::vector<int> dims;
    for (double d : parse_grid(get(n, "dims", Json::array({1, 2, 3})))) dims.push_back(static_cast<int>(d));
    const double max_norm = get_num(n, "max_norm", 0.45);
    const int order = get_int(n, "quad_order", 30);
    const double tol = get_num(n, "tolerance", 1e-6);
    if (count < 1 || max_norm <= 0.0 || max_norm >= 1.0) throw DescriptorError("normalization: bad count or max_norm");
    Table t{"normalization.csv", {"index", "dim", "hs_norm", "integral", "error", "pass"}, {}};
    const auto t0 = std::chrono::steady_clock::now();
    double worst = 0.0;
    for (int i = 0; i < count; ++i) {
      const int dim = dims[static_cast<std::size_t>(i) % dims.size()];
      const CounterRng rng(seed, 0x4300 + static_cast<std::uint64_t>(i));
      Matrix c(dim, dim);
      for (int k = 0; k < dim * dim; ++k) c(k / dim, k % dim) = rng.normal(static_cast<std::uint64_t>(k));
      c *= max_norm * (0.2 + 0.8 * rng.uniform(1000)) / c.norm();
      const double v = expect(GaussianSpace(dim, order), [&](const Point& x) { return normalization_integrand(c, x); }).value;
      worst = std::max(worst, std::abs(v - 1.0));
      t.add({std::to_string(i), std::to_string(dim), fmt(c.norm()), fmt(v), fmt(v - 1.0), fmt(std::abs(v - 1.0) < tol)});
    }
    out.tables.push_back(std::move(t));
    out.summary["normalization"] = {{"max_error", worst}, {"pass", worst < tol}, {"seconds", seconds_since(t0)}};
  }
  if (cfg.contains("flow")) {
    const Json& f = cfg["flow"];
    const int dim = get_int(f, "dim", 2);
    HSMatrix m = parse_matrix(get(f, "matrix", "random"), dim, seed);
    if (get_bool(f, "normalize", true) && m.hs_norm > 0.0) m = m.normalized();
    const double horizon = get_num(f, "horizon", 1.0);
    const GaussianSpace space(dim, get_int(f, "quad_order", 48), 100000, seed);
    const auto phis = parse_test_functions(get(f, "phis", "battery"), dim);
    const double tol = get_num(f, "tolerance", 1e-4);
    Table w{"weak_residual.csv", {"psi", "residual", "pass"}, {}};
    double worst = 0.0;
    for (const auto& psi : phis) {
      const double r = weak_residual(m, horizon, psi, space);
      worst = std::max(worst, std::abs(r));
      w.add({psi.name, fmt(r), fmt(std::abs(r) < tol)});
    }
    out.tables.push_back(std::move(w));
    Table mass{"mass.csv", {"t", "mass", "error", "log_det2"}, {}};
    double worst_mass = 0.0;
    for (double t : parse_grid(get(f, "times", Json::array({0.0, 0.25, 0.5, 0.75, 1.0})))) {
      const FlowSolution fs(m, t);
      const double v = expect_against_ut(fs, space, [](const Point&) { return 1.0; }).value;
      worst_mass = std::max(worst_mass, std::abs(v - 1.0));
      mass.add({fmt(t), fmt(v), fmt(v - 1.0), fmt(fs.log_det2())});
    }
    out.tables.push_back(std::move(mass));
    out.summary["flow"] = {{"test_functions", phis.size()},
                           {"max_weak_residual", worst},
                           {"weak_pass", worst < tol},
                           {"max_mass_error", worst_mass},
                           {"mass_pass", worst_mass < 1e-8}};
  }
}

// ---------------------------------------------------------------------------
// cylapprox
// ---------------------------------------------------------------------------

void run_cylapprox(const Json& cfg, Artifacts& out) {
  const std::uint64_t seed = seed_of(cfg);
  const int dim = get_int(cfg, "dim", 3);
  if (!cfg.contains("fields") || !cfg["fields"].is_array() || cfg["fields"].empty())
    throw DescriptorError("cylapprox: 'fields' must be a nonempty array");
  const GaussianSpace space = parse_space(get(cfg, "space", Json()), dim, seed);
  const auto rhos = parse_kernels(get(cfg, "rho", "one"), dim, HSMatrix::e11(dim), space);
  if (rhos.size() != 1) throw DescriptorError("cylapprox: 'rho' must describe one kernel");
  std::vector<BVField> fields;
  for (const auto& j : cfg["fields"]) fields.push_back(parse_field(j, dim, seed));
  // strict decrease needs b to depend on every coordinate; other items only have to be non-increasing
  std::vector<std::string> strict;
  if (cfg.contains("strict_fields")) {
    for (const auto& n : cfg["strict_fields"]) {
      if (!n.is_string()) throw DescriptorError("cylapprox: strict_fields must be names");
      strict.push_back(n.get<std::string>());
      if (std::none_of(fields.begin(), fields.end(), [&](const BVField& b) { return b.name() == strict.back(); }))
        throw DescriptorError("cylapprox: no field named '" + strict.back() + "'");
    }
  } else {
    for (const auto& b : fields) strict.push_back(b.name());
  }

  out.tables.push_back({"cyl_study.csv",
                        {"field", "N", "l1_gap", "div_gap", "identity_gap", "tv_n", "tv", "jensen_pass", "lp_contraction"},
                        {}});
  Json per = Json::array();
  bool identity = true, tv = true, decreasing = true;
  for (const auto& b : fields) {
    const auto rows = cyl_study(b, space, rhos.front());
    const bool is_strict = std::find(strict.begin(), strict.end(), b.name()) != strict.end();
    bool dec = true, noninc = true, id = true, tvp = true;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto& r = rows[i];
      out.tables.back().add({b.name(), std::to_string(r.retained), fmt(r.l1_gap), fmt(r.div_gap), fmt(r.identity_gap),
                             fmt(r.tv_n), fmt(r.tv), fmt(r.jensen_pass), fmt(r.lp_contraction)});
      if (i > 0) {
        dec = dec && r.l1_gap < rows[i - 1].l1_gap;
        noninc = noninc && r.l1_gap <= rows[i - 1].l1_gap + 1e-12;
      }
      if (!std::isnan(r.identity_gap)) id = id && r.identity_gap < 1e-6;
      tvp = tvp && r.jensen_pass && r.tv_n <= r.tv + 1e-6;
    }
    per.push_back({{"field", b.name()},
                   {"strictly_decreasing", dec},
                   {"non_increasing", noninc},
                   {"strict_required", is_strict},
                   {"identity_pass", id},
                   {"identity_checked", !std::isnan(rows.front().identity_gap)},
                   {"tv_pass", tvp}});
    identity = identity && id;
    tv = tv && tvp;
    decreasing = decreasing && (is_strict ? dec : noninc);
  }
  out.summary["fields"] = per;
  out.summary["identity_pass"] = identity;
  out.summary["tv_pass"] = tv;
  out.summary["l1_monotone_pass"] = decreasing;
}

// ---------------------------------------------------------------------------
// neumann
// ---------------------------------------------------------------------------

void write_solution(const EllipticSolution& sol, Artifacts& out) {
  const Mesh& m = sol.domain->mesh;
  Table t{"solution.csv", {"node"}, {}};
  for (int k = 1; k <= m.dim; ++k) t.columns.push_back("x" + std::to_string(k));
  t.columns.push_back("eta");
  for (std::size_t i = 0; i < m.nodes.size(); ++i) {
    std::vector<std::string> row{std::to_string(i)};
    for (int k = 0; k < m.dim; ++k) row.push_back(fmt(m.nodes[i][k]));
    row.push_back(fmt(sol.eta[static_cast<Eigen::Index>(i)]));
    t.add(std::move(row));
  }
  out.tables.push_back(std::move(t));
}

std::string vtk_text(const EllipticSolution& sol) {
  const Mesh& m = sol.domain->mesh;
  std::string s = "# vtk DataFile Version 3.0\nneumann eta\nASCII\nDATASET UNSTRUCTURED_GRID\n";
  s += "POINTS " + std::to_string(m.nodes.size()) + " double\n";
  for (const auto& p : m.nodes) s += fmt(p[0]) + " " + (m.dim > 1 ? fmt(p[1]) : "0") + " 0\n";
  const int nv = m.vertices_per_element();
  s += "CELLS " + std::to_string(m.elements.size()) + " " + std::to_string(m.elements.size() * (nv + 1)) + "\n";
  for (const auto& el : m.elements) {
    s += std::to_string(nv);
    for (int k = 0; k < nv; ++k) s += " " + std::to_string(el[k]);
    s += "\n";
  }
  s += "CELL_TYPES " + std::to_string(m.elements.size()) + "\n";
  for (std::size_t e = 0; e < m.elements.size(); ++e) s += (nv == 2 ? "3\n" : "5\n");
  s += "POINT_DATA " + std::to_string(m.nodes.size()) + "\nSCALARS eta double 1\nLOOKUP_TABLE default\n";
  for (Eigen::Index i = 0; i < sol.eta.size(); ++i) s += fmt(sol.eta[i]) + "\n";
  return s;
}

void run_neumann(const Json& cfg, Artifacts& out) {
  const Domain dom = parse_domain(get(cfg, "domain", "interval"));
  const int dim = dom.dim;
  const double lambda = get_num(cfg, "lambda", 1.0);
  if (!(lambda > 0.0)) throw DescriptorError("neumann: lambda must be positive");
  const int refine = get_int(cfg, "refine", 5);
  if (refine < 0 || refine > 9) throw DescriptorError("neumann: refine must be in [0, 9]");
  const Json fdesc = get(cfg, "f", dim == 1 ? "x" : "x1");
  const ScalarFn f = parse_scalar(fdesc, dim);
  const auto phis = parse_test_functions(get(cfg, "phis", "battery"), dim);

  const RefinementStudy st = refinement_study(dom, lambda, f, refine, phis);
  Table conv{"convergence.csv",
             {"level", "elements", "h", "weak_residual", "l2_to_next", "tv_jump", "normal_trace_l1", "energy",
              "energy_bound", "lambda_max_eta", "lambda_min_eta", "comparison_pass", "discrete_residual"},
             {}};
  bool energy = true, comparison = true;
  for (const auto& r : st.levels) {
    conv.add({std::to_string(r.level), std::to_string(r.elements), fmt(r.h), fmt(r.weak_residual), fmt(r.l2_to_next),
              fmt(r.tv_jump), fmt(r.normal_trace_l1), fmt(r.energy), fmt(r.energy_bound), fmt(r.lambda_max_eta),
              fmt(r.lambda_min_eta), fmt(r.comparison_pass), fmt(r.discrete_residual)});
    energy = energy && r.energy <= r.energy_bound * (1 + 1e-12);
    comparison = comparison && r.comparison_pass;
  }
  out.tables.push_back(std::move(conv));

  Domain finest = dom;
  for (int i = 0; i < refine; ++i) finest = finest.refined();
  const EllipticSolution sol = solve_neumann(finest, lambda, f);
  write_solution(sol, out);

  // constant data: eta = c / lambda
  const double c = get_num(cfg, "constant", 1.0);
  double const_err = 0.0;
  {
    Domain d = dom;
    for (int level = 0; level <= refine; ++level) {
      if (level > 0) d = d.refined();
      const EllipticSolution s = solve_neumann(d, lambda, [c](const Point&) { return c; });
      const_err = std::max(const_err, (s.eta.array() - c / lambda).abs().maxCoeff());
    }
  }

  Table cmp{"comparison.csv",
            {"f", "lambda", "lambda_max_eta", "lambda_min_eta", "f_max", "f_min", "tolerance", "pass", "energy_bound_holds"},
            {}};
  const Json battery = get(cfg, "comparison", Json::array());
  const std::vector<double> lambdas = parse_grid(get(cfg, "comparison_lambdas", Json::array({lambda})));
  for (const auto& fj : battery) {
    const ScalarFn g = parse_scalar(fj, dim);
    for (double lam : lambdas) {
      const EllipticSolution s = solve_neumann(finest, lam, g);
      const ComparisonReport r = comparison_check(s);
      cmp.add({fj.is_string() ? fj.get<std::string>() : fmt(fj.get<double>()), fmt(lam), fmt(r.lambda_max_eta),
               fmt(r.lambda_min_eta), fmt(r.f_max), fmt(r.f_min), fmt(r.tolerance), fmt(r.pass),
               fmt(s.energy_bound_holds())});
      comparison = comparison && r.pass;
      energy = energy && s.energy_bound_holds();
    }
  }
  out.tables.push_back(std::move(cmp));

  out.summary["residual_order"] = jnum(st.residual_order);
  out.summary["l2_order"] = jnum(st.l2_order);
  out.summary["normal_trace_order"] = jnum(st.normal_trace_order);
  out.summary["finest_weak_residual"] = jnum(st.levels.back().weak_residual);
  out.summary["constant_error"] = jnum(const_err);
  out.summary["energy_bound"] = energy;
  out.summary["comparison_pass"] = comparison;
  out.summary["vtk"] = vtk_text(sol);
}

// ---------------------------------------------------------------------------
// identities
// ---------------------------------------------------------------------------

void run_identities(const Json& cfg, Artifacts& out) {
  const std::uint64_t seed = seed_of(cfg);
  const int samples = get_int(cfg, "samples", 100);
  const double tol = get_num(cfg, "tolerance", 1e-6);
  if (samples < 1) throw DescriptorError("identities: samples must be positive");
  Table t{"identities.csv", {"identity", "dim", "samples", "max_residual", "pass"}, {}};
  bool pass = true;
  double worst = 0.0;
  for (double d : parse_grid(get(cfg, "dims", Json::array({1, 2, 3})))) {
    const int dim = static_cast<int>(d);
    if (dim < 1) throw DescriptorError("identities: dims must be positive");
    for (const auto& r : {gaussian_rotation_identity(dim, samples, seed, tol), euclidean_shear_identity(dim, samples, seed, tol),
                          ou_path_derivative(dim, samples, seed, tol)}) {
      t.add({r.name, std::to_string(dim), std::to_string(r.samples), fmt(r.max_residual), fmt(r.pass)});
      pass = pass && r.pass;
      worst = std::max(worst, r.max_residual);
    }
  }
  out.tables.push_back(std::move(t));
  out.summary["pass"] = pass;
  out.summary["max_residual"] = worst;
}

}  // namespace

void write_csv(const Table& t, const std::filesystem::path& dir) {
  std::ofstream os(dir / t.file, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + (dir / t.file).string());
  for (std::size_t i = 0; i < t.columns.size(); ++i) os << (i ? "," : "") << csv_cell(t.columns[i]);
  os << "\n";
  for (const auto& row : t.rows) {
    for (std::size_t i = 0; i < row.size(); ++i) os << (i ? "," : "") << csv_cell(row[i]);
    os << "\n";
  }
  if (!os) throw std::runtime_error("write failed: " + (dir / t.file).string());
}

void run_experiment(const Json& cfg, Artifacts& out) {
  if (!cfg.is_object() || !cfg.contains("experiment") || !cfg["experiment"].is_string())
    throw DescriptorError("config needs a string 'experiment'");
  const std::string kind = cfg["experiment"].get<std::string>();
  if (kind == "defect") return run_defect(cfg, out);
  if (kind == "optimize") return run_optimize(cfg, out);
  if (kind == "expflow") return run_expflow(cfg, out);
  if (kind == "cylapprox") return run_cylapprox(cfg, out);
  if (kind == "neumann") return run_neumann(cfg, out);
  if (kind == "identities") return run_identities(cfg, out);
  throw DescriptorError("unknown experiment '" + kind + "'");
}

int run_and_emit(const Json& cfg, const std::filesystem::path& out_dir, Json* summary) {
  static std::mutex io;  // output writing is serialized
  Artifacts art;
  int status = 0;
  std::string error;
  const auto t0 = std::chrono::steady_clock::now();
  try {
    run_experiment(cfg, art);
  } catch (const DescriptorError& e) {
    status = 2;
    error = e.what();
  } catch (const nlohmann::json::exception& e) {
    status = 2;
    error = e.what();
  } catch (const std::exception& e) {
    status = 3;
    error = e.what();
  }
  Json doc;
  doc["schema"] = kSchemaId;
  doc["version"] = version_string();
  doc["config"] = cfg;
  doc["status"] = status;
  doc["seconds"] = seconds_since(t0);
  std::string vtk;
  if (art.summary.contains("vtk")) {
    vtk = art.summary["vtk"].get<std::string>();
    art.summary.erase("vtk");
  }
  doc["results"] = art.summary;
  if (summary) *summary = doc;

  const std::lock_guard<std::mutex> lock(io);
  std::filesystem::create_directories(out_dir);
  if (status == 2) {
    std::ofstream(out_dir / "failure.json") << Json({{"status", 2}, {"kind", "config"}, {"error", error}}).dump(2) << "\n";
    return 2;
  }
  for (const auto& t : art.tables) write_csv(t, out_dir);
  if (!vtk.empty()) std::ofstream(out_dir / "solution.vtk") << vtk;
  if (status == 3) {
    std::ofstream(out_dir / "failure.json")
        << Json({{"status", 3}, {"kind", "numeric"}, {"error", error}, {"partial_tables", art.tables.size()}}).dump(2)
        << "\n";
    return 3;
  }
  std::ofstream(out_dir / "summary.json") << doc.dump(2) << "\n";
  return 0;
}

Json load_config(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw DescriptorError("cannot open config " + path.string());
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw DescriptorError(std::string("config parse error: ") + e.what());
  }
}

}  // namespace renorm
