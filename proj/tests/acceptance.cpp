// Runs every shipped config and prints one PASS/FAIL line per acceptance criterion.
// Criterion 9 re-runs each config into a second directory and compares CSV bytes.

#include "renorm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#ifndef RENORM_CONFIG_DIR
#error "RENORM_CONFIG_DIR must point at configs/"
#endif

namespace fs = std::filesystem;
using renorm::Json;

namespace {

struct Csv {
  std::vector<std::string> header;
  std::vector<std::map<std::string, std::string>> rows;

  double num(std::size_t i, const std::string& col) const { return std::stod(rows.at(i).at(col)); }
  bool flag(std::size_t i, const std::string& col) const { return rows.at(i).at(col) == "true"; }
};

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char c = line[i];
    if (quoted) {
      if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') out.back() += line[++i];
      else if (c == '"') quoted = false;
      else out.back() += c;
    } else if (c == '"') {
      quoted = true;
    } else if (c == ',') {
      out.emplace_back();
    } else {
      out.back() += c;
    }
  }
  return out;
}

Csv read_csv(const fs::path& p) {
  std::ifstream is(p);
  if (!is) throw std::runtime_error("missing " + p.string());
  Csv c;
  std::string line;
  std::getline(is, line);
  c.header = split_line(line);
  while (std::getline(is, line)) {
    const auto cells = split_line(line);
    std::map<std::string, std::string> row;
    for (std::size_t i = 0; i < c.header.size() && i < cells.size(); ++i) row[c.header[i]] = cells[i];
    c.rows.push_back(std::move(row));
  }
  return c;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

struct Run {
  int status = -1;
  Json summary;
  fs::path dir;
  const Json& res() const { return summary.at("results"); }
};

struct Verdict {
  bool pass = false;
  std::string detail;
};

std::string num(double v) {
  std::ostringstream ss;
  ss.precision(4);
  ss << v;
  return ss.str();
}

Verdict failed_run(const std::string& name, const Run& r) {
  return {false, name + " exited with status " + std::to_string(r.status)};
}

Verdict criterion1(const Run& r) {
  if (r.status != 0) return failed_run("c1_optimize", r);
  const Csv t = read_csv(r.dir / "bound_table.csv");
  bool ok = !t.rows.empty();
  double worst = -1e300;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double slack = t.num(i, "J") - (2.0 / t.num(i, "T") + 4.0 * t.num(i, "std_error"));
    worst = std::max(worst, slack);
    ok = ok && slack <= 0.0;
  }
  double slowest = 0.0;
  for (const auto& run : r.res().at("runs")) slowest = std::max(slowest, run.at("seconds").get<double>());
  ok = ok && slowest < 60.0 && t.rows.size() == 18;
  return {ok, std::to_string(t.rows.size()) + " (matrix, T) rows; max J - (2/T + 4se) = " + num(worst) +
                  "; slowest run " + num(slowest) + " s"};
}

Verdict criterion2(const Run& r) {
  if (r.status != 0) return failed_run("c2_normalization", r);
  const Csv t = read_csv(r.dir / "normalization.csv");
  double worst = 0.0, max_norm = 0.0;
  std::map<std::string, int> dims;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    worst = std::max(worst, std::abs(t.num(i, "error")));
    max_norm = std::max(max_norm, t.num(i, "hs_norm"));
    ++dims[t.rows[i].at("dim")];
  }
  const double secs = r.res().at("normalization").at("seconds").get<double>();
  const bool ok = t.rows.size() == 20 && dims.size() == 3 && max_norm < 0.5 && worst < 1e-6 && secs < 10.0;
  return {ok, "20 matrices, max |integral - 1| = " + num(worst) + ", max |C| = " + num(max_norm) + ", " + num(secs) + " s"};
}

Verdict criterion3(const Run& r) {
  if (r.status != 0) return failed_run("c3_expflow", r);
  const Csv w = read_csv(r.dir / "weak_residual.csv");
  const Csv m = read_csv(r.dir / "mass.csv");
  double wr = 0.0, me = 0.0;
  for (std::size_t i = 0; i < w.rows.size(); ++i) wr = std::max(wr, std::abs(w.num(i, "residual")));
  for (std::size_t i = 0; i < m.rows.size(); ++i) me = std::max(me, std::abs(m.num(i, "error")));
  const bool ok = w.rows.size() >= 10 && wr < 1e-4 && me < 1e-8;
  return {ok, std::to_string(w.rows.size()) + " test functions, max weak residual " + num(wr) + ", max mass error " + num(me)};
}

Verdict criterion4(const Run& r) {
  if (r.status != 0) return failed_run("c4_commutator_smooth", r);
  const Csv t = read_csv(r.dir / "defect_report.csv");
  std::vector<double> eps, v;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    if (t.rows[i].at("beta") != t.rows[0].at("beta")) continue;
    eps.push_back(t.num(i, "eps"));
    v.push_back(t.num(i, "residual_pairing"));
  }
  bool monotone = v.size() == 4;
  for (std::size_t i = 1; i < v.size(); ++i) monotone = monotone && v[i] < v[i - 1];
  const double limit = renorm::extrapolate_to_zero(eps, v);
  const bool solution = r.res().at("is_solution").get<bool>();
  const bool ok = monotone && solution && std::abs(limit) <= 1e-3 * v.front();
  return {ok, "pairing " + num(v.front()) + " -> " + num(v.back()) + (monotone ? " (monotone)" : " (NOT monotone)") +
                  ", extrapolated " + num(limit) + " vs 1e-3*initial = " + num(1e-3 * v.front())};
}

Verdict criterion5(const Run& r) {
  if (r.status != 0) return failed_run("c5_aniso_bv", r);
  const Csv t = read_csv(r.dir / "defect_report.csv");
  bool chain = !t.rows.empty();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const double slack = 4.0 * std::hypot(t.num(i, "residual_se"), t.num(i, "aniso_se"));
    chain = chain && t.num(i, "residual_pairing") <= t.num(i, "rhs") + slack;
  }
  const Csv lim = read_csv(r.dir / "limits.csv");
  double a1 = NAN, s1 = NAN, a20 = NAN, s20 = NAN;
  for (std::size_t i = 0; i < lim.rows.size(); ++i) {
    if (lim.rows[i].at("kernel") == "one") a1 = lim.num(i, "aniso_limit"), s1 = lim.num(i, "aniso_se");
    if (lim.rows[i].at("kernel") == "flow:T=20") a20 = lim.num(i, "aniso_limit"), s20 = lim.num(i, "aniso_se");
  }
  const double tv = r.res().at("tv_jump").get<double>();
  const double e_hat = a1 / tv;  // measured E|y1 y2|
  const double predicted = (2.0 / 20.0) / e_hat;
  const double ratio = a20 / a1;
  const double ratio_se = ratio * std::hypot(s20 / a20, s1 / a1);
  const bool ok = chain && std::isfinite(ratio) && ratio <= predicted + 4.0 * ratio_se;
  return {ok, std::string("chain ") + (chain ? "holds" : "FAILS") + " at every eps; aniso(T=20)/aniso(1) = " + num(ratio) +
                  " vs (2/T)/E|y1y2| = " + num(predicted) + " (E|y1y2| measured " + num(e_hat) + ", 2/pi = " +
                  num(2.0 / M_PI) + ")"};
}

Verdict criterion6(const Run& r) {
  if (r.status != 0) return failed_run("c6_cyl", r);
  const Csv t = read_csv(r.dir / "cyl_study.csv");
  double gap = 0.0, tv_excess = -1e300;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const std::string g = t.rows[i].at("identity_gap");
    if (g != "nan") gap = std::max(gap, std::abs(std::stod(g)));
    tv_excess = std::max(tv_excess, t.num(i, "tv_n") - t.num(i, "tv"));
  }
  const Json& res = r.res();
  const bool ok = gap < 1e-6 && tv_excess <= 1e-6 && res.at("l1_monotone_pass").get<bool>() &&
                  res.at("identity_pass").get<bool>() && res.at("tv_pass").get<bool>();
  int strict = 0;
  for (const auto& f : res.at("fields")) strict += f.at("strict_required").get<bool>() ? 1 : 0;
  return {ok, "max identity gap " + num(gap) + ", max |Db^N| - |Db| = " + num(tv_excess) + ", l1 gap strictly decreasing on " +
                  std::to_string(strict) + " full-dependence fields"};
}

Verdict criterion7(const Run& r) {
  if (r.status != 0) return failed_run("c7_identities", r);
  const Csv t = read_csv(r.dir / "identities.csv");
  double worst = 0.0;
  bool ok = !t.rows.empty();
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    worst = std::max(worst, t.num(i, "max_residual"));
    ok = ok && t.num(i, "samples") >= 100;
  }
  ok = ok && worst < 1e-6;
  return {ok, std::to_string(t.rows.size()) + " (identity, dim) rows, max residual " + num(worst)};
}

Verdict criterion8(const Run& line, const Run& disk) {
  if (line.status != 0) return failed_run("c8_neumann_interval", line);
  const Csv conv = read_csv(line.dir / "convergence.csv");
  const Csv cmp = read_csv(line.dir / "comparison.csv");
  const Json& res = line.res();
  const double order = res.at("residual_order").get<double>();
  const double const_err = res.at("constant_error").get<double>();
  bool comparison = !cmp.rows.empty();
  for (std::size_t i = 0; i < cmp.rows.size(); ++i) {
    const double fsup = std::max(std::abs(cmp.num(i, "f_max")), std::abs(cmp.num(i, "f_min")));
    const double lsup = std::max(std::abs(cmp.num(i, "lambda_max_eta")), std::abs(cmp.num(i, "lambda_min_eta")));
    comparison = comparison && lsup <= fsup + cmp.num(i, "tolerance");
  }
  for (std::size_t i = 0; i < conv.rows.size(); ++i) comparison = comparison && conv.flag(i, "comparison_pass");
  bool ok = conv.rows.size() == 6 && std::abs(order - 2.0) < 0.3 && const_err < 1e-10 && comparison;
  std::string detail = "1D residual order " + num(order) + " over 5 refinements, constant error " + num(const_err) +
                       ", comparison " + (comparison ? "holds" : "FAILS") + " on " + std::to_string(cmp.rows.size()) + " cases";
  if (disk.status == 0) {
    const bool dok = disk.res().at("comparison_pass").get<bool>() && disk.res().at("constant_error").get<double>() < 1e-10;
    ok = ok && dok;
    detail += "; disk order " + num(disk.res().at("residual_order").get<double>());
  } else {
    ok = false;
    detail += "; disk run failed";
  }
  return {ok, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const fs::path configs = RENORM_CONFIG_DIR;
  const fs::path out = argc > 1 ? fs::path(argv[1]) : fs::current_path() / "acceptance_out";
  fs::remove_all(out);

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(configs))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());

  std::map<std::string, Run> runs;
  for (const auto& f : files) {
    Run r;
    r.dir = out / "a" / f.stem();
    r.status = renorm::run_and_emit(renorm::load_config(f), r.dir, &r.summary);
    runs[f.stem().string()] = r;
  }
  auto get = [&](const std::string& name) -> const Run& {
    static const Run missing;
    auto it = runs.find(name);
    return it == runs.end() ? missing : it->second;
  };

  std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"optimization bound J <= 2/T", [&] { return criterion1(get("c1_optimize")); }},
      {"change-of-variables normalization", [&] { return criterion2(get("c2_normalization")); }},
      {"exponential-flow solution", [&] { return criterion3(get("c3_expflow")); }},
      {"commutator decay, smooth field", [&] { return criterion4(get("c4_commutator_smooth")); }},
      {"anisotropic estimate, BV field", [&] { return criterion5(get("c5_aniso_bv")); }},
      {"cylindrical approximation", [&] { return criterion6(get("c6_cyl")); }},
      {"rotation identities", [&] { return criterion7(get("c7_identities")); }},
      {"Neumann example", [&] { return criterion8(get("c8_neumann_interval"), get("c8_neumann_disk")); }},
      {"reproducibility", [&] {
         int compared = 0;
         std::string bad;
         for (const auto& f : files) {
           const fs::path again = out / "b" / f.stem();
           renorm::run_and_emit(renorm::load_config(f), again, nullptr);
           for (const auto& e : fs::directory_iterator(out / "a" / f.stem())) {
             if (e.path().extension() != ".csv") continue;
             ++compared;
             if (slurp(e.path()) != slurp(again / e.path().filename()))
               bad += " " + f.stem().string() + "/" + e.path().filename().string();
           }
         }
         return Verdict{bad.empty() && compared > 0,
                        std::to_string(files.size()) + " configs, " + std::to_string(compared) + " CSV files" +
                            (bad.empty() ? " byte-identical" : "; differ:" + bad)};
       }}};

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("error: ") + e.what()};
    }
    failures += v.pass ? 0 : 1;
    std::cout << "criterion " << i + 1 << " " << (v.pass ? "PASS" : "FAIL") << "  " << criteria[i].first << ": "
              << v.detail << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
