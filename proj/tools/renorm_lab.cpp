// renorm_lab: batch experiment runner.
//
//   renorm_lab defect --field sign-x2 --kernels flow:T=1,5,20 --eps 0.2:0.025
//   renorm_lab optimize --matrix e11 --T 1,5,20
//   renorm_lab neumann --domain interval --f x --lambda 1 --refine 5
//   renorm_lab run --config configs/c4_commutator_smooth.json
//
// Flags override values from --config. Exit status: 0 ok, 2 bad config, 3 numeric failure.

#include "renorm/experiment.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>

namespace {

using renorm::Json;

// JSON literal when it parses as one (numbers, arrays, objects, booleans), else a plain string.
Json flag_value(const std::string& s) {
  if (!s.empty() && (s.front() == '{' || s.front() == '[' || s == "true" || s == "false")) return Json::parse(s);
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos == s.size()) {
      if (s.find_first_of(".eE") == std::string::npos) return Json(std::stoll(s));
      return Json(v);
    }
  } catch (const std::exception&) {
  }
  return Json(s);
}

struct Command {
  CLI::App* app = nullptr;
  std::string config, out;
  std::int64_t seed = -1;
  std::map<std::string, std::string> overrides;  // json key -> raw flag text
};

void add_override(Command& c, const std::string& flag, const std::string& key, const std::string& help) {
  c.app->add_option_function<std::string>(flag, [&c, key](const std::string& v) { c.overrides[key] = v; }, help);
}

int dispatch(const Command& c, const std::string& kind) {
  Json cfg = Json::object();
  if (!c.config.empty()) cfg = renorm::load_config(c.config);
  if (!cfg.is_object()) throw renorm::DescriptorError("config must be a JSON object");
  if (kind != "run") {
    if (cfg.contains("experiment") && cfg["experiment"] != kind)
      throw renorm::DescriptorError("config is a '" + cfg["experiment"].get<std::string>() + "' experiment, not '" + kind + "'");
    cfg["experiment"] = kind;
  }
  for (const auto& [key, raw] : c.overrides) {
    Json* target = &cfg;
    std::string k = key;
    // "normalization.count" style keys address nested sections
    for (auto dot = k.find('.'); dot != std::string::npos; dot = k.find('.')) {
      target = &(*target)[k.substr(0, dot)];
      k = k.substr(dot + 1);
    }
    (*target)[k] = flag_value(raw);
  }
  if (c.seed >= 0) cfg["seed"] = c.seed;
  std::string out = c.out;
  if (out.empty()) out = cfg.contains("output_dir") ? cfg["output_dir"].get<std::string>() : "renorm_out/" + cfg.value("experiment", kind);

  Json summary;
  const int status = renorm::run_and_emit(cfg, out, &summary);
  if (status == 0)
    std::cout << "wrote " << out << " (" << summary["seconds"].get<double>() << " s)\n";
  else
    std::cerr << "renorm_lab: " << (status == 2 ? "config error" : "numeric failure") << "; see " << out << "/failure.json\n";
  return status;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Renormalization and commutator-estimate experiments on truncated Gaussian spaces"};
  app.set_version_flag("--version", renorm::version_string());
  app.require_subcommand(1);

  const std::vector<std::string> kinds{"run", "defect", "optimize", "expflow", "cylapprox", "neumann", "identities"};
  std::map<std::string, Command> cmds;
  for (const auto& k : kinds) {
    Command& c = cmds[k];
    c.app = app.add_subcommand(k, k == "run" ? "run the experiment named in --config" : k + " experiment");
    c.app->add_option("--config,-c", c.config, "JSON config file")->check(CLI::ExistingFile);
    c.app->add_option("--out,-o", c.out, "output directory");
    c.app->add_option("--seed", c.seed, "master seed")->check(CLI::NonNegativeNumber);
    if (k == "run") c.app->get_option("--config")->required();
  }
  add_override(cmds["defect"], "--dim", "dim", "ambient dimension");
  add_override(cmds["defect"], "--field", "field", "field descriptor, e.g. sign-x2 or linear:random");
  add_override(cmds["defect"], "--kernels", "kernels", "kernel descriptor, e.g. flow:T=1,5,20");
  add_override(cmds["defect"], "--limit-kernels", "limit_kernels", "kernels evaluated in the limit only");
  add_override(cmds["defect"], "--eps", "eps", "epsilon grid, e.g. 0.2:0.025");
  add_override(cmds["defect"], "--phis", "phis", "test functions");
  add_override(cmds["defect"], "--solution", "solution", "one, flow, a number or {\"expr\": ...}");
  add_override(cmds["optimize"], "--matrix", "matrix", "matrix descriptor");
  add_override(cmds["optimize"], "--dim", "dim", "dimension");
  add_override(cmds["optimize"], "--T", "T", "horizons, e.g. 1,5,20");
  add_override(cmds["optimize"], "--mode", "mode", "gaussian or lebesgue");
  add_override(cmds["expflow"], "--count", "normalization.count", "random matrices for the normalization check");
  add_override(cmds["expflow"], "--matrix", "flow.matrix", "flow matrix descriptor");
  add_override(cmds["cylapprox"], "--fields", "fields", "JSON array of field descriptors");
  add_override(cmds["cylapprox"], "--dim", "dim", "ambient dimension");
  add_override(cmds["neumann"], "--domain", "domain", "interval, disk, or a JSON domain");
  add_override(cmds["neumann"], "--f", "f", "right-hand side expression");
  add_override(cmds["neumann"], "--lambda", "lambda", "zeroth-order coefficient");
  add_override(cmds["neumann"], "--refine", "refine", "uniform refinements");
  add_override(cmds["identities"], "--samples", "samples", "random points per identity");
  add_override(cmds["identities"], "--dims", "dims", "dimensions, e.g. 1,2,3");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  for (const auto& k : kinds) {
    if (!cmds[k].app->parsed()) continue;
    try {
      return dispatch(cmds[k], k);
    } catch (const renorm::DescriptorError& e) {
      std::cerr << "renorm_lab: " << e.what() << "\n";
      return 2;
    } catch (const Json::exception& e) {
      std::cerr << "renorm_lab: " << e.what() << "\n";
      return 2;
    } catch (const std::exception& e) {
      std::cerr << "renorm_lab: " << e.what() << "\n";
      return 3;
    }
  }
  return 2;
}
