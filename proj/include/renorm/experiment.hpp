#pragma once

// Batch experiments: one JSON config in, CSV tables and summary.json out.

#include "renorm/descriptors.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace renorm {

inline constexpr const char* kSchemaId = "renorm-lab/report-v1";

/// git-describe-style version of the build.
std::string version_string();

struct Table {
  std::string file;  // e.g. "defect_report.csv"
  std::vector<std::string> columns;
  std::vector<std::vector<std::string>> rows;

  void add(std::vector<std::string> row);
};

/// Shortest round-trip decimal for finite values; "nan", "inf", "-inf" otherwise.
std::string fmt(double v);
std::string fmt(bool v);

struct Artifacts {
  std::vector<Table> tables;
  Json summary = Json::object();
};

/// Header line, then one line per row; an empty table is header-only.
void write_csv(const Table& t, const std::filesystem::path& dir);

/// Runs the experiment described by `cfg` and fills `out`. Throws
/// DescriptorError for bad configs; numeric failures propagate as other
/// exceptions with whatever tables were completed left in `out`.
void run_experiment(const Json& cfg, Artifacts& out);

/// Full run with files: tables, summary.json (config echo, version, schema id)
/// and failure.json on numeric failure. Returns 0, 2 (config) or 3 (numeric).
int run_and_emit(const Json& cfg, const std::filesystem::path& out_dir, Json* summary = nullptr);

Json load_config(const std::filesystem::path& path);

}  // namespace renorm
