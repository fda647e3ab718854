#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "sinebeta/stats.hpp"

namespace sinebeta::harness {

struct AggregateRow {
  std::string run;  // report directory relative to the scanned root
  stats::TestReport report;
  std::string lambda_config;
  std::string trend;  // change of the statistic versus the next larger beta
};

struct Aggregate {
  std::vector<AggregateRow> rows;  // sorted by (suite, name, lambdas, beta desc, run)
  std::vector<std::string> warnings;
  std::size_t files = 0;
  std::string text;
  nlohmann::json json;
  /// 0: all records pass; 1: some record fails; 2: no readable report or a
  /// malformed file was skipped.
  int exit_status = 0;
};

/// Collects every report.json below `dir`.
Aggregate aggregate_reports(const std::filesystem::path& dir);

}  // namespace sinebeta::harness
