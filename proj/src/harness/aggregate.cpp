#include "sinebeta/harness/aggregate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>

#include "sinebeta/harness/io.hpp"

namespace sinebeta::harness {

namespace {

std::string lambda_config(const std::vector<double>& lambdas) {
  std::string s;
  for (double l : lambdas) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.6g", l);
    s += (s.empty() ? "" : ",") + std::string(buf);
  }
  return s;
}

std::string cell(double v) {
  if (std::isnan(v)) return "-";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::string pad(const std::string& s, std::size_t w) {
  return s.size() >= w ? s : s + std::string(w - s.size(), ' ');
}

}  // namespace

Aggregate aggregate_reports(const std::filesystem::path& dir) {
  Aggregate agg;
  std::vector<std::filesystem::path> files;
  if (std::filesystem::is_directory(dir)) {
    for (const auto& e : std::filesystem::recursive_directory_iterator(dir)) {
      if (e.is_regular_file() && e.path().filename() == "report.json") files.push_back(e.path());
    }
  } else {
    agg.warnings.push_back("not a directory: " + dir.string());
  }
  std::sort(files.begin(), files.end());

  bool malformed = false;
  for (const auto& f : files) {
    std::string run = std::filesystem::relative(f.parent_path(), dir).generic_string();
    if (run == ".") run = std::filesystem::weakly_canonical(dir).filename().string();
    std::vector<AggregateRow> rows;
    try {
      std::ifstream in(f);
      const auto doc = nlohmann::json::parse(in);
      if (doc.at("schema_version").get<int>() != schema_version) {
        throw std::runtime_error("unsupported schema_version");
      }
      for (const auto& rec : doc.at("records")) {
        AggregateRow row;
        row.run = run;
        row.report = report_from_json(rec);
        row.lambda_config = lambda_config(row.report.metadata.lambdas);
        rows.push_back(std::move(row));
      }
    } catch (const std::exception& e) {
      malformed = true;
      agg.warnings.push_back("skipped " + f.string() + ": " + e.what());
      continue;
    }
    ++agg.files;
    for (auto& r : rows) agg.rows.push_back(std::move(r));
  }

  if (agg.files == 0) agg.warnings.push_back("no readable report.json found");

  auto key = [](const AggregateRow& r) {
    return std::make_tuple(r.report.suite, r.report.name, r.lambda_config);
  };
  std::stable_sort(agg.rows.begin(), agg.rows.end(), [&](const auto& a, const auto& b) {
    if (key(a) != key(b)) return key(a) < key(b);
    if (a.report.metadata.beta != b.report.metadata.beta) {
      return a.report.metadata.beta > b.report.metadata.beta;
    }
    return a.run < b.run;
  });
  for (std::size_t i = 0; i < agg.rows.size(); ++i) {
    auto& r = agg.rows[i];
    r.trend = "-";
    if (i == 0 || key(agg.rows[i - 1]) != key(r)) continue;
    const auto& prev = agg.rows[i - 1];
    if (prev.report.metadata.beta == r.report.metadata.beta) continue;
    const double d = r.report.statistic - prev.report.statistic;
    r.trend = d < 0 ? "down" : d > 0 ? "up" : "flat";
  }

  bool all_pass = true;
  std::ostringstream text;
  const std::vector<std::pair<std::string, std::size_t>> cols = {
      {"suite", 13}, {"name", 44}, {"beta", 10}, {"lambdas", 22}, {"statistic", 13},
      {"p_value", 12}, {"pass", 6}, {"trend", 6}, {"run", 0}};
  for (const auto& [c, w] : cols) text << pad(c, w) << (w ? " " : "");
  text << "\n";
  auto rows_json = nlohmann::json::array();
  for (const auto& r : agg.rows) {
    const bool pass = r.report.pass();
    all_pass = all_pass && pass;
    const std::vector<std::string> values = {
        r.report.suite,
        r.report.name,
        cell(r.report.metadata.beta),
        r.lambda_config,
        cell(r.report.statistic),
        r.report.p_value ? cell(*r.report.p_value) : "-",
        pass ? "yes" : "no",
        r.trend,
        r.run};
    for (std::size_t k = 0; k < cols.size(); ++k) {
      text << pad(values[k], cols[k].second) << (cols[k].second ? " " : "");
    }
    text << "\n";
    auto j = to_json(r.report);
    j["run"] = r.run;
    j["lambda_config"] = r.lambda_config;
    j["trend"] = r.trend;
    rows_json.push_back(j);
  }
  for (const auto& w : agg.warnings) text << "warning: " << w << "\n";
  agg.text = text.str();

  agg.json["schema_version"] = schema_version;
  agg.json["files"] = agg.files;
  agg.json["rows"] = rows_json;
  agg.json["warnings"] = agg.warnings;

  if (malformed || agg.files == 0) {
    agg.exit_status = 2;
  } else {
    agg.exit_status = all_pass ? 0 : 1;
  }
  agg.json["warnings"] = agg.warnings;
  agg.json["exit_status"] = agg.exit_status;
  return agg;
}

}  // namespace sinebeta::harness
