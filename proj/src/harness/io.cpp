#include "sinebeta/harness/io.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace sinebeta::harness {

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("double formatting failed");
  return std::string(buf, ptr);
}

void write_atomic(const std::filesystem::path& path, std::string_view content) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw std::runtime_error("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, path);
}

namespace {

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

double number_from(const nlohmann::json& j) {
  return j.is_null() ? std::nan("") : j.get<double>();
}

stats::Comparator parse_comparator(const std::string& s) {
  using stats::Comparator;
  if (s == "<") return Comparator::less;
  if (s == "<=") return Comparator::less_equal;
  if (s == ">") return Comparator::greater;
  if (s == ">=") return Comparator::greater_equal;
  throw std::runtime_error("unknown comparator '" + s + "'");
}

}  // namespace

nlohmann::json to_json(const stats::TestReport& r) {
  nlohmann::json j;
  j["suite"] = r.suite;
  j["name"] = r.name;
  j["statistic"] = number_or_null(r.statistic);
  j["reference"] = r.reference;
  j["p_value"] = r.p_value ? number_or_null(*r.p_value) : nlohmann::json(nullptr);
  j["pass"] = r.pass();
  j["n"] = r.n;
  auto checks = nlohmann::json::array();
  for (const auto& c : r.checks) {
    checks.push_back({{"name", c.name},
                      {"value", number_or_null(c.value)},
                      {"comparator", stats::comparator_symbol(c.comparator)},
                      {"threshold", number_or_null(c.threshold)},
                      {"holds", c.holds()}});
  }
  j["checks"] = checks;
  j["metadata"] = {{"beta", r.metadata.beta},
                   {"lambdas", r.metadata.lambdas},
                   {"seed", r.metadata.seed},
                   {"settings_hash", r.metadata.settings_hash}};
  auto details = nlohmann::json::object();
  for (const auto& [k, v] : r.details) details[k] = number_or_null(v);
  j["details"] = details;
  j["diagnostic"] = r.diagnostic;
  return j;
}

stats::TestReport report_from_json(const nlohmann::json& j) {
  try {
    stats::TestReport r;
    r.suite = j.at("suite").get<std::string>();
    r.name = j.at("name").get<std::string>();
    r.statistic = number_from(j.at("statistic"));
    r.reference = j.at("reference").get<std::string>();
    if (!j.at("p_value").is_null()) r.p_value = j.at("p_value").get<double>();
    r.n = j.at("n").get<std::size_t>();
    for (const auto& c : j.at("checks")) {
      r.checks.push_back({c.at("name").get<std::string>(), number_from(c.at("value")),
                          parse_comparator(c.at("comparator").get<std::string>()),
                          number_from(c.at("threshold"))});
    }
    const auto& m = j.at("metadata");
    r.metadata.beta = m.at("beta").get<double>();
    r.metadata.lambdas = m.at("lambdas").get<std::vector<double>>();
    r.metadata.seed = m.at("seed").get<std::uint64_t>();
    r.metadata.settings_hash = m.at("settings_hash").get<std::string>();
    for (const auto& [k, v] : j.at("details").items()) r.details[k] = number_from(v);
    r.diagnostic = j.value("diagnostic", "");
    if (j.at("pass").get<bool>() != r.pass()) {
      throw std::runtime_error("record '" + r.name + "' has a pass flag that contradicts its checks");
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed report record: ") + e.what());
  }
}

std::string report_document(const std::vector<stats::TestReport>& reports) {
  nlohmann::json doc;
  doc["schema_version"] = schema_version;
  auto records = nlohmann::json::array();
  for (const auto& r : reports) records.push_back(to_json(r));
  doc["records"] = records;
  return doc.dump(2) + "\n";
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace sinebeta::harness
