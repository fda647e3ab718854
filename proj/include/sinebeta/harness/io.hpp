#pragma once

#include <filesystem>
#include <string>
#include <string_view>

#include <json.hpp>

#include "sinebeta/stats.hpp"

namespace sinebeta::harness {

inline constexpr int schema_version = 1;
inline constexpr std::string_view tool_version = "0.1.0";

/// Shortest round-trip decimal form; "nan", "inf" and "-inf" otherwise.
std::string format_double(double v);

/// Writes `content` to `path` through a sibling temporary file and a rename,
/// so readers never see a partial file.
void write_atomic(const std::filesystem::path& path, std::string_view content);

nlohmann::json to_json(const stats::TestReport& report);
/// Inverse of to_json. Throws std::runtime_error on missing fields.
stats::TestReport report_from_json(const nlohmann::json& j);

/// {"schema_version": 1, "records": [...]}, pretty-printed, trailing newline.
std::string report_document(const std::vector<stats::TestReport>& reports);

/// UTC time as 2024-01-31T12:00:00Z.
std::string utc_timestamp();

}  // namespace sinebeta::harness
