#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <string_view>

namespace msar {

using json = nlohmann::json;

// Major.minor of every JSON document this library writes.
inline constexpr std::string_view kFormatVersion = "1.0";

json read_json_file(const std::filesystem::path& path);
void write_json_file(const std::filesystem::path& path, const json& doc);

// Throws FormatError unless doc["version"] carries a supported major version.
void require_format_version(const json& doc, std::string_view what);

} // namespace msar
