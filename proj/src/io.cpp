#include "msar/io.hpp"

#include "msar/error.hpp"

#include <fstream>
#include <string>

namespace msar {

json read_json_file(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc)
{
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out << doc.dump(2) << '\n';
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

void require_format_version(const json& doc, std::string_view what)
{
    if (!doc.is_object() || !doc.contains("version") || !doc["version"].is_string()) {
        throw FormatError(std::string(what) + ": missing version field");
    }
    const auto version = doc["version"].get<std::string>();
    const auto major = version.substr(0, version.find('.'));
    const auto expected = kFormatVersion.substr(0, kFormatVersion.find('.'));
    if (major != expected) {
        throw FormatError(std::string(what) + ": unsupported major version " + version);
    }
}

} // namespace msar
