#include "msar/pattern.hpp"

#include "msar/error.hpp"

#include <algorithm>

namespace msar {

PartLayout partition(const ScaleSchedule& schedule, std::size_t k)
{
    if (k < 1 || k > schedule.scale_count()) {
        throw RangeError("partition: scale index " + std::to_string(k) + " out of range");
    }
    PartLayout layout;
    layout.scale = k;
    const std::size_t merged_last = std::min<std::size_t>(k, 3);
    layout.parts.push_back(Part{0, schedule.cum_tokens(merged_last), 1, merged_last});
    for (std::size_t m = 4; m <= k; ++m) {
        layout.parts.push_back(Part{schedule.cum_tokens(m - 1), schedule.cum_tokens(m), m, m});
    }
    return layout;
}

std::size_t diagonal_center(std::size_t q, std::size_t s_k, std::size_t s_m)
{
    const std::size_t qy = q / s_k;
    const std::size_t qx = q % s_k;
    return (qy * s_m / s_k) * s_m + (qx * s_m / s_k);
}

std::vector<std::size_t> part_centers(const ScaleSchedule& schedule, std::size_t k, const Part& part)
{
    if (!part.single_scale()) {
        throw InputError("part_centers: merged parts have no diagonal centers");
    }
    const std::size_t s_k = schedule.side(k);
    const std::size_t s_m = schedule.side(part.first_scale);
    std::vector<std::size_t> centers(s_k * s_k);
    for (std::size_t q = 0; q < centers.size(); ++q) {
        centers[q] = diagonal_center(q, s_k, s_m);
    }
    return centers;
}

BandRange band_range(std::size_t center, std::size_t w, std::size_t width)
{
    if (w == 0 || width == 0) {
        return {0, 0};
    }
    const std::size_t reach = w - 1;
    const std::size_t first = center > reach ? center - reach : 0;
    const std::size_t last = std::min(width, center + reach + 1);
    if (first >= last) {
        return {0, 0};
    }
    return {first, last};
}

PartWidth WindowPattern::width(std::size_t scale, std::size_t block, std::size_t head, std::size_t part) const
{
    const auto it = entries.find(PatternKey{scale, block, head, part});
    return it == entries.end() ? PartWidth{} : it->second;
}

bool WindowPattern::all_full() const
{
    return std::all_of(entries.begin(), entries.end(), [](const auto& kv) { return !kv.second.has_value(); });
}

WindowPattern full_pattern(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads)
{
    WindowPattern pattern;
    pattern.r0 = 1.0;
    pattern.schedule = schedule;
    pattern.depth = depth;
    pattern.heads = heads;
    for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
        const std::size_t parts = partition(schedule, k).parts.size();
        for (std::size_t b = 0; b < depth; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                for (std::size_t p = 1; p <= parts; ++p) {
                    pattern.entries[{k, b, h, p}] = std::nullopt;
                }
            }
        }
    }
    return pattern;
}

json to_json(const WindowPattern& pattern)
{
    json entries = json::array();
    for (const auto& [key, width] : pattern.entries) {
        json entry = {{"scale", key.scale}, {"block", key.block}, {"head", key.head}, {"part", key.part}};
        if (width) {
            entry["width"] = *width;
        } else {
            entry["width"] = "FULL";
        }
        entries.push_back(std::move(entry));
    }
    return {
        {"version", kFormatVersion},
        {"r0", pattern.r0},
        {"sink_parts", pattern.sink_parts},
        {"schedule", std::vector<std::size_t>(pattern.schedule.sides().begin(), pattern.schedule.sides().end())},
        {"fingerprint", pattern.fingerprint()},
        {"depth", pattern.depth},
        {"heads", pattern.heads},
        {"entries", std::move(entries)},
    };
}

WindowPattern pattern_from_json(const json& doc)
{
    require_format_version(doc, "pattern");
    WindowPattern pattern;
    try {
        pattern.r0 = doc.at("r0").get<double>();
        pattern.sink_parts = doc.at("sink_parts").get<std::size_t>();
        pattern.schedule = ScaleSchedule(doc.at("schedule").get<std::vector<std::size_t>>());
        pattern.depth = doc.at("depth").get<std::size_t>();
        pattern.heads = doc.at("heads").get<std::size_t>();
        if (doc.at("fingerprint").get<std::string>() != pattern.fingerprint()) {
            throw FormatError("pattern: fingerprint does not match its schedule");
        }
        for (const auto& entry : doc.at("entries")) {
            PatternKey key{entry.at("scale").get<std::size_t>(), entry.at("block").get<std::size_t>(),
                           entry.at("head").get<std::size_t>(), entry.at("part").get<std::size_t>()};
            const auto& w = entry.at("width");
            if (w.is_string()) {
                if (w.get<std::string>() != "FULL") {
                    throw FormatError("pattern: width must be an integer or \"FULL\"");
                }
                pattern.entries[key] = std::nullopt;
            } else {
                pattern.entries[key] = w.get<std::size_t>();
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("pattern: ") + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(std::string("pattern: ") + e.what());
    }
    if (!(pattern.r0 > 0.0 && pattern.r0 <= 1.0)) {
        throw FormatError("pattern: r0 outside (0, 1]");
    }
    return pattern;
}

WindowPattern load_pattern(const std::filesystem::path& path)
{
    return pattern_from_json(read_json_file(path));
}

void save_pattern(const std::filesystem::path& path, const WindowPattern& pattern)
{
    write_json_file(path, to_json(pattern));
}

} // namespace msar
