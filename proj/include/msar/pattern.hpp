#pragma once

#include "msar/io.hpp"
#include "msar/schedule.hpp"

#include <compare>
#include <cstddef>
#include <map>
#include <optional>
#include <vector>

namespace msar {

// A contiguous key-axis segment of a scale's attention map.
struct Part {
    std::size_t key_start = 0;
    std::size_t key_end = 0;   // exclusive
    std::size_t first_scale = 1;
    std::size_t last_scale = 1;

    std::size_t width() const noexcept { return key_end - key_start; }
    bool single_scale() const noexcept { return first_scale == last_scale; }

    friend bool operator==(const Part&, const Part&) = default;
};

struct PartLayout {
    std::size_t scale = 1;
    std::vector<Part> parts;
};

// Splits the key axis of scale k into max(k - 2, 1) parts: the first covers
// scales 1..min(k, 3) merged, then one part per later scale in ascending
// key order, ending with scale k itself.
PartLayout partition(const ScaleSchedule& schedule, std::size_t k);

// Flattened index of the scale-m token spatially aligned with query q of
// the s_k x s_k grid.
std::size_t diagonal_center(std::size_t q, std::size_t s_k, std::size_t s_m);

// Per-query centers for a single-scale part of scale k's layout.
std::vector<std::size_t> part_centers(const ScaleSchedule& schedule, std::size_t k, const Part& part);

// Half-open column range of band(q, w) = {j : |j - center| <= w - 1} clipped
// to [0, width). Empty for w == 0.
struct BandRange {
    std::size_t first = 0;
    std::size_t last = 0;
    std::size_t size() const noexcept { return last - first; }
};
BandRange band_range(std::size_t center, std::size_t w, std::size_t width);

// Window half-band width for one part; nullopt means FULL attention.
using PartWidth = std::optional<std::size_t>;

struct PatternKey {
    std::size_t scale = 1;
    std::size_t block = 0;
    std::size_t head = 0;
    std::size_t part = 1; // 1-based part index

    friend auto operator<=>(const PatternKey&, const PatternKey&) = default;
};

struct WindowPattern {
    double r0 = 1.0;
    std::size_t sink_parts = 3;
    ScaleSchedule schedule;
    std::size_t depth = 0;
    std::size_t heads = 0;
    std::map<PatternKey, PartWidth> entries;

    std::string fingerprint() const { return schedule.fingerprint(); }
    // Missing entries are FULL.
    PartWidth width(std::size_t scale, std::size_t block, std::size_t head, std::size_t part) const;
    bool all_full() const;
};

WindowPattern full_pattern(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads);

json to_json(const WindowPattern& pattern);
WindowPattern pattern_from_json(const json& doc);
WindowPattern load_pattern(const std::filesystem::path& path);
void save_pattern(const std::filesystem::path& path, const WindowPattern& pattern);

} // namespace msar
