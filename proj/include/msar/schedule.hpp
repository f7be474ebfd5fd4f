#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace msar {

// Side lengths s_1..s_K of the square token grids, coarse to fine. Scale
// indices in the public API are 1-based to match how scales are usually
// discussed; containers indexed by scale are 0-based internally.
class ScaleSchedule {
public:
    ScaleSchedule() = default;
    explicit ScaleSchedule(std::vector<std::size_t> sides);

    std::size_t scale_count() const noexcept { return sides_.size(); }
    std::span<const std::size_t> sides() const noexcept { return sides_; }

    // Side length of scale k (1-based).
    std::size_t side(std::size_t k) const;
    // s_k^2
    std::size_t token_count(std::size_t k) const;
    // Sum of s_i^2 for i in 1..k; cum_tokens(0) is 0.
    std::size_t cum_tokens(std::size_t k) const;
    std::size_t total_tokens() const { return cum_tokens(scale_count()); }

    // Stable identifier for files produced against this schedule.
    std::string fingerprint() const;

    friend bool operator==(const ScaleSchedule&, const ScaleSchedule&) = default;

private:
    std::vector<std::size_t> sides_;
    std::vector<std::size_t> cumulative_;
};

std::size_t cum_tokens(const ScaleSchedule& schedule, std::size_t k);

ScaleSchedule default_schedule();
// The ten-scale layout used by the reference 256x256 model.
ScaleSchedule var10_schedule();

// 64-bit FNV-1a rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view text);

} // namespace msar
