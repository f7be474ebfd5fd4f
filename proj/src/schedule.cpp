#include "msar/schedule.hpp"

#include "msar/error.hpp"

#include <cstdint>
#include <cstdio>

namespace msar {

ScaleSchedule::ScaleSchedule(std::vector<std::size_t> sides) : sides_(std::move(sides))
{
    if (sides_.empty()) {
        throw ConfigError("schedule must contain at least one scale");
    }
    std::size_t running = 0;
    cumulative_.reserve(sides_.size() + 1);
    cumulative_.push_back(0);
    for (std::size_t i = 0; i < sides_.size(); ++i) {
        if (sides_[i] == 0) {
            throw ConfigError("schedule sides must be >= 1");
        }
        if (i > 0 && sides_[i] < sides_[i - 1]) {
            throw ConfigError("schedule sides must be non-decreasing");
        }
        running += sides_[i] * sides_[i];
        cumulative_.push_back(running);
    }
}

std::size_t ScaleSchedule::side(std::size_t k) const
{
    if (k < 1 || k > sides_.size()) {
        throw RangeError("scale index " + std::to_string(k) + " outside 1.." + std::to_string(sides_.size()));
    }
    return sides_[k - 1];
}

std::size_t ScaleSchedule::token_count(std::size_t k) const
{
    const std::size_t s = side(k);
    return s * s;
}

std::size_t ScaleSchedule::cum_tokens(std::size_t k) const
{
    if (k > sides_.size()) {
        throw RangeError("scale index " + std::to_string(k) + " outside 1.." + std::to_string(sides_.size()));
    }
    return cumulative_[k];
}

std::string ScaleSchedule::fingerprint() const
{
    std::string text = "schedule:";
    for (std::size_t i = 0; i < sides_.size(); ++i) {
        if (i > 0) {
            text += ',';
        }
        text += std::to_string(sides_[i]);
    }
    return fnv1a_hex(text);
}

std::size_t cum_tokens(const ScaleSchedule& schedule, std::size_t k)
{
    if (k < 1) {
        throw RangeError("scale index must be >= 1");
    }
    return schedule.cum_tokens(k);
}

ScaleSchedule default_schedule()
{
    return ScaleSchedule({1, 2, 3, 4, 5, 6});
}

ScaleSchedule var10_schedule()
{
    return ScaleSchedule({1, 2, 3, 4, 5, 6, 8, 10, 13, 16});
}

std::string fnv1a_hex(std::string_view text)
{
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char c : text) {
        hash ^= c;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

} // namespace msar
