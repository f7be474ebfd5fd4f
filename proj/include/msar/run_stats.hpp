#pragma once

#include "msar/io.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace msar {

// Counters accumulated during one generation run (both CFG streams).
struct RunStats {
    std::uint64_t attention_flops_cond = 0;
    std::uint64_t attention_flops_uncond = 0;
    std::uint64_t linear_flops = 0;
    // Post-softmax attention entries actually computed (visible keys only).
    std::uint64_t attn_map_elements = 0;
    // Bytes of the seven quantizable layer types under the run's precision.
    double weight_bytes = 0.0;

    std::uint64_t attention_flops() const { return attention_flops_cond + attention_flops_uncond; }
    // Attention maps held as f32.
    std::uint64_t attn_map_bytes() const { return attn_map_elements * 4; }

    friend bool operator==(const RunStats&, const RunStats&) = default;
};

// Which compression techniques a run used.
struct Techniques {
    std::optional<double> mdwa_r0;
    std::size_t sink_parts = 0;
    bool asc = false;
    // W/A/QKV label such as "4/8/8+MP"; empty when unquantized.
    std::string quant;
    std::vector<std::string> protected_layers;

    friend bool operator==(const Techniques&, const Techniques&) = default;
};

json to_json(const RunStats& stats);
RunStats run_stats_from_json(const json& doc);
json to_json(const Techniques& techniques);
Techniques techniques_from_json(const json& doc);

} // namespace msar
