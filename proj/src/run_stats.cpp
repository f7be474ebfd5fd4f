#include "msar/run_stats.hpp"

#include "msar/error.hpp"

namespace msar {

json to_json(const RunStats& stats)
{
    return {
        {"attention_flops", stats.attention_flops()},
        {"attention_flops_cond", stats.attention_flops_cond},
        {"attention_flops_uncond", stats.attention_flops_uncond},
        {"linear_flops", stats.linear_flops},
        {"attn_map_elements", stats.attn_map_elements},
        {"attn_map_bytes", stats.attn_map_bytes()},
        {"weight_bytes", stats.weight_bytes},
    };
}

RunStats run_stats_from_json(const json& doc)
{
    try {
        RunStats stats;
        stats.attention_flops_cond = doc.at("attention_flops_cond").get<std::uint64_t>();
        stats.attention_flops_uncond = doc.at("attention_flops_uncond").get<std::uint64_t>();
        stats.linear_flops = doc.at("linear_flops").get<std::uint64_t>();
        stats.attn_map_elements = doc.at("attn_map_elements").get<std::uint64_t>();
        stats.weight_bytes = doc.at("weight_bytes").get<double>();
        return stats;
    } catch (const json::exception& e) {
        throw FormatError(std::string("run stats: ") + e.what());
    }
}

json to_json(const Techniques& techniques)
{
    json doc = {
        {"mdwa", nullptr},
        {"asc", techniques.asc},
        {"quant", nullptr},
    };
    if (techniques.mdwa_r0) {
        doc["mdwa"] = {{"r0", *techniques.mdwa_r0}, {"sink_parts", techniques.sink_parts}};
    }
    if (!techniques.quant.empty()) {
        doc["quant"] = {{"bitwidth", techniques.quant}, {"protected", techniques.protected_layers}};
    }
    return doc;
}

Techniques techniques_from_json(const json& doc)
{
    try {
        Techniques t;
        t.asc = doc.at("asc").get<bool>();
        if (!doc.at("mdwa").is_null()) {
            t.mdwa_r0 = doc["mdwa"].at("r0").get<double>();
            t.sink_parts = doc["mdwa"].at("sink_parts").get<std::size_t>();
        }
        if (!doc.at("quant").is_null()) {
            t.quant = doc["quant"].at("bitwidth").get<std::string>();
            t.protected_layers = doc["quant"].at("protected").get<std::vector<std::string>>();
        }
        return t;
    } catch (const json::exception& e) {
        throw FormatError(std::string("techniques: ") + e.what());
    }
}

} // namespace msar
