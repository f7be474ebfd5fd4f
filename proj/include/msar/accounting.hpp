#pragma once

#include "msar/config.hpp"
#include "msar/generate.hpp"
#include "msar/io.hpp"
#include "msar/run_stats.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

namespace msar {

struct PrecisionPlan;
struct WindowPattern;

// Sum over scales of s_k^2 * cum_tokens(k) * depth * heads * bytes_per_elem.
// With a pattern the visible-key count of each row replaces cum_tokens(k).
std::uint64_t attn_map_bytes(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads,
                             std::size_t bytes_per_elem, const WindowPattern* pattern = nullptr);

// Bytes of the seven quantizable layer types: 2 per FP parameter, B/8 per
// B-bit parameter. A null plan is the all-FP16 model.
double weight_bytes(const ModelConfig& config, const PrecisionPlan* plan);

// Everything a generation run leaves behind, as stored in run.json.
struct RunRecord {
    ModelConfig config;
    std::size_t label = 0;
    double cfg_scale = 0.0;
    Techniques techniques;
    RunStats stats;
    TokenMapSet tokens;
    std::vector<Matrix> logits;
    // Set when the run was fed another run's tokens.
    bool teacher_forced = false;
};

RunRecord make_run_record(const ModelConfig& config, std::size_t label, const SamplerConfig& sampler,
                          GenerationResult result, bool teacher_forced = false);
json to_json(const RunRecord& record);
RunRecord run_record_from_json(const json& doc);

struct SavingsReport {
    ModelConfig config;
    Techniques techniques;

    std::uint64_t attention_flops_baseline = 0;
    std::uint64_t attention_flops_compressed = 0;
    double attention_saving = 0.0;
    std::uint64_t linear_flops_baseline = 0;
    std::uint64_t linear_flops_compressed = 0;

    std::uint64_t attn_map_bytes_baseline = 0;
    std::uint64_t attn_map_bytes_compressed = 0;
    double weight_bytes_baseline = 0.0;
    double weight_bytes_compressed = 0.0;

    double logits_rel_l2 = 0.0;
    std::vector<double> per_scale_logits_rel_l2;
    double token_disagreement = 0.0;
    std::vector<double> per_scale_token_disagreement;

    // Estimator output for a hypothetical larger schedule; never measured.
    struct Projection {
        ScaleSchedule schedule;
        std::uint64_t attention_flops_full = 0;
        std::uint64_t attn_map_bytes_full = 0;
    };
    std::optional<Projection> projection;
};

// Throws InputError when the runs come from different model configs.
SavingsReport make_report(const RunRecord& baseline, const RunRecord& compressed);
SavingsReport::Projection project(const ModelConfig& config, const ScaleSchedule& schedule);

json to_json(const SavingsReport& report);

} // namespace msar
