#include "msar/accounting.hpp"

#include "msar/error.hpp"
#include "msar/pattern.hpp"
#include "msar/precision.hpp"
#include "msar/sparse_attention.hpp"

#include <cmath>
#include <limits>

namespace msar {

std::uint64_t attn_map_bytes(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads,
                             std::size_t bytes_per_elem, const WindowPattern* pattern)
{
    std::uint64_t elements = 0;
    if (pattern == nullptr) {
        for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
            elements += static_cast<std::uint64_t>(schedule.token_count(k)) * schedule.cum_tokens(k);
        }
        return elements * depth * heads * bytes_per_elem;
    }
    if (pattern->depth != depth || pattern->heads != heads) {
        throw FingerprintError("attn_map_bytes: pattern depth/heads differ from the config");
    }
    for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
        for (std::size_t b = 0; b < depth; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                elements += pattern_to_mask(*pattern, schedule, k, b, h).visible_count();
            }
        }
    }
    return elements * bytes_per_elem;
}

double weight_bytes(const ModelConfig& config, const PrecisionPlan* plan)
{
    std::uint64_t bits = 0;
    for (LayerType type : kLayerTypes) {
        const std::uint64_t params = layer_parameter_count(config, type);
        std::optional<int> weight_bits;
        if (plan) {
            weight_bits = plan->at(type).weight_bits;
        }
        bits += params * static_cast<std::uint64_t>(weight_bits.value_or(16));
    }
    return static_cast<double>(bits) / 8.0;
}

RunRecord make_run_record(const ModelConfig& config, std::size_t label, const SamplerConfig& sampler,
                          GenerationResult result, bool teacher_forced)
{
    RunRecord record;
    record.config = config;
    record.label = label;
    record.cfg_scale = sampler.cfg_scale;
    record.techniques = std::move(result.techniques);
    record.stats = result.stats;
    record.tokens = std::move(result.tokens);
    record.logits = std::move(result.logits);
    record.teacher_forced = teacher_forced;
    return record;
}

json to_json(const RunRecord& record)
{
    json logits = json::array();
    for (const Matrix& m : record.logits) {
        logits.push_back(std::vector<double>(m.values().begin(), m.values().end()));
    }
    return {
        {"version", kFormatVersion},
        {"config", to_json(record.config)},
        {"label", record.label},
        {"cfg_scale", record.cfg_scale},
        {"teacher_forced", record.teacher_forced},
        {"techniques", to_json(record.techniques)},
        {"stats", to_json(record.stats)},
        {"token_maps", to_json(record.tokens, record.config.schedule)},
        {"logits", std::move(logits)},
    };
}

RunRecord run_record_from_json(const json& doc)
{
    require_format_version(doc, "run");
    RunRecord record;
    try {
        record.config = model_config_from_json(doc.at("config"));
        record.label = doc.at("label").get<std::size_t>();
        record.cfg_scale = doc.at("cfg_scale").get<double>();
        record.teacher_forced = doc.value("teacher_forced", false);
        record.techniques = techniques_from_json(doc.at("techniques"));
        record.stats = run_stats_from_json(doc.at("stats"));
        record.tokens = token_maps_from_json(doc.at("token_maps"), record.config.schedule);
        const auto& logits = doc.at("logits");
        if (logits.size() != record.config.schedule.scale_count()) {
            throw FormatError("run: logits scale count mismatch");
        }
        for (std::size_t k = 1; k <= record.config.schedule.scale_count(); ++k) {
            record.logits.emplace_back(record.config.schedule.token_count(k), record.config.vocab,
                                       logits[k - 1].get<std::vector<double>>());
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("run: ") + e.what());
    } catch (const ShapeError& e) {
        throw FormatError(std::string("run: ") + e.what());
    }
    return record;
}

namespace {

double ratio_saving(double baseline, double compressed)
{
    return baseline == 0.0 ? 0.0 : 1.0 - compressed / baseline;
}

double relative_l2(const Matrix& value, const Matrix& reference)
{
    const double denom = frobenius_norm(reference);
    const double num = frobenius_norm(value - reference);
    if (denom == 0.0) {
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return num / denom;
}

} // namespace

SavingsReport::Projection project(const ModelConfig& config, const ScaleSchedule& schedule)
{
    SavingsReport::Projection projection;
    projection.schedule = schedule;
    projection.attention_flops_full = attn_flops(schedule, config.depth, config.heads, config.head_dim()).full;
    projection.attn_map_bytes_full = attn_map_bytes(schedule, config.depth, config.heads, 4);
    return projection;
}

SavingsReport make_report(const RunRecord& baseline, const RunRecord& compressed)
{
    if (!(baseline.config == compressed.config)) {
        throw InputError("make_report: runs were produced by different model configs");
    }
    if (baseline.tokens.maps.size() != compressed.tokens.maps.size() ||
        baseline.logits.size() != compressed.logits.size()) {
        throw InputError("make_report: runs have different scale counts");
    }
    SavingsReport report;
    report.config = baseline.config;
    report.techniques = compressed.techniques;

    report.attention_flops_baseline = baseline.stats.attention_flops();
    report.attention_flops_compressed = compressed.stats.attention_flops();
    report.attention_saving = ratio_saving(static_cast<double>(report.attention_flops_baseline),
                                           static_cast<double>(report.attention_flops_compressed));
    report.linear_flops_baseline = baseline.stats.linear_flops;
    report.linear_flops_compressed = compressed.stats.linear_flops;
    report.attn_map_bytes_baseline = baseline.stats.attn_map_bytes();
    report.attn_map_bytes_compressed = compressed.stats.attn_map_bytes();
    report.weight_bytes_baseline = baseline.stats.weight_bytes;
    report.weight_bytes_compressed = compressed.stats.weight_bytes;

    std::size_t disagree_total = 0;
    std::size_t token_total = 0;
    double l2_sum = 0.0;
    for (std::size_t k = 0; k < baseline.logits.size(); ++k) {
        const double l2 = relative_l2(compressed.logits[k], baseline.logits[k]);
        report.per_scale_logits_rel_l2.push_back(l2);
        l2_sum += l2;

        const auto& a = baseline.tokens.maps[k];
        const auto& b = compressed.tokens.maps[k];
        if (a.size() != b.size()) {
            throw InputError("make_report: token map sizes differ");
        }
        std::size_t disagree = 0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            disagree += a[i] != b[i] ? 1 : 0;
        }
        report.per_scale_token_disagreement.push_back(a.empty() ? 0.0
                                                                : static_cast<double>(disagree) / static_cast<double>(a.size()));
        disagree_total += disagree;
        token_total += a.size();
    }
    report.logits_rel_l2 = baseline.logits.empty() ? 0.0 : l2_sum / static_cast<double>(baseline.logits.size());
    report.token_disagreement =
        token_total == 0 ? 0.0 : static_cast<double>(disagree_total) / static_cast<double>(token_total);
    return report;
}

json to_json(const SavingsReport& report)
{
    json doc = {
        {"version", kFormatVersion},
        {"config", to_json(report.config)},
        {"techniques", to_json(report.techniques)},
        {"flops",
         {{"attention_baseline", report.attention_flops_baseline},
          {"attention_compressed", report.attention_flops_compressed},
          {"attention_saving", report.attention_saving},
          {"linear_baseline", report.linear_flops_baseline},
          {"linear_compressed", report.linear_flops_compressed}}},
        {"bytes",
         {{"attn_map_baseline", report.attn_map_bytes_baseline},
          {"attn_map_compressed", report.attn_map_bytes_compressed},
          {"attn_map_saving", ratio_saving(static_cast<double>(report.attn_map_bytes_baseline),
                                           static_cast<double>(report.attn_map_bytes_compressed))},
          {"weight_baseline", report.weight_bytes_baseline},
          {"weight_compressed", report.weight_bytes_compressed}}},
        {"proxy_errors",
         {{"logits_rel_l2", report.logits_rel_l2},
          {"per_scale_logits_rel_l2", report.per_scale_logits_rel_l2},
          {"token_disagreement", report.token_disagreement},
          {"per_scale_token_disagreement", report.per_scale_token_disagreement}}},
        {"paper_context",
         {{"latency", "not measured; wall-clock speedups need dedicated sparse and low-bit kernels"},
          {"note", "all figures are analytical FLOPs and bytes of this toy model"}}},
    };
    if (report.projection) {
        doc["paper_context"]["projection"] = {
            {"label", "estimator output for a hypothetical schedule, not a measurement"},
            {"schedule", std::vector<std::size_t>(report.projection->schedule.sides().begin(),
                                                  report.projection->schedule.sides().end())},
            {"attention_flops_full", report.projection->attention_flops_full},
            {"attn_map_bytes_full_f32", report.projection->attn_map_bytes_full},
        };
    }
    return doc;
}

} // namespace msar
