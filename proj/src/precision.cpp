#include "msar/precision.hpp"

#include "msar/error.hpp"
#include "msar/quant.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace msar {

std::string PrecisionPlan::bitwidth_label() const
{
    auto bits = [](std::optional<int> b) { return std::to_string(b.value_or(16)); };
    std::string label = bits(target.weight_bits) + "/" + bits(target.act_bits) + "/" + bits(target.qkv_bits);
    if (!protected_layers.empty()) {
        label += "+MP";
    }
    return label;
}

namespace {

void check_target(const QuantTarget& target)
{
    if (target.weight_bits) {
        validate_bits(*target.weight_bits);
    }
    if (target.act_bits) {
        validate_bits(*target.act_bits);
    }
    if (target.qkv_bits) {
        validate_bits(*target.qkv_bits);
    }
}

} // namespace

PrecisionPlan uniform_plan(const QuantTarget& target)
{
    check_target(target);
    PrecisionPlan plan;
    plan.target = target;
    for (auto& layer : plan.layers) {
        layer = LayerPrecision{target.weight_bits, target.act_bits};
    }
    return plan;
}

PrecisionPlan single_layer_plan(LayerType type, const QuantTarget& target)
{
    check_target(target);
    PrecisionPlan plan;
    plan.target = QuantTarget{target.weight_bits, target.act_bits, std::nullopt};
    plan.layers[layer_type_index(type)] = LayerPrecision{target.weight_bits, target.act_bits};
    return plan;
}

Model apply_plan(const Model& model, const PrecisionPlan& plan)
{
    Model out = model;
    ModelEditor editor(out);
    editor.for_each_linear([&plan](Linear& layer) {
        const LayerPrecision& entry = plan.at(layer.type);
        if (entry.weight_bits) {
            layer.weight = fake_quant(layer.weight, *entry.weight_bits);
            layer.bias = fake_quant(layer.bias, *entry.weight_bits);
        }
        layer.act_bits = entry.act_bits;
    });
    editor.set_qkv_bits(plan.qkv_bits());
    return out;
}

Matrix fake_quant_linear(const Matrix& x, const Linear& layer, const LayerPrecision& entry)
{
    if (entry.is_fp()) {
        return linear_fp(x, layer.weight, layer.bias);
    }
    const Matrix input = entry.act_bits ? fake_quant(x, *entry.act_bits) : x;
    if (entry.weight_bits) {
        return linear_fp(input, fake_quant(layer.weight, *entry.weight_bits),
                         fake_quant(layer.bias, *entry.weight_bits));
    }
    return linear_fp(input, layer.weight, layer.bias);
}

QkvTensors quantize_qkv(const Matrix& q, const Matrix& k, const Matrix& v, std::optional<int> bits)
{
    if (!bits) {
        return {q, k, v};
    }
    return {fake_quant(q, *bits), fake_quant(k, *bits), fake_quant(v, *bits)};
}

namespace {

double relative_l2(const Matrix& value, const Matrix& reference)
{
    const double denom = frobenius_norm(reference);
    const double num = frobenius_norm(value - reference);
    if (denom == 0.0) {
        return num == 0.0 ? 0.0 : std::numeric_limits<double>::infinity();
    }
    return num / denom;
}

double proxy_error_against(const Model& model, std::span<const std::size_t> labels,
                           std::span<const GenerationResult> references, const SamplerConfig& sampler,
                           const GenerateOptions& compressed)
{
    double total = 0.0;
    std::size_t terms = 0;
    for (std::size_t i = 0; i < labels.size(); ++i) {
        GenerateOptions options = compressed;
        options.forced_tokens = &references[i].tokens;
        const GenerationResult run = generate(model, labels[i], sampler, options);
        for (std::size_t k = 0; k < run.logits.size(); ++k) {
            total += relative_l2(run.logits[k], references[i].logits[k]);
            ++terms;
        }
    }
    return terms == 0 ? 0.0 : total / static_cast<double>(terms);
}

std::vector<GenerationResult> reference_runs(const Model& model, std::span<const std::size_t> labels,
                                             const SamplerConfig& sampler)
{
    std::vector<GenerationResult> refs;
    refs.reserve(labels.size());
    for (std::size_t label : labels) {
        refs.push_back(generate(model, label, sampler));
    }
    return refs;
}

} // namespace

double proxy_logits_error(const Model& model, std::span<const std::size_t> labels, const SamplerConfig& sampler,
                          const GenerateOptions& compressed)
{
    const auto refs = reference_runs(model, labels, sampler);
    return proxy_error_against(model, labels, refs, sampler, compressed);
}

SensitivityScores sensitivity_scan(const Model& model, std::span<const std::size_t> labels, const QuantTarget& target,
                                   const SamplerConfig& sampler)
{
    if (labels.empty()) {
        throw InputError("sensitivity_scan: calibration set is empty");
    }
    const auto refs = reference_runs(model, labels, sampler);
    SensitivityScores scores{};
    for (LayerType type : kLayerTypes) {
        const PrecisionPlan plan = single_layer_plan(type, target);
        GenerateOptions options;
        options.plan = &plan;
        scores[layer_type_index(type)] = proxy_error_against(model, labels, refs, sampler, options);
    }
    return scores;
}

PrecisionPlan plan_precision(const SensitivityScores& scores, const QuantTarget& target, std::size_t protect_count)
{
    if (protect_count > kLayerTypes.size()) {
        throw RangeError("protect_count " + std::to_string(protect_count) + " exceeds the " +
                         std::to_string(kLayerTypes.size()) + " layer types");
    }
    PrecisionPlan plan = uniform_plan(target);
    plan.scores = scores;

    std::vector<std::size_t> order(kLayerTypes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    std::vector<std::size_t> chosen(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(protect_count));
    std::sort(chosen.begin(), chosen.end());
    for (std::size_t index : chosen) {
        plan.layers[index] = LayerPrecision{};
        plan.protected_layers.push_back(kLayerTypes[index]);
    }
    plan.note = protect_count == 0 ? "uniform" : "top-" + std::to_string(protect_count) + " sensitive types kept FP";
    return plan;
}

namespace {

json bits_json(std::optional<int> bits)
{
    return bits ? json(*bits) : json("FP");
}

std::optional<int> bits_from_json(const json& value)
{
    if (value.is_string()) {
        if (value.get<std::string>() != "FP") {
            throw FormatError("bit-width must be an integer or \"FP\"");
        }
        return std::nullopt;
    }
    const int bits = value.get<int>();
    validate_bits(bits);
    return bits;
}

} // namespace

json to_json(const PrecisionPlan& plan)
{
    json layers = json::object();
    for (LayerType type : kLayerTypes) {
        const LayerPrecision& entry = plan.at(type);
        layers[std::string(layer_type_name(type))] =
            entry.is_fp() ? json("FP") : json{{"W", bits_json(entry.weight_bits)}, {"A", bits_json(entry.act_bits)}};
    }
    json protected_names = json::array();
    for (LayerType type : plan.protected_layers) {
        protected_names.push_back(layer_type_name(type));
    }
    json scores = nullptr;
    if (plan.scores) {
        scores = json::object();
        for (LayerType type : kLayerTypes) {
            scores[std::string(layer_type_name(type))] = (*plan.scores)[layer_type_index(type)];
        }
    }
    return {
        {"version", kFormatVersion},
        {"target",
         {{"W", bits_json(plan.target.weight_bits)},
          {"A", bits_json(plan.target.act_bits)},
          {"QKV", bits_json(plan.target.qkv_bits)}}},
        {"bitwidth", plan.bitwidth_label()},
        {"protected", std::move(protected_names)},
        {"layers", std::move(layers)},
        {"scores", std::move(scores)},
        {"model_fingerprint", plan.model_fingerprint},
        {"calibration_fingerprint", plan.calibration_fingerprint},
        {"note", plan.note},
    };
}

PrecisionPlan plan_from_json(const json& doc)
{
    require_format_version(doc, "precision plan");
    PrecisionPlan plan;
    try {
        const auto& target = doc.at("target");
        plan.target = QuantTarget{bits_from_json(target.at("W")), bits_from_json(target.at("A")),
                                  bits_from_json(target.at("QKV"))};
        for (LayerType type : kLayerTypes) {
            const auto& entry = doc.at("layers").at(std::string(layer_type_name(type)));
            if (entry.is_string()) {
                if (entry.get<std::string>() != "FP") {
                    throw FormatError("plan: layer entry must be an object or \"FP\"");
                }
                plan.layers[layer_type_index(type)] = LayerPrecision{};
            } else {
                plan.layers[layer_type_index(type)] =
                    LayerPrecision{bits_from_json(entry.at("W")), bits_from_json(entry.at("A"))};
            }
        }
        for (const auto& name : doc.at("protected")) {
            const auto type = parse_layer_type(name.get<std::string>());
            if (!type) {
                throw FormatError("plan: unknown layer type " + name.get<std::string>());
            }
            plan.protected_layers.push_back(*type);
        }
        if (!doc.at("scores").is_null()) {
            SensitivityScores scores{};
            for (LayerType type : kLayerTypes) {
                scores[layer_type_index(type)] = doc["scores"].at(std::string(layer_type_name(type))).get<double>();
            }
            plan.scores = scores;
        }
        plan.model_fingerprint = doc.at("model_fingerprint").get<std::string>();
        plan.calibration_fingerprint = doc.at("calibration_fingerprint").get<std::string>();
        plan.note = doc.value("note", std::string{});
    } catch (const json::exception& e) {
        throw FormatError(std::string("precision plan: ") + e.what());
    } catch (const RangeError& e) {
        throw FormatError(std::string("precision plan: ") + e.what());
    }
    return plan;
}

PrecisionPlan load_plan(const std::filesystem::path& path)
{
    return plan_from_json(read_json_file(path));
}

void save_plan(const std::filesystem::path& path, const PrecisionPlan& plan)
{
    write_json_file(path, to_json(plan));
}

} // namespace msar
