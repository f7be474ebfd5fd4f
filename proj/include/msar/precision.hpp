#pragma once

#include "msar/config.hpp"
#include "msar/generate.hpp"
#include "msar/io.hpp"
#include "msar/layer_types.hpp"
#include "msar/model.hpp"

#include <array>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace msar {

// Bits for one linear layer type; nullopt fields stay in floating point.
struct LayerPrecision {
    std::optional<int> weight_bits;
    std::optional<int> act_bits;

    bool is_fp() const noexcept { return !weight_bits && !act_bits; }
    friend bool operator==(const LayerPrecision&, const LayerPrecision&) = default;
};

// The W/A/QKV triplet; nullopt means floating point.
struct QuantTarget {
    std::optional<int> weight_bits;
    std::optional<int> act_bits;
    std::optional<int> qkv_bits;

    friend bool operator==(const QuantTarget&, const QuantTarget&) = default;
};

using SensitivityScores = std::array<double, kLayerTypes.size()>;

struct PrecisionPlan {
    QuantTarget target;
    std::array<LayerPrecision, kLayerTypes.size()> layers{};
    std::vector<LayerType> protected_layers;
    std::optional<SensitivityScores> scores;
    // Config fingerprint of the model the plan was calibrated on; empty
    // plans apply to any model.
    std::string model_fingerprint;
    std::string calibration_fingerprint;
    std::string note;

    const LayerPrecision& at(LayerType type) const { return layers[layer_type_index(type)]; }
    std::optional<int> qkv_bits() const noexcept { return target.qkv_bits; }
    // "W/A/QKV" with 16 for floating point, plus "+MP" when layers are protected.
    std::string bitwidth_label() const;
};

// Every layer type at the target bits, nothing protected.
PrecisionPlan uniform_plan(const QuantTarget& target);
// Only `type` quantized at the target W/A; Q/K/V stay in floating point.
PrecisionPlan single_layer_plan(LayerType type, const QuantTarget& target);

// Copy of `model` with weights fake-quantized once (static per-tensor
// params) and activation bits attached to each layer.
Model apply_plan(const Model& model, const PrecisionPlan& plan);

// Weights quantized with static per-tensor params, the input with params
// computed from the live tensor, both dequantized before an FP matmul.
Matrix fake_quant_linear(const Matrix& x, const Linear& layer, const LayerPrecision& entry);

struct QkvTensors {
    Matrix q;
    Matrix k;
    Matrix v;
};

// Dynamic per-tensor fake-quant of attention inputs; nullopt passes through.
QkvTensors quantize_qkv(const Matrix& q, const Matrix& k, const Matrix& v, std::optional<int> bits);

// Mean over (label, scale) of ||logits - reference|| / ||reference|| where
// the reference is the floating-point run and the compressed run is fed the
// reference tokens.
double proxy_logits_error(const Model& model, std::span<const std::size_t> labels, const SamplerConfig& sampler,
                          const GenerateOptions& compressed);

// Error score per layer type with only that type quantized at the target.
SensitivityScores sensitivity_scan(const Model& model, std::span<const std::size_t> labels, const QuantTarget& target,
                                   const SamplerConfig& sampler = {});

// Protects the protect_count highest-scoring types (ties go to the earlier
// type in enumeration order); throws RangeError if protect_count > 7.
PrecisionPlan plan_precision(const SensitivityScores& scores, const QuantTarget& target, std::size_t protect_count);

json to_json(const PrecisionPlan& plan);
PrecisionPlan plan_from_json(const json& doc);
PrecisionPlan load_plan(const std::filesystem::path& path);
void save_plan(const std::filesystem::path& path, const PrecisionPlan& plan);

} // namespace msar
