#pragma once

#include "msar/io.hpp"
#include "msar/layer_types.hpp"
#include "msar/schedule.hpp"

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>

namespace msar {

// Scales a handful of weights of one layer type by a large factor. Used to
// build models with a known quantization bottleneck.
struct PlantedOutliers {
    LayerType layer = LayerType::ffn_fc2;
    double factor = 100.0;
    std::size_t count = 8; // per layer instance

    friend bool operator==(const PlantedOutliers&, const PlantedOutliers&) = default;
};

struct ModelConfig {
    ScaleSchedule schedule = default_schedule();
    std::size_t depth = 4;
    std::size_t heads = 4;
    std::size_t dim = 64;
    std::size_t vocab = 256;
    std::uint64_t seed = 0;
    std::size_t class_count = 10;
    std::optional<PlantedOutliers> outliers;

    std::size_t head_dim() const { return dim / heads; }
    // Index of the reserved null-label row in the class embedding table.
    std::size_t null_label() const { return class_count; }

    // Throws ConfigError on an invalid combination.
    void validate() const;
    std::string fingerprint() const;

    friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct SamplerConfig {
    double cfg_scale = 4.0;
    bool deterministic_argmax = true;

    void validate() const;
};

json to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const json& doc);

ModelConfig load_model_config(const std::filesystem::path& path);
void save_model_config(const std::filesystem::path& path, const ModelConfig& config);

} // namespace msar
