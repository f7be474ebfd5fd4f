#include "msar/config.hpp"

#include "msar/error.hpp"

#include <cmath>

namespace msar {

void ModelConfig::validate() const
{
    if (schedule.scale_count() == 0) {
        throw ConfigError("schedule is empty");
    }
    if (depth == 0 || heads == 0 || dim == 0 || vocab == 0 || class_count == 0) {
        throw ConfigError("depth, heads, dim, vocab and class_count must all be >= 1");
    }
    if (dim % heads != 0) {
        throw ConfigError("dim " + std::to_string(dim) + " is not divisible by heads " + std::to_string(heads));
    }
    if (outliers && !(outliers->factor > 0.0 && std::isfinite(outliers->factor))) {
        throw ConfigError("outlier factor must be positive and finite");
    }
}

std::string ModelConfig::fingerprint() const
{
    return fnv1a_hex("model:" + to_json(*this).dump());
}

void SamplerConfig::validate() const
{
    if (!(cfg_scale >= 0.0) || !std::isfinite(cfg_scale)) {
        throw ConfigError("cfg_scale must be a finite non-negative number");
    }
    if (!deterministic_argmax) {
        throw ConfigError("only deterministic argmax sampling is supported");
    }
}

json to_json(const ModelConfig& config)
{
    json doc = {
        {"version", kFormatVersion},
        {"schedule", std::vector<std::size_t>(config.schedule.sides().begin(), config.schedule.sides().end())},
        {"depth", config.depth},
        {"heads", config.heads},
        {"dim", config.dim},
        {"vocab", config.vocab},
        {"seed", config.seed},
        {"class_count", config.class_count},
    };
    if (config.outliers) {
        doc["planted_outliers"] = {
            {"layer", layer_type_name(config.outliers->layer)},
            {"factor", config.outliers->factor},
            {"count", config.outliers->count},
        };
    }
    return doc;
}

ModelConfig model_config_from_json(const json& doc)
{
    require_format_version(doc, "model config");
    ModelConfig config;
    try {
        config.schedule = ScaleSchedule(doc.at("schedule").get<std::vector<std::size_t>>());
        config.depth = doc.at("depth").get<std::size_t>();
        config.heads = doc.at("heads").get<std::size_t>();
        config.dim = doc.at("dim").get<std::size_t>();
        config.vocab = doc.at("vocab").get<std::size_t>();
        config.seed = doc.at("seed").get<std::uint64_t>();
        config.class_count = doc.at("class_count").get<std::size_t>();
        if (doc.contains("planted_outliers")) {
            const auto& o = doc["planted_outliers"];
            const auto layer = parse_layer_type(o.at("layer").get<std::string>());
            if (!layer) {
                throw ConfigError("unknown layer type in planted_outliers");
            }
            config.outliers = PlantedOutliers{*layer, o.at("factor").get<double>(), o.at("count").get<std::size_t>()};
        }
    } catch (const json::exception& e) {
        throw ConfigError(std::string("model config: ") + e.what());
    }
    config.validate();
    return config;
}

ModelConfig load_model_config(const std::filesystem::path& path)
{
    return model_config_from_json(read_json_file(path));
}

void save_model_config(const std::filesystem::path& path, const ModelConfig& config)
{
    write_json_file(path, to_json(config));
}

} // namespace msar
