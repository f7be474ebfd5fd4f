#include "msar/model.hpp"

#include "msar/error.hpp"
#include "msar/quant.hpp"
#include "msar/random.hpp"

#include <cmath>
#include <numbers>

namespace msar {

Matrix linear_fp(const Matrix& x, const Matrix& weight, std::span<const double> bias)
{
    Matrix out = matmul_transposed(x, weight);
    if (!bias.empty()) {
        for (std::size_t r = 0; r < out.rows(); ++r) {
            auto row = out.row(r);
            for (std::size_t c = 0; c < row.size(); ++c) {
                row[c] += bias[c];
            }
        }
    }
    return out;
}

Matrix Linear::forward(const Matrix& x) const
{
    if (x.cols() != in_features()) {
        throw ShapeError("linear " + std::string(layer_type_name(type)) + ": expected " +
                         std::to_string(in_features()) + " input features, got " + std::to_string(x.cols()));
    }
    if (act_bits) {
        return linear_fp(fake_quant(x, *act_bits), weight, bias);
    }
    return linear_fp(x, weight, bias);
}

const Matrix& Model::position_embedding(std::size_t k) const
{
    if (k < 1 || k > position_embedding_.size()) {
        throw RangeError("position_embedding: scale index out of range");
    }
    return position_embedding_[k - 1];
}

void Model::for_each_linear(const std::function<void(const Linear&)>& fn) const
{
    fn(word_embed_);
    for (const auto& block : blocks_) {
        fn(block.ada_lin);
        fn(block.mat_qkv);
        fn(block.proj);
        fn(block.fc1);
        fn(block.fc2);
    }
    fn(head_);
}

void ModelEditor::for_each_linear(const std::function<void(Linear&)>& fn)
{
    fn(model_.word_embed_);
    for (auto& block : model_.blocks_) {
        fn(block.ada_lin);
        fn(block.mat_qkv);
        fn(block.proj);
        fn(block.fc1);
        fn(block.fc2);
    }
    fn(model_.head_);
}

std::string Model::checksum() const
{
    std::string bytes;
    auto absorb = [&bytes](std::span<const double> values) {
        const auto* raw = reinterpret_cast<const char*>(values.data());
        bytes.append(raw, values.size() * sizeof(double));
    };
    for_each_linear([&](const Linear& layer) {
        absorb(layer.weight.values());
        absorb(layer.bias);
    });
    absorb(codebook_.values());
    absorb(class_embedding_.values());
    for (const auto& pos : position_embedding_) {
        absorb(pos.values());
    }
    return fnv1a_hex(bytes);
}

namespace {

Matrix gaussian(Rng& rng, std::size_t rows, std::size_t cols, double stddev)
{
    Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = rng.normal() * stddev;
    }
    return m;
}

Linear make_linear(Rng& rng, LayerType type, std::size_t in, std::size_t out, double gain)
{
    Linear layer;
    layer.type = type;
    layer.weight = gaussian(rng, out, in, gain / std::sqrt(static_cast<double>(in)));
    layer.bias.resize(out);
    for (double& b : layer.bias) {
        b = rng.normal() * 0.02;
    }
    return layer;
}

// Keys are correlated with queries so that tokens attend mostly to
// spatially close tokens, which gives attention maps the banded structure
// a real model shows.
Linear make_qkv(Rng& rng, std::size_t dim)
{
    constexpr double kQueryGain = 2.0;
    Linear layer = make_linear(rng, LayerType::attn_mat_qkv, dim, 3 * dim, 1.0);
    const double noise = 1.0 / std::sqrt(static_cast<double>(dim));
    for (std::size_t r = 0; r < dim; ++r) {
        for (std::size_t c = 0; c < dim; ++c) {
            layer.weight(r, c) *= kQueryGain;
            layer.weight(dim + r, c) = 0.95 * layer.weight(r, c) + 0.3 * kQueryGain * noise * rng.normal();
        }
    }
    return layer;
}

// Sinusoidal features of the token's normalized grid coordinates, so the
// same image location gets similar embeddings at every scale.
Matrix grid_embedding(std::size_t side, std::size_t dim, std::span<const double> scale_row)
{
    Matrix pos(side * side, dim);
    const std::size_t bands = dim / 4;
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            const double u = (static_cast<double>(y) + 0.5) / static_cast<double>(side);
            const double v = (static_cast<double>(x) + 0.5) / static_cast<double>(side);
            auto row = pos.row(y * side + x);
            for (std::size_t b = 0; b < bands; ++b) {
                const double freq = std::numbers::pi * (1.0 + static_cast<double>(b));
                row[4 * b + 0] = std::sin(freq * u);
                row[4 * b + 1] = std::cos(freq * u);
                row[4 * b + 2] = std::sin(freq * v);
                row[4 * b + 3] = std::cos(freq * v);
            }
            for (std::size_t c = 0; c < dim; ++c) {
                row[c] = 3.0 * row[c] + scale_row[c];
            }
        }
    }
    return pos;
}

void plant_outliers(Rng& rng, Linear& layer, const PlantedOutliers& outliers)
{
    auto values = layer.weight.values();
    for (std::size_t i = 0; i < outliers.count && !values.empty(); ++i) {
        values[rng.below(values.size())] *= outliers.factor;
    }
}

} // namespace

Model build_model(const ModelConfig& config)
{
    config.validate();
    Rng rng(config.seed);
    Model model;
    model.config_ = config;
    const std::size_t dim = config.dim;

    model.codebook_ = gaussian(rng, config.vocab, dim, 1.0);
    model.class_embedding_ = gaussian(rng, config.class_count + 1, dim, 1.0);
    const Matrix scale_embedding = gaussian(rng, config.schedule.scale_count(), dim, 0.3);
    for (std::size_t k = 1; k <= config.schedule.scale_count(); ++k) {
        model.position_embedding_.push_back(grid_embedding(config.schedule.side(k), dim, scale_embedding.row(k - 1)));
    }

    model.word_embed_ = make_linear(rng, LayerType::word_embed, dim, dim, 1.0);
    model.blocks_.reserve(config.depth);
    for (std::size_t b = 0; b < config.depth; ++b) {
        Block block;
        block.ada_lin = make_linear(rng, LayerType::ada_lin_1, dim, 6 * dim, 0.5);
        block.mat_qkv = make_qkv(rng, dim);
        block.proj = make_linear(rng, LayerType::attn_proj, dim, dim, 1.0);
        block.fc1 = make_linear(rng, LayerType::ffn_fc1, dim, 4 * dim, 1.0);
        block.fc2 = make_linear(rng, LayerType::ffn_fc2, 4 * dim, dim, 1.0);
        model.blocks_.push_back(std::move(block));
    }
    model.head_ = make_linear(rng, LayerType::head, dim, config.vocab, 2.0);

    if (config.outliers) {
        Rng outlier_rng(config.seed ^ 0x9e3779b97f4a7c15ULL);
        ModelEditor(model).for_each_linear([&](Linear& layer) {
            if (layer.type == config.outliers->layer) {
                plant_outliers(outlier_rng, layer, *config.outliers);
            }
        });
    }
    return model;
}

std::vector<LayerType> layer_types(const Model& model)
{
    std::vector<bool> seen(kLayerTypes.size(), false);
    model.for_each_linear([&](const Linear& layer) { seen[layer_type_index(layer.type)] = true; });
    std::vector<LayerType> out;
    for (LayerType type : kLayerTypes) {
        if (seen[layer_type_index(type)]) {
            out.push_back(type);
        }
    }
    return out;
}

std::size_t layer_parameter_count(const ModelConfig& config, LayerType type)
{
    const std::size_t d = config.dim;
    auto dense = [](std::size_t in, std::size_t out) { return in * out + out; };
    switch (type) {
    case LayerType::word_embed: return dense(d, d);
    case LayerType::attn_mat_qkv: return config.depth * dense(d, 3 * d);
    case LayerType::attn_proj: return config.depth * dense(d, d);
    case LayerType::ffn_fc1: return config.depth * dense(d, 4 * d);
    case LayerType::ffn_fc2: return config.depth * dense(4 * d, d);
    case LayerType::ada_lin_1: return config.depth * dense(d, 6 * d);
    case LayerType::head: return dense(d, config.vocab);
    }
    return 0;
}

} // namespace msar
