#pragma once

#include "msar/config.hpp"
#include "msar/layer_types.hpp"
#include "msar/matrix.hpp"

#include <cstddef>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace msar {

struct Linear {
    LayerType type = LayerType::word_embed;
    Matrix weight; // [out, in]
    std::vector<double> bias;
    // Bit-width of the dynamic activation fake-quant applied to the input;
    // nullopt keeps the input in floating point.
    std::optional<int> act_bits;

    std::size_t in_features() const { return weight.cols(); }
    std::size_t out_features() const { return weight.rows(); }
    std::size_t parameter_count() const { return weight.size() + bias.size(); }

    Matrix forward(const Matrix& x) const;
};

// x * W^T + b with no quantization.
Matrix linear_fp(const Matrix& x, const Matrix& weight, std::span<const double> bias);

struct Block {
    Linear ada_lin;  // SiLU(condition) -> 6 * dim modulation vector
    Linear mat_qkv;  // dim -> 3 * dim
    Linear proj;     // dim -> dim
    Linear fc1;      // dim -> 4 * dim
    Linear fc2;      // 4 * dim -> dim
};

// Toy multi-scale autoregressive transformer. Immutable after construction;
// share it by const reference.
class Model {
public:
    const ModelConfig& config() const noexcept { return config_; }

    const Linear& word_embed() const noexcept { return word_embed_; }
    const Linear& head() const noexcept { return head_; }
    const std::vector<Block>& blocks() const noexcept { return blocks_; }

    // [vocab, dim] code vectors standing in for the tokenizer's codebook.
    const Matrix& codebook() const noexcept { return codebook_; }
    // [class_count + 1, dim]; the last row is the null label.
    const Matrix& class_embedding() const noexcept { return class_embedding_; }
    // [s_k^2, dim] positional plus scale embedding for scale k (1-based).
    const Matrix& position_embedding(std::size_t k) const;

    // Bit-width applied to Q/K/V entering attention, nullopt for FP.
    std::optional<int> qkv_bits() const noexcept { return qkv_bits_; }

    void for_each_linear(const std::function<void(const Linear&)>& fn) const;

    // Hash over every weight bit pattern; equal seeds give equal checksums.
    std::string checksum() const;

private:
    friend Model build_model(const ModelConfig& config);
    friend class ModelEditor;

    ModelConfig config_;
    Linear word_embed_;
    Linear head_;
    std::vector<Block> blocks_;
    Matrix codebook_;
    Matrix class_embedding_;
    std::vector<Matrix> position_embedding_;
    std::optional<int> qkv_bits_;
};

// Mutable access used when deriving a quantized copy of a model.
class ModelEditor {
public:
    explicit ModelEditor(Model& model) : model_(model) {}
    void for_each_linear(const std::function<void(Linear&)>& fn);
    void set_qkv_bits(std::optional<int> bits) { model_.qkv_bits_ = bits; }

private:
    Model& model_;
};

// Throws ConfigError on an invalid config.
Model build_model(const ModelConfig& config);

// The seven quantizable layer types present in a model, in enumeration order.
std::vector<LayerType> layer_types(const Model& model);

// Number of weight and bias parameters of each quantizable layer type.
std::size_t layer_parameter_count(const ModelConfig& config, LayerType type);

} // namespace msar
