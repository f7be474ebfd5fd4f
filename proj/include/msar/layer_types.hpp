#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace msar {

// The quantizable linear layer types, in the fixed enumeration order used
// for deterministic tie-breaking.
enum class LayerType {
    word_embed,
    attn_mat_qkv,
    attn_proj,
    ffn_fc1,
    ffn_fc2,
    ada_lin_1,
    head,
};

inline constexpr std::array<LayerType, 7> kLayerTypes = {
    LayerType::word_embed, LayerType::attn_mat_qkv, LayerType::attn_proj, LayerType::ffn_fc1,
    LayerType::ffn_fc2,    LayerType::ada_lin_1,    LayerType::head,
};

constexpr std::string_view layer_type_name(LayerType type)
{
    switch (type) {
    case LayerType::word_embed: return "word_embed";
    case LayerType::attn_mat_qkv: return "attn.mat_qkv";
    case LayerType::attn_proj: return "attn.proj";
    case LayerType::ffn_fc1: return "ffn.fc1";
    case LayerType::ffn_fc2: return "ffn.fc2";
    case LayerType::ada_lin_1: return "ada_lin.1";
    case LayerType::head: return "head";
    }
    return "unknown";
}

constexpr std::optional<LayerType> parse_layer_type(std::string_view name)
{
    for (LayerType type : kLayerTypes) {
        if (layer_type_name(type) == name) {
            return type;
        }
    }
    return std::nullopt;
}

constexpr std::size_t layer_type_index(LayerType type) { return static_cast<std::size_t>(type); }

} // namespace msar
