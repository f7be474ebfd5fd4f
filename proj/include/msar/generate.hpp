#pragma once

#include "msar/config.hpp"
#include "msar/kv_cache.hpp"
#include "msar/model.hpp"
#include "msar/run_stats.hpp"
#include "msar/sparse_attention.hpp"

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

namespace msar {

struct PrecisionPlan;
struct WindowPattern;

// Token ids per scale, each map row-major over the s_k x s_k grid.
struct TokenMapSet {
    std::vector<std::vector<std::size_t>> maps;

    friend bool operator==(const TokenMapSet&, const TokenMapSet&) = default;
};

json to_json(const TokenMapSet& tokens, const ScaleSchedule& schedule);
// Throws FormatError if the maps do not match the schedule.
TokenMapSet token_maps_from_json(const json& doc, const ScaleSchedule& schedule);

enum class Stream { cond, uncond };

// Receives every post-softmax attention map of the conditional stream.
using AttentionObserver =
    std::function<void(std::size_t k, std::size_t block, std::size_t head, const Matrix& probabilities)>;
// Receives the attention sub-block output added to each stream's residual.
using SubOutputObserver = std::function<void(Stream stream, std::size_t k, std::size_t block, const Matrix& output)>;

// Per-block adaptive-norm modulation derived from the condition embedding.
struct BlockModulation {
    std::vector<double> shift1, scale1, gate1;
    std::vector<double> shift2, scale2, gate2;
};

struct StepContext {
    const AttentionExecutor* executor = nullptr;
    RunStats* stats = nullptr;
    Stream stream = Stream::cond;
    const AttentionObserver* on_probabilities = nullptr;
    const SubOutputObserver* on_sub_output = nullptr;
};

// Applies `layer` and counts 2 * rows * in * out FLOPs.
Matrix apply_linear(const Linear& layer, const Matrix& x, RunStats* stats);

BlockModulation block_modulation(const Block& block, std::span<const double> condition, RunStats* stats);

// Attention sub-block: modulated norm, QKV projection, attention over the
// cache plus the current scale, output projection and gate. Appends the
// scale's keys and values to `cache`.
Matrix attention_sublayer(const Model& model, std::size_t block, const Matrix& x, const BlockModulation& mod,
                          KVCache& cache, std::size_t k, const StepContext& ctx);
Matrix ffn_sublayer(const Model& model, std::size_t block, const Matrix& x, const BlockModulation& mod,
                    RunStats* stats);
Matrix run_block(const Model& model, std::size_t block, const Matrix& x, const BlockModulation& mod, KVCache& cache,
                 std::size_t k, const StepContext& ctx);

Matrix output_logits(const Model& model, const Matrix& hidden, RunStats* stats);

// Input embeddings of scale k. Scale 1 starts from the condition embedding;
// later scales upsample the previous scale's code vectors (nearest
// neighbour) through word_embed.
Matrix scale_input(const Model& model, std::size_t k, std::span<const std::size_t> previous_tokens,
                   std::span<const double> condition, RunStats* stats);

// Runs every block on the s_k^2 tokens of scale k in one step and returns
// logits [s_k^2, vocab]. `cache` must hold exactly cum_tokens(k - 1) rows.
Matrix forward_scale(const Model& model, const Matrix& hidden, std::size_t k, KVCache& cache,
                     std::span<const double> condition, const StepContext& ctx);

// uncond + cfg_scale * (cond - uncond), evaluated as (1 - s) * uncond + s * cond
// so that s = 0 and s = 1 return the inputs exactly.
Matrix cfg_combine(const Matrix& cond, const Matrix& uncond, double cfg_scale);

// Lowest index wins ties.
std::vector<std::size_t> argmax_rows(const Matrix& logits);

struct GenerateOptions {
    const WindowPattern* pattern = nullptr;
    bool asc = false;
    const PrecisionPlan* plan = nullptr;
    // When set, these tokens (not the run's own choices) seed each next
    // scale, so logits stay comparable with a reference run.
    const TokenMapSet* forced_tokens = nullptr;
    AttentionObserver on_cond_attention;
    SubOutputObserver on_attention_output;
};

struct GenerationResult {
    TokenMapSet tokens;
    RunStats stats;
    std::vector<Matrix> logits; // combined CFG logits per scale
    Techniques techniques;
};

// Throws InputError if label >= class_count.
GenerationResult generate(const Model& model, std::size_t label, const SamplerConfig& sampler,
                          const GenerateOptions& options = {});

// Same as generate, but both streams' condition rows are given explicitly;
// config.null_label() selects the null embedding.
GenerationResult generate_with_conditions(const Model& model, std::size_t cond_class, std::size_t uncond_class,
                                          const SamplerConfig& sampler, const GenerateOptions& options = {});

} // namespace msar
