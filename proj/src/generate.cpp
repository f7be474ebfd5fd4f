#include "msar/generate.hpp"

#include "msar/accounting.hpp"
#include "msar/asc.hpp"
#include "msar/error.hpp"
#include "msar/precision.hpp"
#include "msar/quant.hpp"

#include <cmath>
#include <numbers>
#include <optional>

namespace msar {

json to_json(const TokenMapSet& tokens, const ScaleSchedule& schedule)
{
    return {
        {"version", kFormatVersion},
        {"schedule", std::vector<std::size_t>(schedule.sides().begin(), schedule.sides().end())},
        {"scales", tokens.maps},
    };
}

TokenMapSet token_maps_from_json(const json& doc, const ScaleSchedule& schedule)
{
    require_format_version(doc, "token maps");
    TokenMapSet tokens;
    try {
        if (doc.at("schedule").get<std::vector<std::size_t>>() !=
            std::vector<std::size_t>(schedule.sides().begin(), schedule.sides().end())) {
            throw FormatError("token maps: schedule mismatch");
        }
        tokens.maps = doc.at("scales").get<std::vector<std::vector<std::size_t>>>();
    } catch (const json::exception& e) {
        throw FormatError(std::string("token maps: ") + e.what());
    }
    if (tokens.maps.size() != schedule.scale_count()) {
        throw FormatError("token maps: wrong scale count");
    }
    for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
        if (tokens.maps[k - 1].size() != schedule.token_count(k)) {
            throw FormatError("token maps: wrong token count at scale " + std::to_string(k));
        }
    }
    return tokens;
}

namespace {

constexpr double kNormEps = 1e-6;

Matrix layer_norm(const Matrix& x)
{
    Matrix out(x.rows(), x.cols());
    const double n = static_cast<double>(x.cols());
    for (std::size_t r = 0; r < x.rows(); ++r) {
        const auto src = x.row(r);
        double mean = 0.0;
        for (double v : src) {
            mean += v;
        }
        mean /= n;
        double var = 0.0;
        for (double v : src) {
            var += (v - mean) * (v - mean);
        }
        var /= n;
        const double inv = 1.0 / std::sqrt(var + kNormEps);
        auto dst = out.row(r);
        for (std::size_t c = 0; c < src.size(); ++c) {
            dst[c] = (src[c] - mean) * inv;
        }
    }
    return out;
}

Matrix modulated_norm(const Matrix& x, std::span<const double> scale, std::span<const double> shift)
{
    Matrix out = layer_norm(x);
    for (std::size_t r = 0; r < out.rows(); ++r) {
        auto row = out.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] = row[c] * (1.0 + scale[c]) + shift[c];
        }
    }
    return out;
}

void apply_gate(Matrix& x, std::span<const double> gate)
{
    for (std::size_t r = 0; r < x.rows(); ++r) {
        auto row = x.row(r);
        for (std::size_t c = 0; c < row.size(); ++c) {
            row[c] *= 1.0 + gate[c];
        }
    }
}

double gelu(double v)
{
    constexpr double kAlpha = 0.7978845608028654; // sqrt(2 / pi)
    return 0.5 * v * (1.0 + std::tanh(kAlpha * (v + 0.044715 * v * v * v)));
}

double silu(double v)
{
    return v / (1.0 + std::exp(-v));
}

void add_in_place(Matrix& x, const Matrix& delta)
{
    auto dst = x.values();
    const auto src = delta.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] += src[i];
    }
}

void check_tokens(const TokenMapSet& tokens, const ModelConfig& config)
{
    if (tokens.maps.size() != config.schedule.scale_count()) {
        throw InputError("forced tokens: wrong scale count");
    }
    for (std::size_t k = 1; k <= config.schedule.scale_count(); ++k) {
        if (tokens.maps[k - 1].size() != config.schedule.token_count(k)) {
            throw InputError("forced tokens: wrong token count at scale " + std::to_string(k));
        }
    }
}

} // namespace

Matrix apply_linear(const Linear& layer, const Matrix& x, RunStats* stats)
{
    if (stats) {
        stats->linear_flops += 2ULL * x.rows() * layer.in_features() * layer.out_features();
    }
    return layer.forward(x);
}

BlockModulation block_modulation(const Block& block, std::span<const double> condition, RunStats* stats)
{
    Matrix activated(1, condition.size());
    for (std::size_t c = 0; c < condition.size(); ++c) {
        activated(0, c) = silu(condition[c]);
    }
    const Matrix ada = apply_linear(block.ada_lin, activated, stats);
    const std::size_t dim = condition.size();
    auto chunk = [&](std::size_t i) {
        const auto row = ada.row(0).subspan(i * dim, dim);
        return std::vector<double>(row.begin(), row.end());
    };
    return {chunk(0), chunk(1), chunk(2), chunk(3), chunk(4), chunk(5)};
}

Matrix attention_sublayer(const Model& model, std::size_t block, const Matrix& x, const BlockModulation& mod,
                          KVCache& cache, std::size_t k, const StepContext& ctx)
{
    const ModelConfig& config = model.config();
    const std::size_t dim = config.dim;
    const std::size_t head_dim = config.head_dim();
    const std::size_t expected_rows = config.schedule.cum_tokens(k - 1);
    if (ctx.executor == nullptr) {
        throw StateError("attention_sublayer: no attention executor");
    }
    const Block& weights = model.blocks().at(block);

    const Matrix h = modulated_norm(x, mod.scale1, mod.shift1);
    const Matrix qkv = apply_linear(weights.mat_qkv, h, ctx.stats);
    const double scale_factor = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Matrix merged(x.rows(), dim);
    for (std::size_t head = 0; head < config.heads; ++head) {
        if (cache.rows(block, head) != expected_rows) {
            throw StateError("KV cache holds " + std::to_string(cache.rows(block, head)) + " rows at scale " +
                             std::to_string(k) + ", expected " + std::to_string(expected_rows));
        }
        Matrix q = column_slice(qkv, head * head_dim, head_dim);
        Matrix kk = column_slice(qkv, dim + head * head_dim, head_dim);
        Matrix v = column_slice(qkv, 2 * dim + head * head_dim, head_dim);
        if (model.qkv_bits()) {
            auto quantized = quantize_qkv(q, kk, v, model.qkv_bits());
            q = std::move(quantized.q);
            kk = std::move(quantized.k);
            v = std::move(quantized.v);
        }
        cache.append(block, head, kk, v);

        const AttnMask* mask = ctx.executor->mask(k, block, head);
        const AttentionResult result =
            attention_with_probs(q, cache.keys(block, head), cache.values(block, head), mask, scale_factor);
        if (ctx.stats) {
            const std::uint64_t visible =
                mask ? mask->visible_count() : static_cast<std::uint64_t>(q.rows()) * cache.rows(block, head);
            const std::uint64_t flops = attention_pair_flops(visible, head_dim);
            (ctx.stream == Stream::cond ? ctx.stats->attention_flops_cond : ctx.stats->attention_flops_uncond) +=
                flops;
            ctx.stats->attn_map_elements += visible;
        }
        if (ctx.on_probabilities && *ctx.on_probabilities && ctx.stream == Stream::cond) {
            (*ctx.on_probabilities)(k, block, head, result.probabilities);
        }
        for (std::size_t r = 0; r < merged.rows(); ++r) {
            const auto src = result.output.row(r);
            std::copy(src.begin(), src.end(), merged.row(r).begin() + static_cast<std::ptrdiff_t>(head * head_dim));
        }
    }
    Matrix out = apply_linear(weights.proj, merged, ctx.stats);
    apply_gate(out, mod.gate1);
    return out;
}

Matrix ffn_sublayer(const Model& model, std::size_t block, const Matrix& x, const BlockModulation& mod,
                    RunStats* stats)
{
    const Block& weights = model.blocks().at(block);
    Matrix hidden = apply_linear(weights.fc1, modulated_norm(x, mod.scale2, mod.shift2), stats);
    for (double& v : hidden.values()) {
        v = gelu(v);
    }
    Matrix out = apply_linear(weights.fc2, hidden, stats);
    apply_gate(out, mod.gate2);
    return out;
}

Matrix run_block(const Model& model, std::size_t block, const Matrix& x, const BlockModulation& mod, KVCache& cache,
                 std::size_t k, const StepContext& ctx)
{
    Matrix out = x;
    const Matrix attn = attention_sublayer(model, block, x, mod, cache, k, ctx);
    if (ctx.on_sub_output && *ctx.on_sub_output) {
        (*ctx.on_sub_output)(ctx.stream, k, block, attn);
    }
    add_in_place(out, attn);
    add_in_place(out, ffn_sublayer(model, block, out, mod, ctx.stats));
    return out;
}

Matrix output_logits(const Model& model, const Matrix& hidden, RunStats* stats)
{
    return apply_linear(model.head(), layer_norm(hidden), stats);
}

Matrix scale_input(const Model& model, std::size_t k, std::span<const std::size_t> previous_tokens,
                   std::span<const double> condition, RunStats* stats)
{
    const ModelConfig& config = model.config();
    const Matrix& pos = model.position_embedding(k);
    if (k == 1) {
        if (condition.size() != config.dim) {
            throw ShapeError("scale_input: condition width differs from dim");
        }
        Matrix out = pos;
        for (std::size_t c = 0; c < config.dim; ++c) {
            out(0, c) += condition[c];
        }
        return out;
    }
    const std::size_t prev_side = config.schedule.side(k - 1);
    const std::size_t side = config.schedule.side(k);
    if (previous_tokens.size() != prev_side * prev_side) {
        throw ShapeError("scale_input: previous token map has the wrong size");
    }
    Matrix codes(side * side, config.dim);
    for (std::size_t y = 0; y < side; ++y) {
        for (std::size_t x = 0; x < side; ++x) {
            const std::size_t src = (y * prev_side / side) * prev_side + (x * prev_side / side);
            const std::size_t token = previous_tokens[src];
            if (token >= config.vocab) {
                throw InputError("scale_input: token id out of vocabulary");
            }
            const auto code = model.codebook().row(token);
            std::copy(code.begin(), code.end(), codes.row(y * side + x).begin());
        }
    }
    Matrix out = apply_linear(model.word_embed(), codes, stats);
    add_in_place(out, pos);
    return out;
}

Matrix forward_scale(const Model& model, const Matrix& hidden, std::size_t k, KVCache& cache,
                     std::span<const double> condition, const StepContext& ctx)
{
    const ModelConfig& config = model.config();
    if (hidden.rows() != config.schedule.token_count(k) || hidden.cols() != config.dim) {
        throw ShapeError("forward_scale: hidden must be [s_k^2, dim]");
    }
    if (cache.depth() != config.depth || cache.heads() != config.heads) {
        throw StateError("forward_scale: cache layout does not match the model");
    }
    if (cache.rows() != config.schedule.cum_tokens(k - 1)) {
        throw StateError("forward_scale: cache holds " + std::to_string(cache.rows()) + " rows, expected " +
                         std::to_string(config.schedule.cum_tokens(k - 1)));
    }
    Matrix x = hidden;
    for (std::size_t b = 0; b < config.depth; ++b) {
        const BlockModulation mod = block_modulation(model.blocks()[b], condition, ctx.stats);
        x = run_block(model, b, x, mod, cache, k, ctx);
    }
    return output_logits(model, x, ctx.stats);
}

Matrix cfg_combine(const Matrix& cond, const Matrix& uncond, double cfg_scale)
{
    if (cond.rows() != uncond.rows() || cond.cols() != uncond.cols()) {
        throw ShapeError("cfg_combine: logits shapes differ");
    }
    Matrix out(cond.rows(), cond.cols());
    auto dst = out.values();
    const auto c = cond.values();
    const auto u = uncond.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = (1.0 - cfg_scale) * u[i] + cfg_scale * c[i];
    }
    return out;
}

std::vector<std::size_t> argmax_rows(const Matrix& logits)
{
    std::vector<std::size_t> out(logits.rows(), 0);
    for (std::size_t r = 0; r < logits.rows(); ++r) {
        const auto row = logits.row(r);
        for (std::size_t c = 1; c < row.size(); ++c) {
            if (row[c] > row[out[r]]) {
                out[r] = c;
            }
        }
    }
    return out;
}

GenerationResult generate(const Model& model, std::size_t label, const SamplerConfig& sampler,
                          const GenerateOptions& options)
{
    if (label >= model.config().class_count) {
        throw InputError("label " + std::to_string(label) + " outside [0, " +
                         std::to_string(model.config().class_count) + ")");
    }
    return generate_with_conditions(model, label, model.config().null_label(), sampler, options);
}

GenerationResult generate_with_conditions(const Model& model, std::size_t cond_class, std::size_t uncond_class,
                                          const SamplerConfig& sampler, const GenerateOptions& options)
{
    sampler.validate();
    const ModelConfig& config = model.config();
    if (cond_class > config.null_label() || uncond_class > config.null_label()) {
        throw InputError("condition class out of range");
    }
    if (options.forced_tokens) {
        check_tokens(*options.forced_tokens, config);
    }

    GenerationResult result;
    std::optional<Model> quantized;
    if (options.plan) {
        if (!options.plan->model_fingerprint.empty() && options.plan->model_fingerprint != config.fingerprint()) {
            throw FingerprintError("precision plan was built for model " + options.plan->model_fingerprint +
                                   ", not " + config.fingerprint());
        }
        quantized.emplace(apply_plan(model, *options.plan));
        result.techniques.quant = options.plan->bitwidth_label();
        for (LayerType type : options.plan->protected_layers) {
            result.techniques.protected_layers.emplace_back(layer_type_name(type));
        }
    }
    const Model& active = quantized ? *quantized : model;

    DenseExecutor dense;
    std::optional<WindowedExecutor> windowed;
    if (options.pattern) {
        windowed.emplace(*options.pattern, config.schedule, config.depth, config.heads);
        result.techniques.mdwa_r0 = options.pattern->r0;
        result.techniques.sink_parts = options.pattern->sink_parts;
    }
    const AttentionExecutor& executor = windowed ? static_cast<const AttentionExecutor&>(*windowed) : dense;
    result.techniques.asc = options.asc;

    RunStats& stats = result.stats;
    stats.weight_bytes = weight_bytes(config, options.plan);

    const auto cond_vec = active.class_embedding().row(cond_class);
    const auto uncond_vec = active.class_embedding().row(uncond_class);
    KVCache cond_cache(config.depth, config.heads, config.head_dim());
    KVCache uncond_cache(config.depth, config.heads, config.head_dim());

    const StepContext cond_ctx{&executor, &stats, Stream::cond, &options.on_cond_attention,
                               &options.on_attention_output};
    const StepContext uncond_ctx{&executor, &stats, Stream::uncond, nullptr, &options.on_attention_output};

    std::vector<BlockModulation> cond_mods;
    std::vector<BlockModulation> uncond_mods;
    for (const Block& block : active.blocks()) {
        cond_mods.push_back(block_modulation(block, cond_vec, &stats));
        uncond_mods.push_back(block_modulation(block, uncond_vec, &stats));
    }

    std::vector<std::size_t> previous;
    for (std::size_t k = 1; k <= config.schedule.scale_count(); ++k) {
        Matrix hc = scale_input(active, k, previous, cond_vec, &stats);
        Matrix hu = scale_input(active, k, previous, uncond_vec, &stats);
        for (std::size_t b = 0; b < config.depth; ++b) {
            if (options.asc) {
                StreamPair pair =
                    run_block_asc(active, b, hc, hu, cond_mods[b], uncond_mods[b], cond_cache, k, cond_ctx);
                hc = std::move(pair.cond);
                hu = std::move(pair.uncond);
            } else {
                hc = run_block(active, b, hc, cond_mods[b], cond_cache, k, cond_ctx);
                hu = run_block(active, b, hu, uncond_mods[b], uncond_cache, k, uncond_ctx);
            }
        }
        const Matrix logits_c = output_logits(active, hc, &stats);
        const Matrix logits_u = output_logits(active, hu, &stats);
        Matrix combined = cfg_combine(logits_c, logits_u, sampler.cfg_scale);
        result.tokens.maps.push_back(argmax_rows(combined));
        result.logits.push_back(std::move(combined));
        previous = options.forced_tokens ? options.forced_tokens->maps[k - 1] : result.tokens.maps.back();
    }
    return result;
}

} // namespace msar
