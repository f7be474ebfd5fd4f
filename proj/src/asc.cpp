#include "msar/asc.hpp"

#include "msar/error.hpp"

namespace msar {

StreamPair run_block_asc(const Model& model, std::size_t block, const Matrix& cond_hidden,
                         const Matrix& uncond_hidden, const BlockModulation& cond_mod,
                         const BlockModulation& uncond_mod, KVCache& cond_cache, std::size_t k,
                         const StepContext& ctx)
{
    if (cond_hidden.rows() != uncond_hidden.rows() || cond_hidden.cols() != uncond_hidden.cols()) {
        throw ShapeError("run_block_asc: stream shapes differ");
    }
    StepContext cond_ctx = ctx;
    cond_ctx.stream = Stream::cond;
    const Matrix shared = attention_sublayer(model, block, cond_hidden, cond_mod, cond_cache, k, cond_ctx);
    if (ctx.on_sub_output && *ctx.on_sub_output) {
        (*ctx.on_sub_output)(Stream::cond, k, block, shared);
        (*ctx.on_sub_output)(Stream::uncond, k, block, shared);
    }

    StreamPair out{cond_hidden + shared, uncond_hidden + shared};
    out.cond = out.cond + ffn_sublayer(model, block, out.cond, cond_mod, ctx.stats);
    out.uncond = out.uncond + ffn_sublayer(model, block, out.uncond, uncond_mod, ctx.stats);
    return out;
}

double asc_savings(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads, std::size_t head_dim,
                   const WindowPattern* pattern)
{
    const AttnFlops full = attn_flops(schedule, depth, heads, head_dim);
    const std::uint64_t remaining = pattern ? attn_flops(*pattern, head_dim).masked : full.full;
    const double baseline = 2.0 * static_cast<double>(full.full);
    return baseline == 0.0 ? 0.0 : 1.0 - static_cast<double>(remaining) / baseline;
}

double compose_asc_saving(double windowed_saving)
{
    return 1.0 - (1.0 - windowed_saving) / 2.0;
}

} // namespace msar
