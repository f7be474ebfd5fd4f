#pragma once

#include "msar/generate.hpp"

namespace msar {

struct StreamPair {
    Matrix cond;
    Matrix uncond;
};

// One block with the attention sub-block computed on the conditional stream
// only; its output is added to both residual streams. FFN and norms still
// run per stream. Nothing is written for the unconditional stream's cache.
StreamPair run_block_asc(const Model& model, std::size_t block, const Matrix& cond_hidden,
                         const Matrix& uncond_hidden, const BlockModulation& cond_mod,
                         const BlockModulation& uncond_mod, KVCache& cond_cache, std::size_t k,
                         const StepContext& ctx);

// Attention-compute saving of sharing relative to two full CFG streams,
// optionally with a window pattern applied to the remaining stream.
double asc_savings(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads, std::size_t head_dim,
                   const WindowPattern* pattern = nullptr);

// 1 - (1 - windowed_saving) / 2
double compose_asc_saving(double windowed_saving);

} // namespace msar
