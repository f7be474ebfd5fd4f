#include "msar/sparse_attention.hpp"

#include "msar/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace msar {

AttnMask::AttnMask(std::size_t rows, std::size_t cols, bool visible)
    : rows_(rows), cols_(cols), bits_(rows * cols, visible ? 1 : 0)
{
}

std::size_t AttnMask::row_visible_count(std::size_t r) const
{
    const auto begin = bits_.begin() + static_cast<std::ptrdiff_t>(r * cols_);
    return static_cast<std::size_t>(std::count(begin, begin + static_cast<std::ptrdiff_t>(cols_), std::uint8_t{1}));
}

std::uint64_t AttnMask::visible_count() const
{
    return static_cast<std::uint64_t>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

AttnMask pattern_to_mask(const WindowPattern& pattern, const ScaleSchedule& schedule, std::size_t k,
                         std::size_t block, std::size_t head)
{
    if (pattern.fingerprint() != schedule.fingerprint()) {
        throw FingerprintError("pattern fingerprint " + pattern.fingerprint() + " does not match schedule " +
                               schedule.fingerprint());
    }
    const PartLayout layout = partition(schedule, k);
    const std::size_t queries = schedule.token_count(k);
    AttnMask mask(queries, schedule.cum_tokens(k), false);
    for (std::size_t p = 0; p < layout.parts.size(); ++p) {
        const Part& part = layout.parts[p];
        const PartWidth width = pattern.width(k, block, head, p + 1);
        if (!width || !part.single_scale()) {
            for (std::size_t q = 0; q < queries; ++q) {
                for (std::size_t c = part.key_start; c < part.key_end; ++c) {
                    mask.set(q, c, true);
                }
            }
            continue;
        }
        const auto centers = part_centers(schedule, k, part);
        for (std::size_t q = 0; q < queries; ++q) {
            const BandRange band = band_range(centers[q], *width, part.width());
            for (std::size_t j = band.first; j < band.last; ++j) {
                mask.set(q, part.key_start + j, true);
            }
        }
    }
    return mask;
}

AttentionResult attention_with_probs(const Matrix& q, const Matrix& k, const Matrix& v, const AttnMask* mask,
                                     double scale_factor)
{
    if (q.cols() != k.cols() || k.rows() != v.rows()) {
        throw ShapeError("attention: Q/K/V shapes are inconsistent");
    }
    if (mask && (mask->rows() != q.rows() || mask->cols() != k.rows())) {
        throw ShapeError("attention: mask shape does not match Q/K");
    }
    const std::size_t keys = k.rows();
    AttentionResult result{Matrix(q.rows(), v.cols()), Matrix(q.rows(), keys)};
    std::vector<double> scores(keys);
    for (std::size_t i = 0; i < q.rows(); ++i) {
        const auto qi = q.row(i);
        double peak = -std::numeric_limits<double>::infinity();
        std::size_t visible = 0;
        for (std::size_t j = 0; j < keys; ++j) {
            if (mask && !mask->visible(i, j)) {
                continue;
            }
            const auto kj = k.row(j);
            double dot = 0.0;
            for (std::size_t d = 0; d < qi.size(); ++d) {
                dot += qi[d] * kj[d];
            }
            scores[j] = dot * scale_factor;
            peak = std::max(peak, scores[j]);
            ++visible;
        }
        if (visible == 0) {
            throw MaskError("attention: row " + std::to_string(i) + " has no visible key");
        }
        auto probs = result.probabilities.row(i);
        double total = 0.0;
        for (std::size_t j = 0; j < keys; ++j) {
            if (mask && !mask->visible(i, j)) {
                continue;
            }
            probs[j] = std::exp(scores[j] - peak);
            total += probs[j];
        }
        auto out = result.output.row(i);
        for (std::size_t j = 0; j < keys; ++j) {
            if (mask && !mask->visible(i, j)) {
                continue;
            }
            probs[j] /= total;
            const auto vj = v.row(j);
            for (std::size_t d = 0; d < out.size(); ++d) {
                out[d] += probs[j] * vj[d];
            }
        }
    }
    return result;
}

Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttnMask& mask, double scale_factor)
{
    return attention_with_probs(q, k, v, &mask, scale_factor).output;
}

Matrix dense_attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale_factor)
{
    return attention_with_probs(q, k, v, nullptr, scale_factor).output;
}

WindowedExecutor::WindowedExecutor(const WindowPattern& pattern, const ScaleSchedule& schedule, std::size_t depth,
                                   std::size_t heads)
    : depth_(depth), heads_(heads)
{
    if (pattern.fingerprint() != schedule.fingerprint()) {
        throw FingerprintError("pattern fingerprint " + pattern.fingerprint() + " does not match schedule " +
                               schedule.fingerprint());
    }
    if (pattern.depth != depth || pattern.heads != heads) {
        throw FingerprintError("pattern was designed for a different depth/head count");
    }
    masks_.reserve(schedule.scale_count() * depth * heads);
    for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
        for (std::size_t b = 0; b < depth; ++b) {
            for (std::size_t h = 0; h < heads; ++h) {
                masks_.push_back(pattern_to_mask(pattern, schedule, k, b, h));
            }
        }
    }
}

const AttnMask* WindowedExecutor::mask(std::size_t k, std::size_t block, std::size_t head) const
{
    const std::size_t index = ((k - 1) * depth_ + block) * heads_ + head;
    if (k < 1 || block >= depth_ || head >= heads_ || index >= masks_.size()) {
        throw RangeError("WindowedExecutor: (scale, block, head) out of range");
    }
    return &masks_[index];
}

std::uint64_t attention_pair_flops(std::uint64_t visible_pairs, std::size_t head_dim)
{
    return 4ULL * visible_pairs * static_cast<std::uint64_t>(head_dim);
}

AttnFlops attn_flops(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads, std::size_t head_dim)
{
    std::uint64_t pairs = 0;
    for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
        pairs += static_cast<std::uint64_t>(schedule.token_count(k)) * schedule.cum_tokens(k);
    }
    const std::uint64_t total = attention_pair_flops(pairs, head_dim) * depth * heads;
    return {total, total};
}

AttnFlops attn_flops(const WindowPattern& pattern, std::size_t head_dim)
{
    AttnFlops flops = attn_flops(pattern.schedule, pattern.depth, pattern.heads, head_dim);
    std::uint64_t visible = 0;
    for (std::size_t k = 1; k <= pattern.schedule.scale_count(); ++k) {
        for (std::size_t b = 0; b < pattern.depth; ++b) {
            for (std::size_t h = 0; h < pattern.heads; ++h) {
                visible += pattern_to_mask(pattern, pattern.schedule, k, b, h).visible_count();
            }
        }
    }
    flops.masked = attention_pair_flops(visible, head_dim);
    return flops;
}

} // namespace msar
