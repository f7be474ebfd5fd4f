#pragma once

#include "msar/matrix.hpp"
#include "msar/pattern.hpp"

#include <cstddef>
#include <cstdint>
#include <vector>

namespace msar {

// Boolean key-visibility matrix [s_k^2, cum_tokens(k)] for one
// (scale, block, head).
class AttnMask {
public:
    AttnMask() = default;
    AttnMask(std::size_t rows, std::size_t cols, bool visible);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }

    bool visible(std::size_t r, std::size_t c) const noexcept { return bits_[r * cols_ + c] != 0; }
    void set(std::size_t r, std::size_t c, bool visible) noexcept { bits_[r * cols_ + c] = visible ? 1 : 0; }

    std::size_t row_visible_count(std::size_t r) const;
    std::uint64_t visible_count() const;

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<std::uint8_t> bits_;
};

// FULL parts become all-true column blocks; a width w marks band(q, w)
// around each query's diagonal center. Throws FingerprintError when the
// pattern was designed for another schedule.
AttnMask pattern_to_mask(const WindowPattern& pattern, const ScaleSchedule& schedule, std::size_t k,
                         std::size_t block, std::size_t head);

struct AttentionResult {
    Matrix output;        // [queries, head_dim]
    Matrix probabilities; // [queries, keys]; zero on hidden keys
};

// softmax(scale * Q K^T) V restricted to visible keys, renormalized over
// them. `mask` may be null for full attention. Throws MaskError if a row has
// no visible key.
AttentionResult attention_with_probs(const Matrix& q, const Matrix& k, const Matrix& v, const AttnMask* mask,
                                     double scale_factor);

Matrix masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttnMask& mask, double scale_factor);
Matrix dense_attention(const Matrix& q, const Matrix& k, const Matrix& v, double scale_factor);

// Decides which keys each (scale, block, head) may see.
class AttentionExecutor {
public:
    virtual ~AttentionExecutor() = default;
    // nullptr selects full attention.
    virtual const AttnMask* mask(std::size_t k, std::size_t block, std::size_t head) const = 0;
};

class DenseExecutor final : public AttentionExecutor {
public:
    const AttnMask* mask(std::size_t, std::size_t, std::size_t) const override { return nullptr; }
};

// Materializes every mask of a pattern up front.
class WindowedExecutor final : public AttentionExecutor {
public:
    WindowedExecutor(const WindowPattern& pattern, const ScaleSchedule& schedule, std::size_t depth, std::size_t heads);

    const AttnMask* mask(std::size_t k, std::size_t block, std::size_t head) const override;

private:
    std::size_t depth_;
    std::size_t heads_;
    std::vector<AttnMask> masks_;
};

// Attention matmul cost for one forward pass: each visible (query, key)
// pair costs 4 * head_dim FLOPs (QK^T and AV multiply-adds).
struct AttnFlops {
    std::uint64_t full = 0;
    std::uint64_t masked = 0;

    double saving() const { return full == 0 ? 0.0 : 1.0 - static_cast<double>(masked) / static_cast<double>(full); }
};

std::uint64_t attention_pair_flops(std::uint64_t visible_pairs, std::size_t head_dim);
AttnFlops attn_flops(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads, std::size_t head_dim);
AttnFlops attn_flops(const WindowPattern& pattern, std::size_t head_dim);

} // namespace msar
