#pragma once

#include "msar/matrix.hpp"

#include <cstddef>
#include <vector>

namespace msar {

// Keys and values per (block, head), one row per token processed so far.
// After scale k every slot holds exactly cum_tokens(k) rows.
class KVCache {
public:
    KVCache() = default;
    KVCache(std::size_t depth, std::size_t heads, std::size_t head_dim);

    std::size_t depth() const noexcept { return depth_; }
    std::size_t heads() const noexcept { return heads_; }

    // Row count of the (block, head) slot.
    std::size_t rows(std::size_t block, std::size_t head) const;
    // Row count shared by every slot; throws StateError if the slots disagree.
    std::size_t rows() const;

    const Matrix& keys(std::size_t block, std::size_t head) const;
    const Matrix& values(std::size_t block, std::size_t head) const;

    void append(std::size_t block, std::size_t head, const Matrix& keys, const Matrix& values);

private:
    std::size_t slot(std::size_t block, std::size_t head) const;

    std::size_t depth_ = 0;
    std::size_t heads_ = 0;
    std::vector<Matrix> keys_;
    std::vector<Matrix> values_;
};

} // namespace msar
