#include "msar/kv_cache.hpp"

#include "msar/error.hpp"

namespace msar {

KVCache::KVCache(std::size_t depth, std::size_t heads, std::size_t head_dim)
    : depth_(depth), heads_(heads), keys_(depth * heads, Matrix(0, head_dim)), values_(depth * heads, Matrix(0, head_dim))
{
}

std::size_t KVCache::slot(std::size_t block, std::size_t head) const
{
    if (block >= depth_ || head >= heads_) {
        throw RangeError("KVCache: (block, head) out of range");
    }
    return block * heads_ + head;
}

std::size_t KVCache::rows(std::size_t block, std::size_t head) const
{
    return keys_[slot(block, head)].rows();
}

std::size_t KVCache::rows() const
{
    if (keys_.empty()) {
        return 0;
    }
    const std::size_t expected = keys_.front().rows();
    for (std::size_t i = 0; i < keys_.size(); ++i) {
        if (keys_[i].rows() != expected || values_[i].rows() != expected) {
            throw StateError("KVCache: slots hold different row counts");
        }
    }
    return expected;
}

const Matrix& KVCache::keys(std::size_t block, std::size_t head) const
{
    return keys_[slot(block, head)];
}

const Matrix& KVCache::values(std::size_t block, std::size_t head) const
{
    return values_[slot(block, head)];
}

void KVCache::append(std::size_t block, std::size_t head, const Matrix& keys, const Matrix& values)
{
    const std::size_t s = slot(block, head);
    if (keys.rows() != values.rows()) {
        throw ShapeError("KVCache: key/value row counts differ");
    }
    keys_[s].append_rows(keys);
    values_[s].append_rows(values);
}

} // namespace msar
