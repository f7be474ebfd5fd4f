#pragma once

#include "msar/config.hpp"
#include "msar/matrix.hpp"
#include "msar/random.hpp"
#include "msar/sparse_attention.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

namespace msar::test {

// Small enough that a full generation takes a few milliseconds.
inline ModelConfig tiny_config(std::uint64_t seed = 7, std::vector<std::size_t> sides = {1, 2, 3, 4})
{
    ModelConfig c;
    c.schedule = ScaleSchedule(std::move(sides));
    c.depth = 2;
    c.heads = 2;
    c.dim = 16;
    c.vocab = 32;
    c.class_count = 10;
    c.seed = seed;
    return c;
}

inline Matrix random_matrix(Rng& rng, std::size_t rows, std::size_t cols, double sd = 1.0)
{
    Matrix m(rows, cols);
    for (double& v : m.values()) {
        v = sd * rng.normal();
    }
    return m;
}

// Dense softmax with -inf added on hidden keys, accumulated in long double.
inline Matrix oracle_masked_attention(const Matrix& q, const Matrix& k, const Matrix& v, const AttnMask& mask,
                                      double scale)
{
    const long double neg_inf = -std::numeric_limits<long double>::infinity();
    Matrix out(q.rows(), v.cols());
    std::vector<long double> logits(k.rows());
    for (std::size_t i = 0; i < q.rows(); ++i) {
        long double top = neg_inf;
        for (std::size_t j = 0; j < k.rows(); ++j) {
            long double dot = 0;
            for (std::size_t d = 0; d < q.cols(); ++d) {
                dot += static_cast<long double>(q(i, d)) * k(j, d);
            }
            logits[j] = dot * scale + (mask.visible(i, j) ? 0.0L : neg_inf);
            top = std::max(top, logits[j]);
        }
        long double z = 0;
        for (auto& l : logits) {
            l = std::exp(l - top);
            z += l;
        }
        for (std::size_t d = 0; d < v.cols(); ++d) {
            long double acc = 0;
            for (std::size_t j = 0; j < k.rows(); ++j) {
                acc += logits[j] / z * v(j, d);
            }
            out(i, d) = static_cast<double>(acc);
        }
    }
    return out;
}

// R_w by direct membership test |j - c| <= w - 1 over every column.
inline double oracle_window_ratio(const Matrix& part, std::size_t w, const std::vector<std::size_t>& centers)
{
    long double total = 0;
    long double inside = 0;
    for (std::size_t r = 0; r < part.rows(); ++r) {
        for (std::size_t j = 0; j < part.cols(); ++j) {
            total += part(r, j);
            const long double dist = std::abs(static_cast<long double>(j) - static_cast<long double>(centers[r]));
            if (w > 0 && dist <= static_cast<long double>(w) - 1) {
                inside += part(r, j);
            }
        }
    }
    return total == 0 ? 1.0 : static_cast<double>(inside / total);
}

inline std::size_t oracle_cum_tokens(const std::vector<std::size_t>& sides, std::size_t k)
{
    std::size_t n = 0;
    for (std::size_t i = 0; i < k; ++i) {
        n += sides[i] * sides[i];
    }
    return n;
}

inline double rel_l2(const Matrix& a, const Matrix& ref)
{
    return frobenius_norm(a - ref) / frobenius_norm(ref);
}

// Fresh per-test directory under the build tree's temp area.
inline std::filesystem::path scratch_dir(const std::string& name)
{
    auto dir = std::filesystem::temp_directory_path() / ("msar_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

} // namespace msar::test
