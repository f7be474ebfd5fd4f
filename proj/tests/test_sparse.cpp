#include "doctest.h"
#include "support.hpp"

#include "msar/error.hpp"
#include "msar/generate.hpp"
#include "msar/model.hpp"
#include "msar/pattern.hpp"
#include "msar/sparse_attention.hpp"

#include <cmath>

using namespace msar;
using msar::test::random_matrix;

namespace {

AttnMask random_mask(Rng& rng, std::size_t rows, std::size_t cols)
{
    AttnMask mask(rows, cols, false);
    for (std::size_t r = 0; r < rows; ++r) {
        if (rng.uniform() < 0.3) {
            mask.set(r, rng.below(cols), true); // single visible key
            continue;
        }
        for (std::size_t c = 0; c < cols; ++c) {
            mask.set(r, c, rng.uniform() < 0.5);
        }
        mask.set(r, rng.below(cols), true);
    }
    return mask;
}

WindowPattern windowed_pattern(const ScaleSchedule& s, std::size_t depth, std::size_t heads, std::size_t w)
{
    WindowPattern p = full_pattern(s, depth, heads);
    p.r0 = 0.5;
    for (auto& [key, width] : p.entries) {
        if (key.part > 1) {
            width = w;
        }
    }
    return p;
}

} // namespace

TEST_CASE("pattern_to_mask examples")
{
    const ScaleSchedule s = default_schedule();
    const WindowPattern full = full_pattern(s, 2, 2);
    const AttnMask all = pattern_to_mask(full, s, 5, 1, 1);
    CHECK(all.visible_count() == 25u * 55u);

    WindowPattern p = full;
    p.r0 = 0.5;
    p.entries[PatternKey{5, 0, 0, 3}] = 1;
    const AttnMask diag = pattern_to_mask(p, s, 5, 0, 0);
    for (std::size_t q = 0; q < 25; ++q) {
        for (std::size_t j = 30; j < 55; ++j) {
            CHECK(diag.visible(q, j) == (j - 30 == q));
        }
        CHECK(diag.row_visible_count(q) == 30 + 1);
    }

    p.entries[PatternKey{5, 0, 0, 3}] = 2;
    const AttnMask band = pattern_to_mask(p, s, 5, 0, 0);
    for (std::size_t q = 0; q < 25; ++q) {
        std::size_t in_part = 0;
        for (std::size_t j = 30; j < 55; ++j) {
            in_part += band.visible(q, j) ? 1 : 0;
        }
        CHECK(in_part <= 3);
        CHECK(in_part >= 2);
    }

    CHECK_THROWS_AS(pattern_to_mask(p, ScaleSchedule({1, 2, 3, 4, 5, 7}), 5, 0, 0), FingerprintError);
}

TEST_CASE("masked_attention examples")
{
    Rng rng(1);
    const Matrix q = random_matrix(rng, 9, 8);
    const Matrix k = random_matrix(rng, 14, 8);
    const Matrix v = random_matrix(rng, 14, 8);
    const double scale = 1.0 / std::sqrt(8.0);

    CHECK(max_abs_diff(masked_attention(q, k, v, AttnMask(9, 14, true), scale), dense_attention(q, k, v, scale)) <=
          1e-6);

    AttnMask single(9, 14, false);
    for (std::size_t r = 0; r < 9; ++r) {
        single.set(r, (r * 5) % 14, true);
    }
    const Matrix out = masked_attention(q, k, v, single, scale);
    for (std::size_t r = 0; r < 9; ++r) {
        for (std::size_t d = 0; d < 8; ++d) {
            CHECK(out(r, d) == v((r * 5) % 14, d));
        }
    }

    AttnMask empty_row(9, 14, true);
    for (std::size_t c = 0; c < 14; ++c) {
        empty_row.set(4, c, false);
    }
    CHECK_THROWS_AS(masked_attention(q, k, v, empty_row, scale), MaskError);
}

TEST_CASE("masked_attention matches the dense -inf oracle on random instances")
{
    Rng rng(42);
    for (int trial = 0; trial < 50; ++trial) {
        const std::size_t n = 1 + rng.below(12);
        const std::size_t m = 1 + rng.below(20);
        const std::size_t d = 1 + rng.below(8);
        const Matrix q = random_matrix(rng, n, d, 2.0);
        const Matrix k = random_matrix(rng, m, d, 2.0);
        const Matrix v = random_matrix(rng, m, d);
        const AttnMask mask = random_mask(rng, n, m);
        const double scale = 1.0 / std::sqrt(static_cast<double>(d));
        const AttentionResult r = attention_with_probs(q, k, v, &mask, scale);
        CHECK(max_abs_diff(r.output, msar::test::oracle_masked_attention(q, k, v, mask, scale)) <= 1e-6);
        for (std::size_t i = 0; i < n; ++i) {
            double sum = 0.0;
            for (std::size_t j = 0; j < m; ++j) {
                if (!mask.visible(i, j)) {
                    CHECK(r.probabilities(i, j) == 0.0);
                }
                sum += r.probabilities(i, j);
            }
            CHECK(std::abs(sum - 1.0) <= 1e-5);
        }
    }
}

TEST_CASE("attn_flops of FULL and half-visible patterns")
{
    const ScaleSchedule s = default_schedule();
    const AttnFlops full = attn_flops(full_pattern(s, 4, 4), 16);
    CHECK(full.saving() == 0.0);
    CHECK(full.masked == full.full);
    // Closed form: 4 * head_dim per (query, key) pair.
    std::uint64_t pairs = 0;
    for (std::size_t k = 1; k <= 6; ++k) {
        pairs += s.token_count(k) * s.cum_tokens(k);
    }
    CHECK(full.full == 4u * 16u * 4u * 4u * pairs);
    CHECK(attn_flops(s, 4, 4, 16).full == full.full);

    // Five of ten keys visible in every row.
    AttnMask half(6, 10, false);
    for (std::size_t r = 0; r < 6; ++r) {
        for (std::size_t c = 0; c < 5; ++c) {
            half.set(r, (c * 2 + r) % 10, true);
        }
    }
    const double saving =
        1.0 - static_cast<double>(attention_pair_flops(half.visible_count(), 8)) /
                  static_cast<double>(attention_pair_flops(6 * 10, 8));
    CHECK(saving == 0.5);
}

TEST_CASE("windowed patterns cost less and run stats agree with the estimator")
{
    ModelConfig c = msar::test::tiny_config(3, {1, 2, 3, 4, 5, 6});
    const Model m = build_model(c);
    const WindowPattern p = windowed_pattern(c.schedule, c.depth, c.heads, 2);
    const AttnFlops est = attn_flops(p, c.head_dim());
    CHECK(est.masked < est.full);

    GenerateOptions opts;
    opts.pattern = &p;
    const auto run = generate(m, 1, {}, opts);
    CHECK(run.stats.attention_flops_cond == est.masked);
    CHECK(run.stats.attention_flops_uncond == est.masked);
    const auto base = generate(m, 1, {});
    CHECK(base.stats.attention_flops_cond == est.full);
}

TEST_CASE("WindowedExecutor rejects mismatched patterns")
{
    const ScaleSchedule s = default_schedule();
    const WindowPattern p = full_pattern(s, 2, 2);
    CHECK_THROWS_AS(WindowedExecutor(p, ScaleSchedule({1, 2, 3}), 2, 2), FingerprintError);
    CHECK_THROWS_AS(WindowedExecutor(p, s, 3, 2), FingerprintError);
}
