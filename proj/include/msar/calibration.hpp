#pragma once

#include "msar/config.hpp"
#include "msar/matrix.hpp"
#include "msar/model.hpp"
#include "msar/pattern.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace msar {

struct DumpHeader {
    ScaleSchedule schedule;
    std::size_t depth = 0;
    std::size_t heads = 0;
    std::size_t sample_count = 0;

    friend bool operator==(const DumpHeader&, const DumpHeader&) = default;
};

// Post-softmax attention maps of calibration runs. Each (sample, block,
// head, scale k) map is [s_k^2, cum_tokens(k)] f32, stored contiguously in
// that nesting order.
class AttentionDump {
public:
    explicit AttentionDump(DumpHeader header);

    const DumpHeader& header() const noexcept { return header_; }

    std::span<float> map(std::size_t sample, std::size_t block, std::size_t head, std::size_t k);
    std::span<const float> map(std::size_t sample, std::size_t block, std::size_t head, std::size_t k) const;

    std::span<const float> data() const noexcept { return data_; }
    std::span<float> data() noexcept { return data_; }

    // Floats per sample.
    std::size_t sample_stride() const noexcept { return sample_stride_; }

private:
    std::size_t offset(std::size_t sample, std::size_t block, std::size_t head, std::size_t k) const;

    DumpHeader header_;
    std::vector<std::size_t> scale_offset_; // within one (block, head)
    std::size_t head_stride_ = 0;
    std::size_t sample_stride_ = 0;
    std::vector<float> data_;
};

// Runs the floating-point baseline once per label and captures every
// conditional-stream attention map.
AttentionDump record_dump(const Model& model, std::span<const std::size_t> labels, const SamplerConfig& sampler);

// Binary layout: "LVAD", u32 version, u64 header length, header JSON, then
// little-endian f32 maps in (sample, block, head, scale) order.
void write_dump(const std::filesystem::path& path, const AttentionDump& dump);
AttentionDump read_dump(const std::filesystem::path& path);

// Element-wise mean of each (block, head, scale) map over samples.
class AggregatedMaps {
public:
    AggregatedMaps(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads);

    const Matrix& map(std::size_t block, std::size_t head, std::size_t k) const;
    Matrix& map(std::size_t block, std::size_t head, std::size_t k);

    const ScaleSchedule& schedule() const noexcept { return schedule_; }
    std::size_t depth() const noexcept { return depth_; }
    std::size_t heads() const noexcept { return heads_; }

private:
    ScaleSchedule schedule_;
    std::size_t depth_;
    std::size_t heads_;
    std::vector<Matrix> maps_;
};

// Accumulates in fixed point, so the result does not depend on sample order
// and is unchanged when every sample is repeated.
AggregatedMaps aggregate(const AttentionDump& dump);

// Attention mass inside band(q, w) around each query's center divided by
// the part's total mass; 1 for an all-zero part.
double window_ratio(const Matrix& part, std::size_t w, std::span<const std::size_t> centers);

// Smallest w in [0, part width] with window_ratio >= r0.
std::size_t fit_window(const Matrix& part, double r0, std::span<const std::size_t> centers);

// Windows for every (scale, block, head, part) of the aggregated dump. The
// first (merged) part and parts with index <= sink_parts stay FULL, as does
// everything when r0 == 1.
WindowPattern design_pattern(const AttentionDump& dump, double r0, std::size_t sink_parts = 3);
WindowPattern design_pattern(const AggregatedMaps& maps, double r0, std::size_t sink_parts = 3);

} // namespace msar
