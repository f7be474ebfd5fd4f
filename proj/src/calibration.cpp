#include "msar/calibration.hpp"

#include "msar/error.hpp"
#include "msar/generate.hpp"
#include "msar/io.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace msar {

__extension__ using int128 = __int128;

AttentionDump::AttentionDump(DumpHeader header) : header_(std::move(header))
{
    if (header_.schedule.scale_count() == 0 || header_.depth == 0 || header_.heads == 0) {
        throw FormatError("attention dump: empty layout");
    }
    std::size_t running = 0;
    for (std::size_t k = 1; k <= header_.schedule.scale_count(); ++k) {
        scale_offset_.push_back(running);
        running += header_.schedule.token_count(k) * header_.schedule.cum_tokens(k);
    }
    head_stride_ = running;
    sample_stride_ = head_stride_ * header_.depth * header_.heads;
    data_.assign(sample_stride_ * header_.sample_count, 0.0f);
}

std::size_t AttentionDump::offset(std::size_t sample, std::size_t block, std::size_t head, std::size_t k) const
{
    if (sample >= header_.sample_count || block >= header_.depth || head >= header_.heads || k < 1 ||
        k > header_.schedule.scale_count()) {
        throw RangeError("attention dump: index out of range");
    }
    return sample * sample_stride_ + (block * header_.heads + head) * head_stride_ + scale_offset_[k - 1];
}

std::span<float> AttentionDump::map(std::size_t sample, std::size_t block, std::size_t head, std::size_t k)
{
    const std::size_t size = header_.schedule.token_count(k) * header_.schedule.cum_tokens(k);
    return std::span<float>(data_).subspan(offset(sample, block, head, k), size);
}

std::span<const float> AttentionDump::map(std::size_t sample, std::size_t block, std::size_t head, std::size_t k) const
{
    const std::size_t size = header_.schedule.token_count(k) * header_.schedule.cum_tokens(k);
    return std::span<const float>(data_).subspan(offset(sample, block, head, k), size);
}

AttentionDump record_dump(const Model& model, std::span<const std::size_t> labels, const SamplerConfig& sampler)
{
    if (labels.empty()) {
        throw InputError("record_dump: no calibration labels");
    }
    const ModelConfig& config = model.config();
    AttentionDump dump(DumpHeader{config.schedule, config.depth, config.heads, labels.size()});
    for (std::size_t sample = 0; sample < labels.size(); ++sample) {
        GenerateOptions options;
        options.on_cond_attention = [&](std::size_t k, std::size_t block, std::size_t head, const Matrix& probs) {
            auto dst = dump.map(sample, block, head, k);
            const auto src = probs.values();
            std::transform(src.begin(), src.end(), dst.begin(), [](double v) { return static_cast<float>(v); });
        };
        generate(model, labels[sample], sampler, options);
    }
    return dump;
}

namespace {

constexpr char kDumpMagic[4] = {'L', 'V', 'A', 'D'};
constexpr std::uint32_t kDumpVersion = 1;

template <typename T>
void put_le(std::string& out, T value)
{
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        out.push_back(static_cast<char>((value >> (8 * i)) & 0xff));
    }
}

template <typename T>
T get_le(const unsigned char* bytes)
{
    T value = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) {
        value |= static_cast<T>(bytes[i]) << (8 * i);
    }
    return value;
}

} // namespace

void write_dump(const std::filesystem::path& path, const AttentionDump& dump)
{
    const DumpHeader& h = dump.header();
    const json header = {
        {"schedule", std::vector<std::size_t>(h.schedule.sides().begin(), h.schedule.sides().end())},
        {"depth", h.depth},
        {"heads", h.heads},
        {"sample_count", h.sample_count},
        {"dtype", "f32"},
    };
    const std::string header_text = header.dump();

    std::string bytes(kDumpMagic, sizeof(kDumpMagic));
    put_le<std::uint32_t>(bytes, kDumpVersion);
    put_le<std::uint64_t>(bytes, header_text.size());
    bytes += header_text;
    bytes.reserve(bytes.size() + dump.data().size() * 4);
    for (float v : dump.data()) {
        put_le<std::uint32_t>(bytes, std::bit_cast<std::uint32_t>(v));
    }

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw IoError("cannot write " + path.string());
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) {
        throw IoError("write failed for " + path.string());
    }
}

AttentionDump read_dump(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open " + path.string());
    }
    unsigned char prefix[16];
    if (!in.read(reinterpret_cast<char*>(prefix), sizeof(prefix))) {
        throw FormatError(path.string() + ": truncated dump prefix");
    }
    if (std::memcmp(prefix, kDumpMagic, sizeof(kDumpMagic)) != 0) {
        throw FormatError(path.string() + ": not an attention dump (bad magic)");
    }
    const auto version = get_le<std::uint32_t>(prefix + 4);
    if (version != kDumpVersion) {
        throw FormatError(path.string() + ": unsupported dump version " + std::to_string(version));
    }
    const auto header_len = get_le<std::uint64_t>(prefix + 8);
    if (header_len > (1u << 20)) {
        throw FormatError(path.string() + ": implausible header length");
    }
    std::string header_text(header_len, '\0');
    if (!in.read(header_text.data(), static_cast<std::streamsize>(header_len))) {
        throw FormatError(path.string() + ": truncated dump header");
    }

    DumpHeader header;
    try {
        const json doc = json::parse(header_text);
        if (doc.value("dtype", std::string("f32")) != "f32") {
            throw FormatError(path.string() + ": unsupported dtype");
        }
        header.schedule = ScaleSchedule(doc.at("schedule").get<std::vector<std::size_t>>());
        header.depth = doc.at("depth").get<std::size_t>();
        header.heads = doc.at("heads").get<std::size_t>();
        header.sample_count = doc.at("sample_count").get<std::size_t>();
    } catch (const json::exception& e) {
        throw FormatError(path.string() + ": bad dump header: " + e.what());
    } catch (const ConfigError& e) {
        throw FormatError(path.string() + ": bad dump header: " + e.what());
    }

    AttentionDump dump(header);
    auto data = dump.data();
    std::vector<unsigned char> raw(data.size() * 4);
    if (!in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
        throw FormatError(path.string() + ": dump body is shorter than its header declares");
    }
    if (in.peek() != std::char_traits<char>::eof()) {
        throw FormatError(path.string() + ": trailing bytes after dump body");
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        data[i] = std::bit_cast<float>(get_le<std::uint32_t>(raw.data() + 4 * i));
    }
    return dump;
}

AggregatedMaps::AggregatedMaps(const ScaleSchedule& schedule, std::size_t depth, std::size_t heads)
    : schedule_(schedule), depth_(depth), heads_(heads)
{
    maps_.reserve(depth * heads * schedule.scale_count());
    for (std::size_t b = 0; b < depth; ++b) {
        for (std::size_t h = 0; h < heads; ++h) {
            for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
                maps_.emplace_back(schedule.token_count(k), schedule.cum_tokens(k));
            }
        }
    }
}

const Matrix& AggregatedMaps::map(std::size_t block, std::size_t head, std::size_t k) const
{
    if (block >= depth_ || head >= heads_ || k < 1 || k > schedule_.scale_count()) {
        throw RangeError("aggregated maps: index out of range");
    }
    return maps_[(block * heads_ + head) * schedule_.scale_count() + (k - 1)];
}

Matrix& AggregatedMaps::map(std::size_t block, std::size_t head, std::size_t k)
{
    return const_cast<Matrix&>(std::as_const(*this).map(block, head, k));
}

AggregatedMaps aggregate(const AttentionDump& dump)
{
    const DumpHeader& h = dump.header();
    if (h.sample_count == 0) {
        throw FormatError("aggregate: dump holds no samples");
    }
    // 2^100 fixed point: exact for every f32 in [2^-77, 1], and sums of up to
    // 2^26 samples stay inside a signed 128-bit integer.
    constexpr int kFractionBits = 100;
    AggregatedMaps maps(h.schedule, h.depth, h.heads);
    std::vector<int128> acc;
    for (std::size_t b = 0; b < h.depth; ++b) {
        for (std::size_t hd = 0; hd < h.heads; ++hd) {
            for (std::size_t k = 1; k <= h.schedule.scale_count(); ++k) {
                Matrix& out = maps.map(b, hd, k);
                acc.assign(out.size(), 0);
                for (std::size_t s = 0; s < h.sample_count; ++s) {
                    const auto src = dump.map(s, b, hd, k);
                    for (std::size_t i = 0; i < src.size(); ++i) {
                        const float v = src[i];
                        if (!std::isfinite(v) || v < 0.0f || v > 1.0f) {
                            throw FormatError("aggregate: attention probability outside [0, 1]");
                        }
                        acc[i] += static_cast<int128>(std::ldexp(static_cast<double>(v), kFractionBits));
                    }
                }
                auto dst = out.values();
                const double n = static_cast<double>(h.sample_count);
                for (std::size_t i = 0; i < dst.size(); ++i) {
                    dst[i] = std::ldexp(static_cast<double>(acc[i]), -kFractionBits) / n;
                }
            }
        }
    }
    return maps;
}

double window_ratio(const Matrix& part, std::size_t w, std::span<const std::size_t> centers)
{
    if (centers.size() != part.rows()) {
        throw ShapeError("window_ratio: one center per query row required");
    }
    double total = 0.0;
    double inside = 0.0;
    for (std::size_t q = 0; q < part.rows(); ++q) {
        const auto row = part.row(q);
        for (double v : row) {
            total += v;
        }
        const BandRange band = band_range(centers[q], w, part.cols());
        for (std::size_t j = band.first; j < band.last; ++j) {
            inside += row[j];
        }
    }
    if (total == 0.0) {
        return 1.0;
    }
    return inside / total;
}

std::size_t fit_window(const Matrix& part, double r0, std::span<const std::size_t> centers)
{
    if (!(r0 > 0.0 && r0 <= 1.0)) {
        throw RangeError("fit_window: r0 must lie in (0, 1]");
    }
    if (window_ratio(part, 0, centers) >= r0) {
        return 0;
    }
    // R_w is non-decreasing in w (bands are nested and all entries are
    // non-negative), so the minimal width can be found by bisection.
    std::size_t lo = 0;            // ratio(lo) < r0
    std::size_t hi = part.cols();  // ratio(hi) == 1 >= r0
    while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        if (window_ratio(part, mid, centers) >= r0) {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    return hi;
}

WindowPattern design_pattern(const AttentionDump& dump, double r0, std::size_t sink_parts)
{
    if (!(r0 > 0.0 && r0 <= 1.0)) {
        throw RangeError("design_pattern: r0 must lie in (0, 1]");
    }
    const DumpHeader& h = dump.header();
    const std::size_t expected = AttentionDump(DumpHeader{h.schedule, h.depth, h.heads, 0}).sample_stride() *
                                 h.sample_count;
    if (dump.data().size() != expected) {
        throw FormatError("design_pattern: dump body does not match its schedule");
    }
    return design_pattern(aggregate(dump), r0, sink_parts);
}

WindowPattern design_pattern(const AggregatedMaps& maps, double r0, std::size_t sink_parts)
{
    if (!(r0 > 0.0 && r0 <= 1.0)) {
        throw RangeError("design_pattern: r0 must lie in (0, 1]");
    }
    const ScaleSchedule& schedule = maps.schedule();
    WindowPattern pattern;
    pattern.r0 = r0;
    pattern.sink_parts = sink_parts;
    pattern.schedule = schedule;
    pattern.depth = maps.depth();
    pattern.heads = maps.heads();

    for (std::size_t k = 1; k <= schedule.scale_count(); ++k) {
        const PartLayout layout = partition(schedule, k);
        for (std::size_t b = 0; b < maps.depth(); ++b) {
            for (std::size_t h = 0; h < maps.heads(); ++h) {
                const Matrix& full = maps.map(b, h, k);
                for (std::size_t p = 0; p < layout.parts.size(); ++p) {
                    const std::size_t index = p + 1;
                    const Part& part = layout.parts[p];
                    PatternKey key{k, b, h, index};
                    if (r0 == 1.0 || index == 1 || index <= sink_parts || !part.single_scale()) {
                        pattern.entries[key] = std::nullopt;
                        continue;
                    }
                    const Matrix slice = column_slice(full, part.key_start, part.width());
                    const auto centers = part_centers(schedule, k, part);
                    pattern.entries[key] = fit_window(slice, r0, centers);
                }
            }
        }
    }
    return pattern;
}

} // namespace msar
