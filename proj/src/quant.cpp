#include "msar/quant.hpp"

#include "msar/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace msar {

void validate_bits(int bits)
{
    if (bits < 2 || bits > 16) {
        throw RangeError("bit-width " + std::to_string(bits) + " outside [2, 16]");
    }
}

QuantParams calc_params(std::span<const double> x, int bits)
{
    validate_bits(bits);
    if (x.empty()) {
        throw NumericError("calc_params: empty tensor");
    }
    double lo = x[0];
    double hi = x[0];
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw NumericError("calc_params: non-finite value");
        }
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    QuantParams p;
    p.bits = bits;
    p.zero_point = (hi + lo) / 2.0;
    double spread = 0.0;
    for (double v : x) {
        spread = std::max(spread, std::abs(v - p.zero_point));
    }
    p.scale = std::max(spread / static_cast<double>(p.qmax()), kMinQuantScale);
    return p;
}

std::int32_t quantize_value(double x, const QuantParams& params)
{
    const double bound = static_cast<double>(params.qmax());
    const double scaled = std::clamp((x - params.zero_point) / params.scale, -bound, bound);
    // std::round rounds half away from zero.
    return static_cast<std::int32_t>(std::round(scaled));
}

QuantTensor quantize(std::span<const double> x, const QuantParams& params, std::vector<std::size_t> shape)
{
    validate_bits(params.bits);
    if (!(params.scale > 0.0)) {
        throw NumericError("quantize: scale must be positive");
    }
    QuantTensor out;
    out.params = params;
    out.shape = shape.empty() ? std::vector<std::size_t>{x.size()} : std::move(shape);
    out.values.reserve(x.size());
    for (double v : x) {
        out.values.push_back(quantize_value(v, params));
    }
    return out;
}

std::vector<double> dequantize(const QuantTensor& q)
{
    std::vector<double> out;
    out.reserve(q.values.size());
    for (std::int32_t v : q.values) {
        out.push_back(static_cast<double>(v) * q.params.scale + q.params.zero_point);
    }
    return out;
}

std::vector<double> fake_quant(std::span<const double> x, int bits)
{
    if (x.empty()) {
        return {};
    }
    return dequantize(quantize(x, calc_params(x, bits)));
}

Matrix fake_quant(const Matrix& x, int bits)
{
    return Matrix(x.rows(), x.cols(), fake_quant(x.values(), bits));
}

} // namespace msar
