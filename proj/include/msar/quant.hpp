#pragma once

#include "msar/matrix.hpp"

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace msar {

// Floor applied to the scale of zero-range tensors.
inline constexpr double kMinQuantScale = 1e-12;

// Per-tensor min-max parameters: x ~= q * scale + zero_point with q in
// [-qmax, qmax], qmax = 2^(bits-1) - 1.
struct QuantParams {
    double scale = 1.0;
    double zero_point = 0.0;
    int bits = 8;

    std::int32_t qmax() const noexcept { return (std::int32_t{1} << (bits - 1)) - 1; }
};

struct QuantTensor {
    std::vector<std::int32_t> values;
    QuantParams params;
    std::vector<std::size_t> shape;
};

// Throws RangeError for bit-widths outside [2, 16].
void validate_bits(int bits);

// z = (max + min) / 2, s = max|x - z| / qmax. Throws NumericError on empty
// or non-finite input.
QuantParams calc_params(std::span<const double> x, int bits);

std::int32_t quantize_value(double x, const QuantParams& params);
QuantTensor quantize(std::span<const double> x, const QuantParams& params, std::vector<std::size_t> shape = {});
std::vector<double> dequantize(const QuantTensor& q);

// Quantize then dequantize with parameters computed from `x` itself. This is
// the dynamic (online) path used for activations and attention inputs.
std::vector<double> fake_quant(std::span<const double> x, int bits);
Matrix fake_quant(const Matrix& x, int bits);

} // namespace msar
