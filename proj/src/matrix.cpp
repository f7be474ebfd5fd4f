#include "msar/matrix.hpp"

#include "msar/error.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace msar {

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill)
{
}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> values)
    : rows_(rows), cols_(cols), data_(std::move(values))
{
    if (data_.size() != rows * cols) {
        throw ShapeError("matrix value count " + std::to_string(data_.size()) + " does not match " +
                         std::to_string(rows) + "x" + std::to_string(cols));
    }
}

void Matrix::append_rows(const Matrix& other)
{
    if (empty() && rows_ == 0) {
        cols_ = other.cols_;
    }
    if (other.cols_ != cols_) {
        throw ShapeError("append_rows: column mismatch");
    }
    data_.insert(data_.end(), other.data_.begin(), other.data_.end());
    rows_ += other.rows_;
}

Matrix matmul(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.rows()) {
        throw ShapeError("matmul: inner dimensions differ");
    }
    Matrix out(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        auto dst = out.row(i);
        for (std::size_t p = 0; p < a.cols(); ++p) {
            const double av = a(i, p);
            const auto src = b.row(p);
            for (std::size_t j = 0; j < b.cols(); ++j) {
                dst[j] += av * src[j];
            }
        }
    }
    return out;
}

Matrix matmul_transposed(const Matrix& a, const Matrix& b)
{
    if (a.cols() != b.cols()) {
        throw ShapeError("matmul_transposed: inner dimensions differ");
    }
    Matrix out(a.rows(), b.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        const auto lhs = a.row(i);
        for (std::size_t j = 0; j < b.rows(); ++j) {
            const auto rhs = b.row(j);
            double acc = 0.0;
            for (std::size_t p = 0; p < lhs.size(); ++p) {
                acc += lhs[p] * rhs[p];
            }
            out(i, j) = acc;
        }
    }
    return out;
}

namespace {

template <typename Op>
Matrix elementwise(const Matrix& a, const Matrix& b, Op op)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("elementwise: shape mismatch");
    }
    Matrix out(a.rows(), a.cols());
    auto dst = out.values();
    const auto lhs = a.values();
    const auto rhs = b.values();
    for (std::size_t i = 0; i < dst.size(); ++i) {
        dst[i] = op(lhs[i], rhs[i]);
    }
    return out;
}

} // namespace

Matrix operator+(const Matrix& a, const Matrix& b)
{
    return elementwise(a, b, [](double x, double y) { return x + y; });
}

Matrix operator-(const Matrix& a, const Matrix& b)
{
    return elementwise(a, b, [](double x, double y) { return x - y; });
}

Matrix column_slice(const Matrix& m, std::size_t first, std::size_t count)
{
    if (first + count > m.cols()) {
        throw ShapeError("column_slice out of range");
    }
    Matrix out(m.rows(), count);
    for (std::size_t r = 0; r < m.rows(); ++r) {
        const auto src = m.row(r).subspan(first, count);
        std::copy(src.begin(), src.end(), out.row(r).begin());
    }
    return out;
}

double frobenius_norm(const Matrix& m)
{
    double acc = 0.0;
    for (double v : m.values()) {
        acc += v * v;
    }
    return std::sqrt(acc);
}

double max_abs_diff(const Matrix& a, const Matrix& b)
{
    if (a.rows() != b.rows() || a.cols() != b.cols()) {
        throw ShapeError("max_abs_diff: shape mismatch");
    }
    double worst = 0.0;
    const auto lhs = a.values();
    const auto rhs = b.values();
    for (std::size_t i = 0; i < lhs.size(); ++i) {
        worst = std::max(worst, std::abs(lhs[i] - rhs[i]));
    }
    return worst;
}

} // namespace msar
