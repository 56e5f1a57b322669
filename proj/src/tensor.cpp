#include "qtitle/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>

namespace qtitle {

std::string shape_string(std::span<const std::size_t> shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += "x";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    for (auto d : shape)
        if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape));
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (element_count(shape_) != data_.size())
        throw ShapeError(fmt::format("shape {} needs {} values, got {}", shape_string(shape_),
                                     element_count(shape_), data_.size()));
}

Tensor Tensor::vector(std::vector<double> data) {
    const auto n = data.size();
    return Tensor({n}, std::move(data));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> data) {
    return Tensor({rows, cols}, std::move(data));
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

void require_finite(std::span<const double> values, const char* where) {
    for (std::size_t i = 0; i < values.size(); ++i)
        if (!std::isfinite(values[i]))
            throw NumericError(fmt::format("non-finite value {} at index {} in {}", values[i], i, where));
}

}  // namespace qtitle
