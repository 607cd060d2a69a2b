// SPDX-License-Identifier: Apache-2.0
#include "bayesarch/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace bayesarch {

std::string shape_str(const Shape& shape) {
    return fmt::format("[{}]", fmt::join(shape, ", "));
}

std::size_t shape_numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_numel(shape_) != data_.size()) {
        throw ShapeError(fmt::format("tensor: shape {} needs {} values, got {}", shape_str(shape_),
                                     shape_numel(shape_), data_.size()));
    }
}

Tensor Tensor::vector(std::vector<double> v) {
    const std::size_t n = v.size();
    return Tensor(Shape{n}, std::move(v));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
    return Tensor(Shape{rows, cols}, std::move(v));
}

std::size_t Tensor::rows() const {
    if (rank() != 2) throw ShapeError(fmt::format("rows(): expected rank 2, got {}", shape_str(shape_)));
    return shape_[0];
}

std::size_t Tensor::cols() const {
    if (rank() != 2) throw ShapeError(fmt::format("cols(): expected rank 2, got {}", shape_str(shape_)));
    return shape_[1];
}

double Tensor::item() const {
    if (data_.size() != 1) throw ShapeError(fmt::format("item(): tensor of shape {} is not a scalar", shape_str(shape_)));
    return data_[0];
}

Tensor Tensor::reshaped(Shape shape) const {
    if (shape_numel(shape) != data_.size()) {
        throw ShapeError(fmt::format("reshape: {} -> {} changes element count", shape_str(shape_), shape_str(shape)));
    }
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const {
    for (double v : data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace bayesarch
