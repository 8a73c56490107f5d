// Copyright 2026 The ssmdiff Authors.
// SPDX-License-Identifier: Apache-2.0

#include "ssmdiff/autodiff/ndarray.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace ssmdiff {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ", ";
    os << shape[i];
  }
  os << ']';
  return os.str();
}

ShapeError::ShapeError(const std::string& op, const std::string& detail)
    : std::invalid_argument(op + ": " + detail) {}

NdArray::NdArray(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

NdArray::NdArray(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_numel(shape_)) {
    throw ShapeError("NdArray", "shape " + shape_str(shape_) + " needs " +
                                    std::to_string(shape_numel(shape_)) +
                                    " values, got " +
                                    std::to_string(data_.size()));
  }
}

NdArray NdArray::scalar(double value) { return NdArray({1}, {value}); }

NdArray NdArray::from(std::initializer_list<double> values) {
  return NdArray({values.size()}, std::vector<double>(values));
}

std::size_t NdArray::offset(std::initializer_list<std::size_t> index) const {
  if (index.size() != shape_.size()) {
    throw ShapeError("NdArray::at", "index rank " +
                                        std::to_string(index.size()) +
                                        " vs shape " + shape_str(shape_));
  }
  std::size_t off = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= shape_[axis]) {
      throw std::out_of_range("NdArray::at: index out of range on axis " +
                              std::to_string(axis));
    }
    off = off * shape_[axis] + i;
    ++axis;
  }
  return off;
}

double NdArray::at(std::initializer_list<std::size_t> index) const {
  return data_[offset(index)];
}

double& NdArray::at(std::initializer_list<std::size_t> index) {
  return data_[offset(index)];
}

double NdArray::item() const {
  if (data_.size() != 1) {
    throw ShapeError("NdArray::item", "expected one element, shape " +
                                          shape_str(shape_));
  }
  return data_[0];
}

NdArray NdArray::reshaped(Shape shape) const& {
  NdArray copy = *this;
  return std::move(copy).reshaped(std::move(shape));
}

NdArray NdArray::reshaped(Shape shape) && {
  if (shape_numel(shape) != data_.size()) {
    throw ShapeError("reshape", shape_str(shape_) + " -> " + shape_str(shape));
  }
  shape_ = std::move(shape);
  return std::move(*this);
}

bool NdArray::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(),
                     [](double v) { return std::isfinite(v); });
}

double max_abs_diff(const NdArray& a, const NdArray& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff",
                     shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    m = std::max(m, std::abs(a[i] - b[i]));
  }
  return m;
}

}  // namespace ssmdiff
