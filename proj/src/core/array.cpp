#include "mine/core/array.hpp"

#include <algorithm>
#include <functional>
#include <numeric>

#include "mine/core/error.hpp"

namespace mine {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += "x";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

Array::Array(Shape shape, double fill)
    : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("shape " + shape_str(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

Array Array::matrix(std::size_t rows, std::size_t cols,
                    std::vector<double> data) {
  return Array({rows, cols}, std::move(data));
}

std::size_t Array::rows() const {
  if (shape_.empty()) return 0;
  return cols() == 0 ? 0 : data_.size() / cols();
}

std::size_t Array::cols() const { return shape_.empty() ? 0 : shape_.back(); }

void Array::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_str(shape_) + " to " +
                         shape_str(shape));
  }
  return Array(std::move(shape), data_);
}

}  // namespace mine
