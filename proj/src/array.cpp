#include "relex/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "relex/errors.hpp"

namespace relex {

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

Array::Array(Shape shape) : shape_(std::move(shape)), data_(shape_size(shape_), 0.0) {}

Array::Array(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("array data has " + std::to_string(data_.size()) +
                     " entries, shape " + shape_to_string(shape_) + " needs " +
                     std::to_string(shape_size(shape_)));
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw ValidationError("array entry is not finite");
  }
}

Array Array::vector(std::initializer_list<double> values) {
  return Array({values.size()}, std::vector<double>(values));
}

Array Array::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Array({n}, std::move(values));
}

Array Array::matrix(std::size_t rows, std::size_t cols,
                    std::initializer_list<double> values) {
  return Array({rows, cols}, std::vector<double>(values));
}

Array Array::full(Shape shape, double value) {
  Array out(std::move(shape));
  out.fill(value);
  return out;
}

void Array::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

}  // namespace relex
