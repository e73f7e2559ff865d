#include "msfa/numcore/array.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace msfa {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Array::Array(Shape shape, Real fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

Array::Array(Shape shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw DimensionError("array shape " + shape_string(shape_) + " does not match " +
                         std::to_string(data_.size()) + " elements");
  }
}

Array Array::scalar(Real value) { return Array(Shape{}, std::vector<Real>{value}); }

Array Array::vector(std::initializer_list<Real> values) {
  return Array(Shape{values.size()}, std::vector<Real>(values));
}

Array Array::vector(std::span<const Real> values) {
  return Array(Shape{values.size()}, std::vector<Real>(values.begin(), values.end()));
}

Array Array::matrix(std::initializer_list<std::initializer_list<Real>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<Real> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw DimensionError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Array(Shape{r, c}, std::move(data));
}

Real& Array::at(std::size_t row, std::size_t col) {
  if (rank() != 2) throw DimensionError("at(row, col) on array of shape " + shape_string(shape_));
  return data_.at(row * shape_[1] + col);
}

Real Array::at(std::size_t row, std::size_t col) const {
  if (rank() != 2) throw DimensionError("at(row, col) on array of shape " + shape_string(shape_));
  return data_.at(row * shape_[1] + col);
}

Real Array::item() const {
  if (data_.size() != 1) throw DimensionError("item() on array of shape " + shape_string(shape_));
  return data_[0];
}

Array Array::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size()) {
    throw DimensionError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  return Array(std::move(shape), data_);
}

bool Array::all_finite() const {
  return std::all_of(data_.begin(), data_.end(), [](Real v) { return std::isfinite(v); });
}

void Array::fill(Real value) { std::fill(data_.begin(), data_.end(), value); }

Real max_abs_diff(const Array& a, const Array& b) {
  if (a.shape() != b.shape()) {
    throw DimensionError("max_abs_diff shapes " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
  Real m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace msfa
