#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "msfa/numcore/errors.hpp"

namespace msfa {

#ifdef MSFA_SINGLE_PRECISION
using Real = float;
#else
using Real = double;
#endif

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array of Real.
///
/// Invariant: shape_size(shape()) == data().size(). A rank-0 array (empty
/// shape) holds exactly one scalar.
class Array {
 public:
  Array() : shape_{}, data_(1, Real{0}) {}
  explicit Array(Shape shape, Real fill = Real{0});
  Array(Shape shape, std::vector<Real> data);

  static Array scalar(Real value);
  static Array vector(std::initializer_list<Real> values);
  static Array vector(std::span<const Real> values);
  /// Nested-list convenience for tests: rows of equal length.
  static Array matrix(std::initializer_list<std::initializer_list<Real>> rows);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<Real> data() { return data_; }
  std::span<const Real> data() const { return data_; }
  Real* raw() { return data_.data(); }
  const Real* raw() const { return data_.data(); }

  Real& operator[](std::size_t i) { return data_[i]; }
  Real operator[](std::size_t i) const { return data_[i]; }
  Real& at(std::size_t row, std::size_t col);
  Real at(std::size_t row, std::size_t col) const;

  /// Value of a size-1 array.
  Real item() const;

  /// Same data, new shape with equal element count.
  Array reshaped(Shape shape) const;

  bool all_finite() const;
  void fill(Real value);

  friend bool operator==(const Array& a, const Array& b) {
    return a.shape_ == b.shape_ && a.data_ == b.data_;
  }

 private:
  Shape shape_;
  std::vector<Real> data_;
};

/// Largest absolute elementwise difference; shapes must match.
Real max_abs_diff(const Array& a, const Array& b);

}  // namespace msfa
