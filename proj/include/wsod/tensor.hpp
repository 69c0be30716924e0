#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace wsod {

using Shape = std::vector<std::size_t>;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Binary label vector (one byte per bit, values 0 or 1).
using BitVector = std::vector<std::uint8_t>;

std::size_t element_count(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major tensor of doubles.
///
/// Rank-3 tensors are read as C x H x W and rank-4 tensors as N x C x H x W;
/// the accessors below assume that convention.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> values);

  /// Like the constructor, but also rejects NaN and infinite values.
  static Tensor checked(Shape shape, std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return values_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_.at(axis); }

  std::span<double> values() { return values_; }
  std::span<const double> values() const { return values_; }
  double* data() { return values_.data(); }
  const double* data() const { return values_.data(); }

  double& operator[](std::size_t i) { return values_[i]; }
  double operator[](std::size_t i) const { return values_[i]; }

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return values_[(c * shape_[1] + y) * shape_[2] + x];
  }
  double& at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) {
    return values_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }
  double at(std::size_t n, std::size_t c, std::size_t y, std::size_t x) const {
    return values_[((n * shape_[1] + c) * shape_[2] + y) * shape_[3] + x];
  }

  bool all_finite() const;
  void fill(double value);

  Tensor& operator+=(const Tensor& other);
  Tensor& operator*=(double scale);

  /// Exact (bitwise for finite values) equality of shape and contents.
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

}  // namespace wsod
