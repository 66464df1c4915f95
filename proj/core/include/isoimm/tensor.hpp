#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <initializer_list>
#include <stdexcept>
#include <string>
#include <vector>

namespace isoimm {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using MatrixMap = Eigen::Map<Matrix>;
using ConstMatrixMap = Eigen::Map<const Matrix>;

class ShapeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Dense row-major tensor of 64-bit reals, rank 0 to 2.
///
/// Rank-1 tensors of length n are viewed as n x 1 columns by matrix(); rank 0
/// is a 1 x 1 scalar.
class Tensor {
 public:
  // Aligned so Eigen's vectorized reductions peel the same elements on every
  // allocation; otherwise summation order (and rounding) varies run to run.
  using Storage = std::vector<double, Eigen::aligned_allocator<double>>;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor zeros(std::size_t rows, std::size_t cols);
  static Tensor from(const Matrix& m);

  /// Change the shape, keeping the storage when the element count allows it.
  /// Element values are unspecified afterwards.
  void reshape(const std::vector<std::size_t>& shape);

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;
  bool empty() const { return data_.empty(); }

  Storage& data() { return data_; }
  const Storage& data() const { return data_; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }
  double item() const;

  MatrixMap matrix() { return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())}; }
  ConstMatrixMap matrix() const {
    return {data_.data(), static_cast<Eigen::Index>(rows()), static_cast<Eigen::Index>(cols())};
  }

  bool same_shape(const Tensor& other) const { return rows() == other.rows() && cols() == other.cols(); }
  bool all_finite() const;
  std::string shape_string() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  std::vector<std::size_t> shape_;
  Storage data_;
};

}  // namespace isoimm
