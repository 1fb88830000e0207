#ifndef GNER_TENSOR_H_
#define GNER_TENSOR_H_

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace gner {

// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Shape = std::vector<size_t>;

std::string ShapeString(const Shape& shape);

using RowMajorMatrix =
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatrixMap = Eigen::Map<RowMajorMatrix>;
using ConstMatrixMap = Eigen::Map<const RowMajorMatrix>;

// Dense row-major array of doubles. Rank 0, 1 and 2 are used throughout;
// a rank-1 tensor behaves as a single row wherever a matrix is expected.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> values);
  static Tensor Matrix(size_t rows, size_t cols, std::vector<double> values);
  static Tensor ZerosLike(const Tensor& other) { return Tensor(other.shape_); }

  const Shape& shape() const { return shape_; }
  size_t rank() const { return shape_.size(); }
  size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // Leading extent when viewed as a matrix (1 for rank 0 and 1).
  size_t rows() const { return rank() == 2 ? shape_[0] : 1; }
  // Last-axis extent when viewed as a matrix.
  size_t cols() const { return rank() == 0 ? 1 : shape_.back(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<double> values() { return data_; }
  std::span<const double> values() const { return data_; }
  std::vector<double>& storage() { return data_; }
  const std::vector<double>& storage() const { return data_; }

  double& operator[](size_t i) { return data_[i]; }
  double operator[](size_t i) const { return data_[i]; }
  double& at(size_t r, size_t c) { return data_[r * cols() + c]; }
  double at(size_t r, size_t c) const { return data_[r * cols() + c]; }

  MatrixMap AsMatrix() { return MatrixMap(data(), rows(), cols()); }
  ConstMatrixMap AsMatrix() const {
    return ConstMatrixMap(data(), rows(), cols());
  }

  void Fill(double value);
  // this += other, shapes must match.
  void Accumulate(const Tensor& other);
  bool AllFinite() const;

  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

size_t ShapeSize(const Shape& shape);

}  // namespace gner

#endif  // GNER_TENSOR_H_
