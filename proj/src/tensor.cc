#include "gner/tensor.h"

#include <cmath>
#include <sstream>

namespace gner {

std::string ShapeString(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

size_t ShapeSize(const Shape& shape) {
  size_t n = 1;
  for (size_t d : shape) n *= d;
  return n;
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(ShapeSize(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (ShapeSize(shape_) != data_.size()) {
    throw Error("tensor shape " + ShapeString(shape_) + " does not match " +
                std::to_string(data_.size()) + " values");
  }
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::Vector(std::vector<double> values) {
  size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::Matrix(size_t rows, size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

void Tensor::Fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::Accumulate(const Tensor& other) {
  if (other.shape_ != shape_) {
    throw Error("cannot accumulate " + ShapeString(other.shape_) + " into " +
                ShapeString(shape_));
  }
  for (size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace gner
