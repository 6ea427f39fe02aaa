#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace morphdet::nn {

// Dense row-major double tensor. Rank is dynamic but almost everything in
// the model is rank 1 or 2.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double value);
  static Tensor scalar(double value) { return Tensor({1, 1}, {value}); }

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t ndim() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  // 2-D accessors; throw ShapeError on rank mismatch.
  std::size_t rows() const;
  std::size_t cols() const;
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& vec() { return data_; }
  const std::vector<double>& vec() const { return data_; }

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }
  bool all_finite() const;
  void fill(double value);

  std::string shape_str() const;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

std::string shape_str(const std::vector<std::size_t>& shape);

// Throws ShapeError with both shapes when a and b differ.
void require_same_shape(const Tensor& a, const Tensor& b, const char* where);

// C = A * B for 2-D tensors, cache-friendly i-k-j kernel.
Tensor matmul(const Tensor& a, const Tensor& b);
// C = A^T * B without materialising the transpose.
Tensor matmul_transA(const Tensor& a, const Tensor& b);
// C = A * B^T without materialising the transpose.
Tensor matmul_transB(const Tensor& a, const Tensor& b);

// y += x (shapes must match).
void axpy(Tensor& y, const Tensor& x, double alpha = 1.0);

}  // namespace morphdet::nn
