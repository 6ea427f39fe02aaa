#include "morphdet/tensor.hpp"

#include <cmath>
#include <sstream>

#include "morphdet/errors.hpp"

namespace morphdet::nn {

namespace {
std::size_t product(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t d : shape) n *= d;
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(product(shape_), 0.0) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (data_.size() != product(shape_)) {
    throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                     " does not match shape " + shape_str());
  }
}

Tensor Tensor::full(std::vector<std::size_t> shape, double value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.size() != 2) throw ShapeError("rows() on non-2D tensor " + shape_str());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) throw ShapeError("cols() on non-2D tensor " + shape_str());
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

bool Tensor::all_finite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

void Tensor::fill(double value) {
  for (double& v : data_) v = value;
}

std::string Tensor::shape_str() const { return morphdet::nn::shape_str(shape_); }

std::string shape_str(const std::vector<std::size_t>& shape) {
  std::ostringstream os;
  os << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << "x";
    os << shape[i];
  }
  os << "]";
  return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* where) {
  if (!a.same_shape(b)) {
    throw ShapeError(std::string(where) + ": shape mismatch " + a.shape_str() +
                     " vs " + b.shape_str());
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ, " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  Tensor c({n, m});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = pa + i * k;
    double* ci = pc + i * m;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = ai[kk];
      const double* bk = pb + kk * m;
      for (std::size_t j = 0; j < m; ++j) ci[j] += aik * bk[j];
    }
  }
  return c;
}

Tensor matmul_transA(const Tensor& a, const Tensor& b) {
  // a: M x K, b: M x N  ->  c = a^T b: K x N
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != m) {
    throw ShapeError("matmul_transA: row counts differ, " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  Tensor c({k, n});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < m; ++i) {
    const double* ai = pa + i * k;
    const double* bi = pb + i * n;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double aik = ai[kk];
      double* ck = pc + kk * n;
      for (std::size_t j = 0; j < n; ++j) ck[j] += aik * bi[j];
    }
  }
  return c;
}

Tensor matmul_transB(const Tensor& a, const Tensor& b) {
  // a: N x K, b: M x K  ->  c = a b^T: N x M
  const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
  if (b.cols() != k) {
    throw ShapeError("matmul_transB: column counts differ, " + a.shape_str() +
                     " vs " + b.shape_str());
  }
  Tensor c({n, m});
  const double* pa = a.data();
  const double* pb = b.data();
  double* pc = c.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* ai = pa + i * k;
    double* ci = pc + i * m;
    for (std::size_t j = 0; j < m; ++j) {
      const double* bj = pb + j * k;
      double s = 0.0;
      for (std::size_t kk = 0; kk < k; ++kk) s += ai[kk] * bj[kk];
      ci[j] = s;
    }
  }
  return c;
}

void axpy(Tensor& y, const Tensor& x, double alpha) {
  require_same_shape(y, x, "axpy");
  double* py = y.data();
  const double* px = x.data();
  const std::size_t n = y.numel();
  for (std::size_t i = 0; i < n; ++i) py[i] += alpha * px[i];
}

}  // namespace morphdet::nn
