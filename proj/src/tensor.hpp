#pragma once

#include <cstddef>
#include <initializer_list>
#include <string>
#include <vector>

#include "error.hpp"

namespace dcwp {

/// Dense row-major f64 array. Shapes are arbitrary rank, though the model
/// only ever needs rank 0..2. Tensors are treated as immutable once handed
/// to a Tape; mutation helpers exist for construction and optimizers.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  static Tensor scalar(double v);
  static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }
  static Tensor full(std::vector<std::size_t> shape, double v);
  static Tensor row(std::vector<double> values);  // shape (n)

  const std::vector<std::size_t>& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  // 2-d accessors; error if rank mismatched.
  std::size_t rows() const;
  std::size_t cols() const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::vector<double>& buffer() { return data_; }
  const std::vector<double>& buffer() const { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  double item() const;  // scalar value; error unless numel == 1

  bool all_finite() const;
  std::string shape_str() const;

  void add_inplace(const Tensor& other);        // this += other
  void axpy_inplace(double a, const Tensor& x);  // this += a * x
  void fill(double v);

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
  std::size_t cols_ = 0;  // cached for at(r, c)
};

// Matrix product kernels used by the tape. C is overwritten.
// Shapes after applying the transposes must contract: (m,k)x(k,n)->(m,n).
Tensor matmul_values(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b);

std::size_t shape_numel(const std::vector<std::size_t>& shape);

}  // namespace dcwp
