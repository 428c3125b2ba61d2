#include "tensor.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <numeric>
#include <sstream>

namespace dcwp {

std::size_t shape_numel(const std::vector<std::size_t>& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> shape)
    : shape_(std::move(shape)), data_(shape_numel(shape_), 0.0) {
  cols_ = shape_.empty() ? 1 : shape_.back();
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  require(data_.size() == shape_numel(shape_), ErrorCode::shape_mismatch,
          "tensor: buffer length " + std::to_string(data_.size()) +
              " does not match shape " + shape_str());
  cols_ = shape_.empty() ? 1 : shape_.back();
}

Tensor Tensor::scalar(double v) { return Tensor({}, {v}); }

Tensor Tensor::full(std::vector<std::size_t> shape, double v) {
  Tensor t(std::move(shape));
  t.fill(v);
  return t;
}

Tensor Tensor::row(std::vector<double> values) {
  std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) fail(ErrorCode::shape_mismatch, "rows(): tensor is not 2-d: " + shape_str());
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) fail(ErrorCode::shape_mismatch, "cols(): tensor is not 2-d: " + shape_str());
  return shape_[1];
}

double Tensor::item() const {
  require(numel() == 1, ErrorCode::shape_mismatch,
          "item(): tensor has " + std::to_string(numel()) + " elements");
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape_.size(); ++i) os << (i ? "," : "") << shape_[i];
  os << ')';
  return os.str();
}

void Tensor::add_inplace(const Tensor& other) {
  require(same_shape(other), ErrorCode::shape_mismatch,
          "add_inplace: " + shape_str() + " vs " + other.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
}

void Tensor::axpy_inplace(double a, const Tensor& x) {
  require(same_shape(x), ErrorCode::shape_mismatch,
          "axpy_inplace: " + shape_str() + " vs " + x.shape_str());
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += a * x.data_[i];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace {
using EMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using CMap = Eigen::Map<const EMat>;
using MMap = Eigen::Map<EMat>;
}  // namespace

Tensor matmul_values(const Tensor& a, const Tensor& b, bool trans_a, bool trans_b) {
  require(a.rank() == 2 && b.rank() == 2, ErrorCode::shape_mismatch,
          "matmul: operands must be 2-d, got " + a.shape_str() + " and " + b.shape_str());
  std::size_t m = trans_a ? a.cols() : a.rows();
  std::size_t ka = trans_a ? a.rows() : a.cols();
  std::size_t kb = trans_b ? b.cols() : b.rows();
  std::size_t n = trans_b ? b.rows() : b.cols();
  require(ka == kb, ErrorCode::shape_mismatch,
          "matmul: inner extents differ: " + a.shape_str() + (trans_a ? "^T" : "") + " x " +
              b.shape_str() + (trans_b ? "^T" : ""));

  Tensor c({m, n});
  CMap am(a.data(), static_cast<Eigen::Index>(a.rows()), static_cast<Eigen::Index>(a.cols()));
  CMap bm(b.data(), static_cast<Eigen::Index>(b.rows()), static_cast<Eigen::Index>(b.cols()));
  MMap cm(c.data(), static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(n));
  if (!trans_a && !trans_b)
    cm.noalias() = am * bm;
  else if (trans_a && !trans_b)
    cm.noalias() = am.transpose() * bm;
  else if (!trans_a && trans_b)
    cm.noalias() = am * bm.transpose();
  else
    cm.noalias() = am.transpose() * bm.transpose();
  return c;
}

}  // namespace dcwp
