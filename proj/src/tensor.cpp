#include "traject/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace traject {

Tensor::Tensor(int rows, int cols, double fill) : rows_(rows), cols_(cols) {
  require(rows > 0 && cols > 0, "tensor shape must be positive, got ", rows, "x", cols);
  data_.assign(static_cast<std::size_t>(rows) * cols, fill);
}

Tensor Tensor::scalar(double v) { return Tensor(1, 1, v); }

Tensor Tensor::row(const std::vector<double>& v) {
  Tensor t(1, static_cast<int>(v.size()));
  for (std::size_t i = 0; i < v.size(); ++i) t.data_[i] = v[i];
  return t;
}

Tensor Tensor::col(const std::vector<double>& v) {
  Tensor t(static_cast<int>(v.size()), 1);
  for (std::size_t i = 0; i < v.size(); ++i) t.data_[i] = v[i];
  return t;
}

double& Tensor::at(int r, int c) {
  require(r >= 0 && r < rows_ && c >= 0 && c < cols_, "index (", r, ",", c, ") out of range for ", shape_str());
  return (*this)(r, c);
}

double Tensor::at(int r, int c) const {
  require(r >= 0 && r < rows_ && c >= 0 && c < cols_, "index (", r, ",", c, ") out of range for ", shape_str());
  return (*this)(r, c);
}

std::string Tensor::shape_str() const { return cat(rows_, "x", cols_); }

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

double Tensor::item() const {
  require(rows_ == 1 && cols_ == 1, "item() requires a 1x1 tensor, got ", shape_str());
  return data_[0];
}

void Tensor::fill(double v) { data_.assign(data_.size(), v); }

double Tensor::min() const {
  require(!data_.empty(), "min() of an empty tensor");
  return *std::min_element(data_.begin(), data_.end());
}

double Tensor::max() const {
  require(!data_.empty(), "max() of an empty tensor");
  return *std::max_element(data_.begin(), data_.end());
}

void matmul_nn(Tensor& c, const Tensor& a, const Tensor& b, bool accumulate) {
  require(a.cols() == b.rows(), "matmul shape mismatch: ", a.shape_str(), " * ", b.shape_str());
  const int m = a.rows(), k = a.cols(), n = b.cols();
  if (!accumulate || c.empty()) c = Tensor(m, n);
  require(c.rows() == m && c.cols() == n, "matmul output shape mismatch");
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (int i = 0; i < m; ++i) {
    double* crow = cp + static_cast<std::size_t>(i) * n;
    for (int p = 0; p < k; ++p) {
      const double av = ap[static_cast<std::size_t>(i) * k + p];
      if (av == 0.0) continue;
      const double* brow = bp + static_cast<std::size_t>(p) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

void matmul_nt(Tensor& c, const Tensor& a, const Tensor& b, bool accumulate) {
  require(a.cols() == b.cols(), "matmul_nt shape mismatch: ", a.shape_str(), " * ", b.shape_str(), "^T");
  const int m = a.rows(), k = a.cols(), n = b.rows();
  if (!accumulate || c.empty()) c = Tensor(m, n);
  require(c.rows() == m && c.cols() == n, "matmul_nt output shape mismatch");
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (int i = 0; i < m; ++i) {
    const double* arow = ap + static_cast<std::size_t>(i) * k;
    double* crow = cp + static_cast<std::size_t>(i) * n;
    for (int j = 0; j < n; ++j) {
      const double* brow = bp + static_cast<std::size_t>(j) * k;
      double acc = 0.0;
      for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
      crow[j] += acc;
    }
  }
}

void matmul_tn(Tensor& c, const Tensor& a, const Tensor& b, bool accumulate) {
  require(a.rows() == b.rows(), "matmul_tn shape mismatch: ", a.shape_str(), "^T * ", b.shape_str());
  const int m = a.cols(), k = a.rows(), n = b.cols();
  if (!accumulate || c.empty()) c = Tensor(m, n);
  require(c.rows() == m && c.cols() == n, "matmul_tn output shape mismatch");
  const double* ap = a.data();
  const double* bp = b.data();
  double* cp = c.data();
  for (int p = 0; p < k; ++p) {
    const double* arow = ap + static_cast<std::size_t>(p) * m;
    const double* brow = bp + static_cast<std::size_t>(p) * n;
    for (int i = 0; i < m; ++i) {
      const double av = arow[i];
      if (av == 0.0) continue;
      double* crow = cp + static_cast<std::size_t>(i) * n;
      for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
    }
  }
}

}  // namespace traject
