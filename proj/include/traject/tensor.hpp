#pragma once

#include <cstddef>
#include <vector>

#include "traject/common.hpp"

namespace traject {

// Dense row-major matrix of doubles. Scalars are 1x1, row vectors 1xN,
// column vectors Nx1. Sequences are stacked into the row dimension.
class Tensor {
 public:
  Tensor() = default;
  Tensor(int rows, int cols, double fill = 0.0);

  static Tensor scalar(double v);
  static Tensor row(const std::vector<double>& v);
  static Tensor col(const std::vector<double>& v);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  double& operator()(int r, int c) { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double operator()(int r, int c) const { return data_[static_cast<std::size_t>(r) * cols_ + c]; }
  double& at(int r, int c);
  double at(int r, int c) const;

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }

  bool same_shape(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_; }
  std::string shape_str() const;
  bool all_finite() const;

  double item() const;  // value of a 1x1 tensor
  void fill(double v);
  double min() const;
  double max() const;

  bool operator==(const Tensor& o) const { return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_; }

 private:
  int rows_ = 0;
  int cols_ = 0;
  std::vector<double> data_;
};

// C = A * B (optionally accumulating into C). Shapes are checked.
void matmul_nn(Tensor& c, const Tensor& a, const Tensor& b, bool accumulate = false);
// C = A * B^T
void matmul_nt(Tensor& c, const Tensor& a, const Tensor& b, bool accumulate = false);
// C = A^T * B
void matmul_tn(Tensor& c, const Tensor& a, const Tensor& b, bool accumulate = false);

}  // namespace traject
