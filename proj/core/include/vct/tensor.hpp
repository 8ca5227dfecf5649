// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vct/rng.hpp"
#include "vct/types.hpp"

namespace vct {

// Dense row-major tensor. Rank is small (<= 4) and shapes are explicit;
// all layout decisions live here so every consumer agrees on flattening.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape);  // zero-filled
  Tensor(std::vector<int> shape, std::vector<Real> data);

  static Tensor full(std::vector<int> shape, Real value);
  static Tensor randn(std::vector<int> shape, Rng& rng, double stddev, double mean = 0.0);

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const;
  const std::vector<int>& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  Real* data() { return data_.data(); }
  const Real* data() const { return data_.data(); }
  std::vector<Real>& vec() { return data_; }
  const std::vector<Real>& vec() const { return data_; }

  // Bounds-checked element access; hot paths use data() directly.
  Real& at(int i);
  Real& at(int i, int j);
  Real& at(int i, int j, int k);
  Real& at(int i, int j, int k, int l);
  Real at(int i) const { return const_cast<Tensor*>(this)->at(i); }
  Real at(int i, int j) const { return const_cast<Tensor*>(this)->at(i, j); }
  Real at(int i, int j, int k) const { return const_cast<Tensor*>(this)->at(i, j, k); }
  Real at(int i, int j, int k, int l) const { return const_cast<Tensor*>(this)->at(i, j, k, l); }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
  std::string shape_str() const;

  // Number of rows when the last axis is treated as the row width.
  int flat_rows() const;
  int last_dim() const;

  void fill(Real v);

 private:
  std::vector<int> shape_;
  std::vector<Real> data_;
};

// C[m,n] = A[m,k] * B[k,n]; accumulates into C when accumulate is set.
void matmul_nn(const Real* a, const Real* b, Real* c, int m, int k, int n, bool accumulate);
// C[m,k] = A[m,n] * B[k,n]^T
void matmul_nt(const Real* a, const Real* b, Real* c, int m, int n, int k, bool accumulate);
// C[k,n] = A[m,k]^T * B[m,n]
void matmul_tn(const Real* a, const Real* b, Real* c, int m, int k, int n, bool accumulate);

// Checked 2-D convenience wrapper used by tests and small call sites.
Tensor matmul(const Tensor& a, const Tensor& b);

bool all_finite(const Tensor& t);
bool bitwise_equal(const Tensor& a, const Tensor& b);
double max_abs_diff(const Tensor& a, const Tensor& b);

// Index of the row maximum; ties resolve to the lowest index.
int argmax_row(const Real* row, int n);
std::vector<int> argmax_rows(const Tensor& m);

}  // namespace vct
