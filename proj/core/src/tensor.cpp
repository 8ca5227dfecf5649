// SPDX-License-Identifier: Apache-2.0
#include "vct/tensor.hpp"

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

namespace vct {

namespace {
std::size_t checked_size(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d <= 0) throw ShapeError("tensor dimension must be positive, got " + std::to_string(d));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}
}  // namespace

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)), data_(checked_size(shape_), Real(0)) {}

Tensor::Tensor(std::vector<int> shape, std::vector<Real> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_size(shape_) != data_.size())
    throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " + shape_str());
}

Tensor Tensor::full(std::vector<int> shape, Real value) {
  Tensor t(std::move(shape));
  t.fill(value);
  return t;
}

Tensor Tensor::randn(std::vector<int> shape, Rng& rng, double stddev, double mean) {
  Tensor t(std::move(shape));
  for (auto& v : t.data_) v = static_cast<Real>(rng.normal(mean, stddev));
  return t;
}

int Tensor::dim(int i) const {
  if (i < 0 || i >= rank()) throw ShapeError("dim index " + std::to_string(i) + " out of range for " + shape_str());
  return shape_[static_cast<std::size_t>(i)];
}

namespace {
[[noreturn]] void bad_index() { throw ShapeError("tensor index out of range"); }
}  // namespace

Real& Tensor::at(int i) {
  if (rank() != 1 || i < 0 || i >= shape_[0]) bad_index();
  return data_[static_cast<std::size_t>(i)];
}

Real& Tensor::at(int i, int j) {
  if (rank() != 2 || i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1]) bad_index();
  return data_[static_cast<std::size_t>(i) * shape_[1] + j];
}

Real& Tensor::at(int i, int j, int k) {
  if (rank() != 3 || i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1] || k < 0 || k >= shape_[2]) bad_index();
  return data_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
}

Real& Tensor::at(int i, int j, int k, int l) {
  if (rank() != 4 || i < 0 || i >= shape_[0] || j < 0 || j >= shape_[1] || k < 0 || k >= shape_[2] || l < 0 ||
      l >= shape_[3])
    bad_index();
  return data_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
}

std::string Tensor::shape_str() const {
  std::ostringstream os;
  os << '[';
  for (int i = 0; i < rank(); ++i) os << (i ? "," : "") << shape_[static_cast<std::size_t>(i)];
  os << ']';
  return os.str();
}

int Tensor::flat_rows() const {
  if (rank() == 0) throw ShapeError("flat_rows on empty tensor");
  return static_cast<int>(size()) / last_dim();
}

int Tensor::last_dim() const {
  if (rank() == 0) throw ShapeError("last_dim on empty tensor");
  return shape_.back();
}

void Tensor::fill(Real v) { std::fill(data_.begin(), data_.end(), v); }

void matmul_nn(const Real* a, const Real* b, Real* c, int m, int k, int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(Real) * static_cast<std::size_t>(m) * n);
  for (int i = 0; i < m; ++i) {
    const Real* ai = a + static_cast<std::size_t>(i) * k;
    Real* ci = c + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const Real ail = ai[l];
      const Real* bl = b + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) ci[j] += ail * bl[j];
    }
  }
}

void matmul_nt(const Real* a, const Real* b, Real* c, int m, int n, int k, bool accumulate) {
  for (int i = 0; i < m; ++i) {
    const Real* ai = a + static_cast<std::size_t>(i) * n;
    Real* ci = c + static_cast<std::size_t>(i) * k;
    for (int l = 0; l < k; ++l) {
      const Real* bl = b + static_cast<std::size_t>(l) * n;
      Real s = 0;
      for (int j = 0; j < n; ++j) s += ai[j] * bl[j];
      ci[l] = accumulate ? ci[l] + s : s;
    }
  }
}

void matmul_tn(const Real* a, const Real* b, Real* c, int m, int k, int n, bool accumulate) {
  if (!accumulate) std::memset(c, 0, sizeof(Real) * static_cast<std::size_t>(k) * n);
  for (int i = 0; i < m; ++i) {
    const Real* ai = a + static_cast<std::size_t>(i) * k;
    const Real* bi = b + static_cast<std::size_t>(i) * n;
    for (int l = 0; l < k; ++l) {
      const Real ail = ai[l];
      Real* cl = c + static_cast<std::size_t>(l) * n;
      for (int j = 0; j < n; ++j) cl[j] += ail * bi[j];
    }
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) throw ShapeError("matmul expects rank-2 tensors, got " + a.shape_str() + " and " + b.shape_str());
  if (a.dim(1) != b.dim(0)) throw ShapeError("matmul inner dimensions differ: " + a.shape_str() + " vs " + b.shape_str());
  Tensor c({a.dim(0), b.dim(1)});
  matmul_nn(a.data(), b.data(), c.data(), a.dim(0), a.dim(1), b.dim(1), false);
  return c;
}

bool all_finite(const Tensor& t) {
  for (Real v : t.vec())
    if (!std::isfinite(static_cast<double>(v))) return false;
  return true;
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) return false;
  return std::memcmp(a.data(), b.data(), a.size() * sizeof(Real)) == 0;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) throw ShapeError("max_abs_diff shape mismatch: " + a.shape_str() + " vs " + b.shape_str());
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.vec()[i]) - static_cast<double>(b.vec()[i])));
  return m;
}

int argmax_row(const Real* row, int n) {
  int best = 0;
  for (int j = 1; j < n; ++j)
    if (row[j] > row[best]) best = j;
  return best;
}

std::vector<int> argmax_rows(const Tensor& m) {
  const int rows = m.flat_rows(), cols = m.last_dim();
  std::vector<int> out(static_cast<std::size_t>(rows));
  for (int i = 0; i < rows; ++i) out[static_cast<std::size_t>(i)] = argmax_row(m.data() + static_cast<std::size_t>(i) * cols, cols);
  return out;
}

}  // namespace vct
