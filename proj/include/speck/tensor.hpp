#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "speck/error.hpp"
#include "speck/rng.hpp"

namespace speck {

// Dense row-major tensor. Rank is dynamic but everything in the engine is
// rank 1 or 2; matrix products are delegated to Eigen through maps.
template <class S>
struct Tensor {
  std::vector<int64_t> shape;
  std::vector<S> v;

  Tensor() = default;
  explicit Tensor(std::vector<int64_t> shp) : shape(std::move(shp)) {
    v.assign(static_cast<size_t>(numel(shape)), S(0));
  }
  Tensor(std::vector<int64_t> shp, std::vector<S> values)
      : shape(std::move(shp)), v(std::move(values)) {
    if (static_cast<int64_t>(v.size()) != numel(shape))
      throw ShapeError("tensor value count does not match shape");
  }

  static int64_t numel(const std::vector<int64_t>& shp) {
    int64_t n = 1;
    for (int64_t d : shp) {
      if (d <= 0) throw ShapeError("tensor dimensions must be positive");
      n *= d;
    }
    return n;
  }

  static Tensor zeros(std::vector<int64_t> shp) { return Tensor(std::move(shp)); }

  static Tensor full(std::vector<int64_t> shp, S value) {
    Tensor t(std::move(shp));
    std::fill(t.v.begin(), t.v.end(), value);
    return t;
  }

  int64_t size() const { return static_cast<int64_t>(v.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }

  int64_t rows() const {
    if (rank() == 1) return 1;
    if (rank() != 2) throw ShapeError("rows(): tensor is not rank 2");
    return shape[0];
  }
  int64_t cols() const {
    if (rank() == 1) return shape[0];
    if (rank() != 2) throw ShapeError("cols(): tensor is not rank 2");
    return shape[1];
  }

  S& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * cols() + j)]; }
  S at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * cols() + j)]; }
  S& operator[](int64_t i) { return v[static_cast<size_t>(i)]; }
  S operator[](int64_t i) const { return v[static_cast<size_t>(i)]; }

  void fill(S value) { std::fill(v.begin(), v.end(), value); }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  template <class T>
  Tensor<T> cast() const {
    Tensor<T> out;
    out.shape = shape;
    out.v.resize(v.size());
    for (size_t i = 0; i < v.size(); ++i) out.v[i] = static_cast<T>(v[i]);
    return out;
  }
};

template <class S>
using EigenRowMat = Eigen::Matrix<S, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class S>
Eigen::Map<const EigenRowMat<S>> mat_view(const Tensor<S>& t) {
  return {t.v.data(), t.rows(), t.cols()};
}

template <class S>
Eigen::Map<EigenRowMat<S>> mat_view(Tensor<S>& t) {
  return {t.v.data(), t.rows(), t.cols()};
}

// C = A (m x k) * B (k x n)
template <class S>
Tensor<S> matmul(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  Tensor<S> out({a.rows(), b.cols()});
  mat_view(out).noalias() = mat_view(a) * mat_view(b);
  return out;
}

// C = A (m x k) * B^T (n x k)
template <class S>
Tensor<S> matmul_nt(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.cols() != b.cols()) throw ShapeError("matmul_nt: inner dimensions differ");
  Tensor<S> out({a.rows(), b.rows()});
  mat_view(out).noalias() = mat_view(a) * mat_view(b).transpose();
  return out;
}

// C = A^T (k x m) * B (k x n)
template <class S>
Tensor<S> matmul_tn(const Tensor<S>& a, const Tensor<S>& b) {
  if (a.rows() != b.rows()) throw ShapeError("matmul_tn: inner dimensions differ");
  Tensor<S> out({a.cols(), b.cols()});
  mat_view(out).noalias() = mat_view(a).transpose() * mat_view(b);
  return out;
}

template <class S>
void add_row_broadcast(Tensor<S>& x, const Tensor<S>& row) {
  if (row.size() != x.cols()) throw ShapeError("add_row_broadcast: width mismatch");
  for (int64_t i = 0; i < x.rows(); ++i)
    for (int64_t j = 0; j < x.cols(); ++j) x.at(i, j) += row[j];
}

template <class S>
Tensor<S> column_sum(const Tensor<S>& x) {
  Tensor<S> out({x.cols()});
  for (int64_t i = 0; i < x.rows(); ++i)
    for (int64_t j = 0; j < x.cols(); ++j) out[j] += x.at(i, j);
  return out;
}

template <class S>
void axpy(Tensor<S>& y, S alpha, const Tensor<S>& x) {
  if (!y.same_shape(x)) throw ShapeError("axpy: shape mismatch");
  for (int64_t i = 0; i < y.size(); ++i) y[i] += alpha * x[i];
}

template <class S>
bool all_finite(const Tensor<S>& t) {
  for (S x : t.v)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <class S>
void require_finite(const Tensor<S>& t, const std::string& what) {
  if (!all_finite(t)) throw NumericError("non-finite values in " + what);
}

template <class S>
void xavier_uniform(Tensor<S>& w, int64_t fan_in, int64_t fan_out, Rng& rng) {
  double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& x : w.v) x = static_cast<S>(rng.uniform(-limit, limit));
}

}  // namespace speck
