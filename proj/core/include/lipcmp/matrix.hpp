#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "lipcmp/counter.hpp"
#include "lipcmp/errors.hpp"
#include "lipcmp/tensor.hpp"

namespace lipcmp {

template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill),
        ticket_(data_.size() * detail::scalars_per_value<T>()) {}
  Matrix(std::size_t rows, std::size_t cols, std::vector<T> values)
      : rows_(rows), cols_(cols), data_(std::move(values)) {
    if (data_.size() != rows * cols) throw ShapeError("matrix: value count does not match shape");
    ticket_ = LiveTicket(data_.size() * detail::scalars_per_value<T>());
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T(1);
    return m;
  }

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  bool square() const { return rows_ == cols_; }

  T& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::vector<T>& values() { return data_; }
  const std::vector<T>& values() const { return data_; }

  Matrix& operator+=(const Matrix& o) {
    check_same(o, "+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  Matrix& operator-=(const Matrix& o) {
    check_same(o, "-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  Matrix& operator*=(T s) {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend Matrix operator+(Matrix a, const Matrix& b) { return a += b; }
  friend Matrix operator-(Matrix a, const Matrix& b) { return a -= b; }
  friend Matrix operator*(Matrix a, T s) { return a *= s; }
  friend Matrix operator*(T s, Matrix a) { return a *= s; }

 private:
  void check_same(const Matrix& o, const char* op) const {
    if (rows_ != o.rows_ || cols_ != o.cols_)
      throw ShapeError(std::string("matrix ") + op + ": shape mismatch");
  }

  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
  LiveTicket ticket_;
};

using RealMatrix = Matrix<double>;
using ComplexMatrix = Matrix<Complex>;

inline double conj_value(double v) { return v; }
inline Complex conj_value(const Complex& v) { return std::conj(v); }

template <class T>
Matrix<T> matmul(const Matrix<T>& a, const Matrix<T>& b) {
  if (a.cols() != b.rows()) throw ShapeError("matmul: inner dimensions differ");
  const std::size_t n = a.rows(), m = a.cols(), p = b.cols();
  Matrix<T> out(n, p);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < m; ++k) {
      const T aik = a(i, k);
      const T* brow = &b(k, 0);
      T* orow = &out(i, 0);
      for (std::size_t j = 0; j < p; ++j) orow[j] += aik * brow[j];
    }
  count_macs(static_cast<double>(n * m * p));
  return out;
}

template <class T>
std::vector<T> matvec(const Matrix<T>& a, const std::vector<T>& x) {
  if (a.cols() != x.size()) throw ShapeError("matvec: dimension mismatch");
  std::vector<T> y(a.rows(), T{});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    T acc{};
    for (std::size_t j = 0; j < a.cols(); ++j) acc += a(i, j) * x[j];
    y[i] = acc;
  }
  count_macs(static_cast<double>(a.rows() * a.cols()));
  return y;
}

template <class T>
Matrix<T> transpose(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

// Conjugate transpose; equals transpose for real matrices.
template <class T>
Matrix<T> adjoint(const Matrix<T>& a) {
  Matrix<T> out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = conj_value(a(i, j));
  return out;
}

template <class T>
double frobenius_norm(const Matrix<T>& a) {
  double s = 0.0;
  for (const auto& v : a.values()) s += std::norm(v);
  return std::sqrt(s);
}

template <class T>
double max_abs(const Matrix<T>& a) {
  double m = 0.0;
  for (const auto& v : a.values()) m = std::max(m, static_cast<double>(std::abs(v)));
  return m;
}

template <class T>
T trace(const Matrix<T>& a) {
  if (!a.square()) throw ShapeError("trace: matrix not square");
  T s{};
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, i);
  return s;
}

// Gauss-Jordan elimination with partial pivoting.
template <class T>
Matrix<T> matinv(const Matrix<T>& a) {
  if (!a.square()) throw ShapeError("matinv: matrix not square");
  const std::size_t n = a.rows();
  Matrix<T> w = a;
  Matrix<T> inv = Matrix<T>::identity(n);
  std::vector<double> scale(n, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) scale[i] = std::max(scale[i], static_cast<double>(std::abs(a(i, j))));
  std::vector<std::size_t> origin(n);
  for (std::size_t i = 0; i < n; ++i) origin[i] = i;

  double macs = 0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    double best = -1.0;
    for (std::size_t r = col; r < n; ++r) {
      const double v = std::abs(w(r, col));
      if (v > best) {
        best = v;
        piv = r;
      }
    }
    const double row_scale = scale[origin[piv]];
    if (row_scale == 0.0 || best < 1e-12 * row_scale)
      throw SingularMatrixError("matinv: pivot below 1e-12 of row scale at column " + std::to_string(col));
    if (piv != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(w(piv, j), w(col, j));
        std::swap(inv(piv, j), inv(col, j));
      }
      std::swap(origin[piv], origin[col]);
    }
    const T p = T(1) / w(col, col);
    for (std::size_t j = col; j < n; ++j) w(col, j) *= p;
    for (std::size_t j = 0; j < n; ++j) inv(col, j) *= p;
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const T f = w(r, col);
      if (f == T{}) continue;
      for (std::size_t j = col; j < n; ++j) w(r, j) -= f * w(col, j);
      for (std::size_t j = 0; j < n; ++j) inv(r, j) -= f * inv(col, j);
      macs += static_cast<double>(2 * n - col);
    }
  }
  count_macs(macs);
  return inv;
}

template <class T>
bool all_finite(const Matrix<T>& a) {
  for (const auto& v : a.values())
    if (!std::isfinite(std::abs(v))) return false;
  return true;
}

}  // namespace lipcmp
