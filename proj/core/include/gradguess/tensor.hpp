#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace gg {

/// Dense row-major matrix. Default scalar width for training is float;
/// double instantiations exist for oracle comparisons.
template <typename T>
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<T> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c, T fill = T{0}) : rows(r), cols(c), data(r * c, fill) {}

  static Mat identity(std::size_t n) {
    Mat m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  T& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  const T& operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  T* row_ptr(std::size_t i) { return data.data() + i * cols; }
  const T* row_ptr(std::size_t i) const { return data.data() + i * cols; }

  std::size_t size() const { return data.size(); }
  bool empty() const { return data.empty(); }
};

template <typename T>
struct Vec {
  std::vector<T> data;

  Vec() = default;
  explicit Vec(std::size_t n, T fill = T{0}) : data(n, fill) {}
  Vec(std::initializer_list<T> init) : data(init) {}

  std::size_t size() const { return data.size(); }
  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }
};

namespace detail {
inline std::string shape_str(std::size_t r, std::size_t c) {
  return std::to_string(r) + "x" + std::to_string(c);
}
}  // namespace detail

/// C = A * B with a fixed i-k-j loop order (deterministic summation).
template <typename T>
Mat<T> matmul(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.rows) {
    throw std::invalid_argument("matmul: shape mismatch " + detail::shape_str(a.rows, a.cols) +
                                " * " + detail::shape_str(b.rows, b.cols));
  }
  Mat<T> c(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    T* crow = c.row_ptr(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const T aik = a(i, k);
      if (aik == T{0}) continue;
      const T* brow = b.row_ptr(k);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aik * brow[j];
    }
  }
  return c;
}

/// C = A * B^T. Row-major friendly: both inner loops stride 1.
template <typename T>
Mat<T> matmul_nt(const Mat<T>& a, const Mat<T>& b) {
  if (a.cols != b.cols) {
    throw std::invalid_argument("matmul_nt: shape mismatch " + detail::shape_str(a.rows, a.cols) +
                                " * " + detail::shape_str(b.rows, b.cols) + "^T");
  }
  Mat<T> c(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const T* arow = a.row_ptr(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const T* brow = b.row_ptr(j);
      T acc{0};
      for (std::size_t k = 0; k < a.cols; ++k) acc += arow[k] * brow[k];
      c(i, j) = acc;
    }
  }
  return c;
}

/// C = A^T * B.
template <typename T>
Mat<T> matmul_tn(const Mat<T>& a, const Mat<T>& b) {
  if (a.rows != b.rows) {
    throw std::invalid_argument("matmul_tn: shape mismatch " + detail::shape_str(a.rows, a.cols) +
                                "^T * " + detail::shape_str(b.rows, b.cols));
  }
  Mat<T> c(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const T* arow = a.row_ptr(k);
    const T* brow = b.row_ptr(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const T aki = arow[i];
      if (aki == T{0}) continue;
      T* crow = c.row_ptr(i);
      for (std::size_t j = 0; j < b.cols; ++j) crow[j] += aki * brow[j];
    }
  }
  return c;
}

template <typename T>
Mat<T> transpose(const Mat<T>& a) {
  Mat<T> t(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) t(j, i) = a(i, j);
  return t;
}

/// result[i][j] = u[i] * v[j]
template <typename T>
Mat<T> outer(const Vec<T>& u, const Vec<T>& v) {
  Mat<T> m(u.size(), v.size());
  for (std::size_t i = 0; i < u.size(); ++i)
    for (std::size_t j = 0; j < v.size(); ++j) m(i, j) = u[i] * v[j];
  return m;
}

/// y = W * x
template <typename T>
Vec<T> matvec(const Mat<T>& w, const Vec<T>& x) {
  if (w.cols != x.size()) throw std::invalid_argument("matvec: shape mismatch");
  Vec<T> y(w.rows);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const T* row = w.row_ptr(i);
    T acc{0};
    for (std::size_t j = 0; j < w.cols; ++j) acc += row[j] * x[j];
    y[i] = acc;
  }
  return y;
}

/// y = W^T * x
template <typename T>
Vec<T> matvec_t(const Mat<T>& w, const Vec<T>& x) {
  if (w.rows != x.size()) throw std::invalid_argument("matvec_t: shape mismatch");
  Vec<T> y(w.cols);
  for (std::size_t i = 0; i < w.rows; ++i) {
    const T* row = w.row_ptr(i);
    const T xi = x[i];
    for (std::size_t j = 0; j < w.cols; ++j) y[j] += row[j] * xi;
  }
  return y;
}

template <typename T>
Vec<T> relu(const Vec<T>& v) {
  Vec<T> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] > T{0} ? v[i] : T{0};
  return r;
}

/// Subgradient mask; exactly-zero entries map to 0.
template <typename T>
Vec<T> relu_mask(const Vec<T>& v) {
  Vec<T> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = v[i] > T{0} ? T{1} : T{0};
  return r;
}

template <typename T>
Mat<T> relu(const Mat<T>& m) {
  Mat<T> r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.size(); ++i) r.data[i] = m.data[i] > T{0} ? m.data[i] : T{0};
  return r;
}

template <typename T>
Mat<T> relu_mask(const Mat<T>& m) {
  Mat<T> r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.size(); ++i) r.data[i] = m.data[i] > T{0} ? T{1} : T{0};
  return r;
}

template <typename T>
T dot(const Vec<T>& u, const Vec<T>& v) {
  T acc{0};
  for (std::size_t i = 0; i < u.size(); ++i) acc += u[i] * v[i];
  return acc;
}

template <typename T>
T frob_dot(const Mat<T>& a, const Mat<T>& b) {
  T acc{0};
  for (std::size_t i = 0; i < a.size(); ++i) acc += a.data[i] * b.data[i];
  return acc;
}

template <typename T>
T norm(const Vec<T>& v) {
  return std::sqrt(dot(v, v));
}

template <typename T>
T frob_norm(const Mat<T>& a) {
  return std::sqrt(frob_dot(a, a));
}

template <typename T, typename F>
void for_each_entry(Mat<T>& m, F&& f) {
  for (auto& x : m.data) f(x);
}

template <typename T>
void scale_inplace(Mat<T>& m, T s) {
  for (auto& x : m.data) x *= s;
}

template <typename T>
void axpy_inplace(Mat<T>& y, T a, const Mat<T>& x) {
  for (std::size_t i = 0; i < y.size(); ++i) y.data[i] += a * x.data[i];
}

template <typename T>
bool all_finite(const Mat<T>& m) {
  for (const auto& x : m.data)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <typename T>
bool all_finite(const Vec<T>& v) {
  for (const auto& x : v.data)
    if (!std::isfinite(static_cast<double>(x))) return false;
  return true;
}

template <typename U, typename T>
Mat<U> cast(const Mat<T>& m) {
  Mat<U> r(m.rows, m.cols);
  for (std::size_t i = 0; i < m.size(); ++i) r.data[i] = static_cast<U>(m.data[i]);
  return r;
}

template <typename U, typename T>
Vec<U> cast(const Vec<T>& v) {
  Vec<U> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) r[i] = static_cast<U>(v[i]);
  return r;
}

}  // namespace gg
