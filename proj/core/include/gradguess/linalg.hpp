#pragma once

#include <algorithm>
#include <numeric>

#include "gradguess/tensor.hpp"

namespace gg {

template <typename T>
struct SvdResult {
  Mat<T> u;                 // m x n, orthonormal columns
  Vec<T> singular_values;   // length n, descending, non-negative
  Mat<T> v_t;               // n x n

  Mat<T> reconstruct() const {
    Mat<T> us = u;
    for (std::size_t j = 0; j < singular_values.size(); ++j)
      for (std::size_t i = 0; i < us.rows; ++i) us(i, j) *= singular_values[j];
    return matmul(us, v_t);
  }
};

namespace detail {

// One-sided Jacobi on the columns of b (m >= n). v accumulates the
// right rotations. Runs in double for accuracy regardless of T.
inline bool jacobi_sweeps(Mat<double>& b, Mat<double>& v, int max_sweeps) {
  const std::size_t m = b.rows, n = b.cols;
  const double eps = 1e-14;
  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    bool rotated = false;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0, beta = 0, gamma = 0;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b(i, p), bq = b(i, q);
          alpha += bp * bp;
          beta += bq * bq;
          gamma += bp * bq;
        }
        if (std::abs(gamma) <= eps * std::sqrt(alpha * beta) || gamma == 0.0) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = (zeta >= 0 ? 1.0 : -1.0) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < m; ++i) {
          const double bp = b(i, p), bq = b(i, q);
          b(i, p) = c * bp - s * bq;
          b(i, q) = s * bp + c * bq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p), vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
    if (!rotated) return true;
  }
  return false;
}

// Fill zero columns of u (rank-deficient input) with unit vectors
// orthogonal to the nonzero ones, so u keeps orthonormal columns.
inline void complete_basis(Mat<double>& u, const std::vector<std::size_t>& zero_cols) {
  const std::size_t m = u.rows, n = u.cols;
  std::size_t cursor = 0;
  for (std::size_t j : zero_cols) {
    for (; cursor < m; ++cursor) {
      // candidate e_cursor, orthogonalized against all current columns
      std::vector<double> cand(m, 0.0);
      cand[cursor] = 1.0;
      for (std::size_t c = 0; c < n; ++c) {
        double proj = 0;
        for (std::size_t i = 0; i < m; ++i) proj += cand[i] * u(i, c);
        for (std::size_t i = 0; i < m; ++i) cand[i] -= proj * u(i, c);
      }
      double nrm = 0;
      for (double x : cand) nrm += x * x;
      nrm = std::sqrt(nrm);
      if (nrm > 1e-6) {
        for (std::size_t i = 0; i < m; ++i) u(i, j) = cand[i] / nrm;
        ++cursor;
        break;
      }
    }
  }
}

}  // namespace detail

/// Thin SVD via one-sided Jacobi. Accurate and simple at the sizes this
/// project needs (weight matrices up to ~1024).
template <typename T>
SvdResult<T> svd(const Mat<T>& a, int max_sweeps = 100) {
  if (!all_finite(a)) throw std::invalid_argument("svd: non-finite entries");
  const bool flipped = a.rows < a.cols;
  Mat<double> b = flipped ? transpose(cast<double>(a)) : cast<double>(a);
  const std::size_t m = b.rows, n = b.cols;
  Mat<double> v = Mat<double>::identity(n);
  if (!detail::jacobi_sweeps(b, v, max_sweeps)) {
    throw std::runtime_error("svd: one-sided Jacobi failed to converge within " +
                             std::to_string(max_sweeps) + " sweeps");
  }

  std::vector<double> sigma(n);
  std::vector<std::size_t> zero_cols;
  for (std::size_t j = 0; j < n; ++j) {
    double nrm = 0;
    for (std::size_t i = 0; i < m; ++i) nrm += b(i, j) * b(i, j);
    sigma[j] = std::sqrt(nrm);
    if (sigma[j] > 0) {
      for (std::size_t i = 0; i < m; ++i) b(i, j) /= sigma[j];
    } else {
      zero_cols.push_back(j);
    }
  }
  if (!zero_cols.empty()) detail::complete_basis(b, zero_cols);

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  Mat<double> u_sorted(m, n), v_sorted(n, n);
  Vec<double> s_sorted(n);
  for (std::size_t j = 0; j < n; ++j) {
    const std::size_t src = order[j];
    s_sorted[j] = sigma[src];
    for (std::size_t i = 0; i < m; ++i) u_sorted(i, j) = b(i, src);
    for (std::size_t i = 0; i < n; ++i) v_sorted(i, j) = v(i, src);
  }

  SvdResult<T> out;
  if (!flipped) {
    out.u = cast<T>(u_sorted);
    out.v_t = cast<T>(transpose(v_sorted));
  } else {
    out.u = cast<T>(v_sorted);
    out.v_t = cast<T>(transpose(u_sorted));
  }
  out.singular_values = cast<T>(s_sorted);
  return out;
}

template <typename T>
struct GramSchmidtResult {
  std::vector<Vec<T>> basis;
  std::size_t dropped = 0;  // near-dependent inputs removed
};

/// Modified Gram-Schmidt with a second orthogonalization pass.
template <typename T>
GramSchmidtResult<T> gram_schmidt(const std::vector<Vec<T>>& vectors, T drop_tol = T(1e-6)) {
  GramSchmidtResult<T> out;
  for (const auto& input : vectors) {
    Vec<T> v = input;
    const T input_norm = norm(input);
    for (int pass = 0; pass < 2; ++pass) {
      for (const auto& b : out.basis) {
        const T proj = dot(v, b);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] -= proj * b[i];
      }
    }
    const T residual = norm(v);
    if (residual < drop_tol * std::max(T{1}, input_norm)) {
      ++out.dropped;
      continue;
    }
    for (std::size_t i = 0; i < v.size(); ++i) v[i] /= residual;
    out.basis.push_back(std::move(v));
  }
  return out;
}

}  // namespace gg
