#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

#include "bag/rng.hpp"

namespace bag {

// Dense row-major matrix of 64-bit floats.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

  double* row(std::size_t i) { return data.data() + i * cols; }
  const double* row(std::size_t i) const { return data.data() + i * cols; }

  std::size_t size() const { return data.size(); }

  bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

  bool all_finite() const {
    for (double v : data)
      if (!std::isfinite(v)) return false;
    return true;
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  static Matrix gaussian(std::size_t r, std::size_t c, Rng& rng, double stddev = 1.0) {
    Matrix m(r, c);
    for (double& v : m.data) v = rng.normal(0.0, stddev);
    return m;
  }
};

inline void require(bool cond, const std::string& msg) {
  if (!cond) throw std::invalid_argument(msg);
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols == b.rows, "matmul: inner dimensions differ");
  Matrix out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double* orow = out.row(i);
    for (std::size_t k = 0; k < a.cols; ++k) {
      const double aik = ar[k];
      if (aik == 0.0) continue;
      const double* br = b.row(k);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aik * br[j];
    }
  }
  return out;
}

// a * b^T
inline Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  require(a.cols == b.cols, "matmul_nt: inner dimensions differ");
  Matrix out(a.rows, b.rows);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    for (std::size_t j = 0; j < b.rows; ++j) {
      const double* br = b.row(j);
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols; ++k) s += ar[k] * br[k];
      out(i, j) = s;
    }
  }
  return out;
}

// a^T * b
inline Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows == b.rows, "matmul_tn: inner dimensions differ");
  Matrix out(a.cols, b.cols);
  for (std::size_t k = 0; k < a.rows; ++k) {
    const double* ar = a.row(k);
    const double* br = b.row(k);
    for (std::size_t i = 0; i < a.cols; ++i) {
      const double aki = ar[i];
      if (aki == 0.0) continue;
      double* orow = out.row(i);
      for (std::size_t j = 0; j < b.cols; ++j) orow[j] += aki * br[j];
    }
  }
  return out;
}

inline Matrix transpose(const Matrix& a) {
  Matrix out(a.cols, a.rows);
  for (std::size_t i = 0; i < a.rows; ++i)
    for (std::size_t j = 0; j < a.cols; ++j) out(j, i) = a(i, j);
  return out;
}

inline std::vector<double> matvec(const Matrix& a, const std::vector<double>& x) {
  require(a.cols == x.size(), "matvec: dimension mismatch");
  std::vector<double> out(a.rows, 0.0);
  for (std::size_t i = 0; i < a.rows; ++i) {
    const double* ar = a.row(i);
    double s = 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) s += ar[j] * x[j];
    out[i] = s;
  }
  return out;
}

// Gauss-Jordan with partial pivoting.
inline Matrix inverse(const Matrix& a) {
  require(a.rows == a.cols, "inverse: matrix not square");
  const std::size_t n = a.rows;
  Matrix m = a;
  Matrix inv = Matrix::identity(n);
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(m(r, col)) > std::fabs(m(pivot, col))) pivot = r;
    if (std::fabs(m(pivot, col)) < 1e-14)
      throw std::runtime_error("inverse: matrix is singular");
    if (pivot != col) {
      for (std::size_t j = 0; j < n; ++j) {
        std::swap(m(col, j), m(pivot, j));
        std::swap(inv(col, j), inv(pivot, j));
      }
    }
    const double d = m(col, col);
    for (std::size_t j = 0; j < n; ++j) {
      m(col, j) /= d;
      inv(col, j) /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = m(r, col);
      if (f == 0.0) continue;
      for (std::size_t j = 0; j < n; ++j) {
        m(r, j) -= f * m(col, j);
        inv(r, j) -= f * inv(col, j);
      }
    }
  }
  return inv;
}

// Largest singular value via power iteration on A^T A.
inline double spectral_norm(const Matrix& a, std::size_t iters = 100) {
  std::vector<double> v(a.cols, 1.0 / std::sqrt(static_cast<double>(a.cols)));
  double sigma = 0.0;
  for (std::size_t it = 0; it < iters; ++it) {
    std::vector<double> av(a.rows, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
      const double* ar = a.row(i);
      double s = 0.0;
      for (std::size_t j = 0; j < a.cols; ++j) s += ar[j] * v[j];
      av[i] = s;
    }
    std::vector<double> atav(a.cols, 0.0);
    for (std::size_t i = 0; i < a.rows; ++i) {
      const double* ar = a.row(i);
      for (std::size_t j = 0; j < a.cols; ++j) atav[j] += ar[j] * av[i];
    }
    double norm = 0.0;
    for (double x : atav) norm += x * x;
    norm = std::sqrt(norm);
    if (norm == 0.0) return 0.0;
    for (std::size_t j = 0; j < a.cols; ++j) v[j] = atav[j] / norm;
    sigma = std::sqrt(norm);
  }
  return sigma;
}

inline double condition_number(const Matrix& a) {
  return spectral_norm(a) * spectral_norm(inverse(a));
}

// Orthonormal matrix from Gram-Schmidt on a seeded Gaussian draw.
inline Matrix random_rotation(std::size_t n, Rng& rng) {
  Matrix g = Matrix::gaussian(n, n, rng);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) {
      double dot = 0.0;
      for (std::size_t j = 0; j < n; ++j) dot += g(i, j) * g(k, j);
      for (std::size_t j = 0; j < n; ++j) g(i, j) -= dot * g(k, j);
    }
    double norm = 0.0;
    for (std::size_t j = 0; j < n; ++j) norm += g(i, j) * g(i, j);
    norm = std::sqrt(norm);
    if (norm < 1e-12) throw std::runtime_error("random_rotation: degenerate draw");
    for (std::size_t j = 0; j < n; ++j) g(i, j) /= norm;
  }
  return g;
}

}  // namespace bag
