#pragma once

// Dense row-major matrices plus the two solve routes the one-shot stage
// relies on: a Cholesky factorization with a graduated ridge fallback, and
// an independent orthogonal-decomposition least-squares oracle.

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "chebpinn/error.hpp"

namespace chebpinn {

using Vector = std::vector<double>;

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, 0.0) {}

  Matrix(std::size_t rows, std::size_t cols, std::vector<double> entries)
      : rows_(rows), cols_(cols), data_(std::move(entries)) {
    if (data_.size() != rows_ * cols_) {
      fail(ErrorCode::DimensionMismatch, "matrix entries " + std::to_string(data_.size()) +
                                             " != " + std::to_string(rows_) + "x" + std::to_string(cols_));
    }
    for (double v : data_) {
      if (!std::isfinite(v)) fail(ErrorCode::InvalidArgument, "matrix entries must be finite");
    }
  }

  Matrix(std::initializer_list<std::initializer_list<double>> rows) {
    rows_ = rows.size();
    cols_ = rows_ == 0 ? 0 : rows.begin()->size();
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      if (r.size() != cols_) fail(ErrorCode::DimensionMismatch, "ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
  }

  static Matrix identity(std::size_t n) {
    Matrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }

  double& operator()(std::size_t i, std::size_t j) { return data_[i * cols_ + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data_[i * cols_ + j]; }

  std::span<double> row(std::size_t i) { return {data_.data() + i * cols_, cols_}; }
  std::span<const double> row(std::size_t i) const { return {data_.data() + i * cols_, cols_}; }

  const std::vector<double>& entries() const noexcept { return data_; }
  double* data() noexcept { return data_.data(); }
  const double* data() const noexcept { return data_.data(); }

  using EigenRowMajor = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  Eigen::Map<const EigenRowMajor> view() const {
    return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }
  Eigen::Map<EigenRowMajor> view() {
    return {data_.data(), static_cast<Eigen::Index>(rows_), static_cast<Eigen::Index>(cols_)};
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Σ a_i b_i over four interleaved partial sums combined in a fixed order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double acc[4] = {0.0, 0.0, 0.0, 0.0};
  std::size_t j = 0;
  for (; j + 4 <= n; j += 4)
    for (std::size_t k = 0; k < 4; ++k) acc[k] += a[j + k] * b[j + k];
  double s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
  for (; j < n; ++j) s += a[j] * b[j];
  return s;
}

inline Vector matvec(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.cols()) fail(ErrorCode::DimensionMismatch, "matvec operand length");
  Vector y(a.rows(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) y[i] = dot(a.row(i).data(), x.data(), a.cols());
  return y;
}

/// y = aᵀ x, accumulated row by row so the summation order is fixed.
inline Vector matvec_transposed(const Matrix& a, std::span<const double> x) {
  if (x.size() != a.rows()) fail(ErrorCode::DimensionMismatch, "transposed matvec operand length");
  Vector y(a.cols(), 0.0);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = a.row(i);
    const double xi = x[i];
    for (std::size_t j = 0; j < a.cols(); ++j) y[j] += r[j] * xi;
  }
  return y;
}

inline Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) fail(ErrorCode::DimensionMismatch, "matmul inner dimensions");
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      for (std::size_t j = 0; j < b.cols(); ++j) c(i, j) += aik * b(k, j);
    }
  }
  return c;
}

inline Matrix transpose(const Matrix& a) {
  Matrix t(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
  return t;
}

/// scale · aᵀa, exactly symmetric (upper triangle mirrored).
inline Matrix gram(const Matrix& a, double scale = 1.0) {
  const std::size_t n = a.cols();
  Matrix g(n, n);
  for (std::size_t r = 0; r < a.rows(); ++r) {
    const auto row = a.row(r);
    for (std::size_t i = 0; i < n; ++i) {
      const double ri = row[i];
      if (ri == 0.0) continue;
      for (std::size_t j = i; j < n; ++j) g(i, j) += ri * row[j];
    }
  }
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i; j < n; ++j) {
      g(i, j) *= scale;
      g(j, i) = g(i, j);
    }
  }
  return g;
}

inline double norm2(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += v * v;
  return std::sqrt(s);
}

inline double frobenius_norm(const Matrix& a) { return norm2(a.entries()); }

struct SpdFactorization {
  std::size_t dim = 0;
  std::vector<double> lower;  // row-major n×n, upper triangle zero
  double ridge = 0.0;         // absolute shift actually added to the diagonal

  double l(std::size_t i, std::size_t j) const { return lower[i * dim + j]; }

  Matrix factor() const { return Matrix(dim, dim, lower); }
};

inline const std::vector<double>& default_ridge_ladder() {
  static const std::vector<double> ladder{0.0, 1e-12, 1e-10, 1e-8};
  return ladder;
}

/// Process-wide tally of successful spd_factorize calls; the one-shot
/// stage is required to factor each assembled system exactly once.
inline std::atomic<std::size_t>& spd_factorization_count() {
  static std::atomic<std::size_t> count{0};
  return count;
}

namespace detail {

inline bool try_cholesky(const Matrix& m, double shift, std::vector<double>& out) {
  const std::size_t n = m.rows();
  out.assign(n * n, 0.0);
  double max_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) max_diag = std::max(max_diag, std::abs(m(i, i) + shift));
  const double pivot_floor = static_cast<double>(n) * 1e-15 * max_diag;
  for (std::size_t j = 0; j < n; ++j) {
    double d = m(j, j) + shift;
    for (std::size_t k = 0; k < j; ++k) d -= out[j * n + k] * out[j * n + k];
    if (!(d > pivot_floor) || !std::isfinite(d)) return false;
    const double ljj = std::sqrt(d);
    out[j * n + j] = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = m(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= out[i * n + k] * out[j * n + k];
      out[i * n + j] = s / ljj;
    }
  }
  return true;
}

}  // namespace detail

/// Cholesky factorization of a symmetric positive-definite matrix.
///
/// Ladder entries are relative shifts: entry r adds r·mean(diag(m)) to the
/// diagonal. A zero shift is always tried first. The first shift for which
/// the factorization succeeds is recorded in the result.
inline SpdFactorization spd_factorize(const Matrix& m,
                                      std::span<const double> ridge_ladder = default_ridge_ladder()) {
  if (m.rows() != m.cols()) fail(ErrorCode::DimensionMismatch, "spd_factorize needs a square matrix");
  const std::size_t n = m.rows();
  double max_abs = 0.0;
  for (double v : m.entries()) max_abs = std::max(max_abs, std::abs(v));
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (std::abs(m(i, j) - m(j, i)) > 1e-12 * max_abs) {
        fail(ErrorCode::NotSymmetric, "entry (" + std::to_string(i) + "," + std::to_string(j) + ")");
      }
    }
  }
  double mean_diag = 0.0;
  for (std::size_t i = 0; i < n; ++i) mean_diag += m(i, i);
  mean_diag = n > 0 ? std::abs(mean_diag) / static_cast<double>(n) : 0.0;

  std::vector<double> ladder{0.0};
  for (double r : ridge_ladder) {
    if (r < 0.0) fail(ErrorCode::InvalidArgument, "ridge ladder entries must be nonnegative");
    if (r > 0.0) ladder.push_back(r);
  }
  std::sort(ladder.begin(), ladder.end());

  SpdFactorization f;
  f.dim = n;
  for (double r : ladder) {
    const double shift = r * mean_diag;
    if (detail::try_cholesky(m, shift, f.lower)) {
      f.ridge = shift;
      spd_factorization_count().fetch_add(1, std::memory_order_relaxed);
      return f;
    }
  }
  fail(ErrorCode::NonFactorizable, "dimension " + std::to_string(n) + ", largest ridge tried " +
                                       std::to_string(ladder.back() * mean_diag));
}

inline Vector spd_solve(const SpdFactorization& f, std::span<const double> rhs) {
  const std::size_t n = f.dim;
  if (rhs.size() != n) fail(ErrorCode::DimensionMismatch, "spd_solve rhs length");
  Vector y(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) {
    double s = y[i];
    for (std::size_t k = 0; k < i; ++k) s -= f.lower[i * n + k] * y[k];
    y[i] = s / f.lower[i * n + i];
  }
  for (std::size_t ii = n; ii-- > 0;) {
    double s = y[ii];
    for (std::size_t k = ii + 1; k < n; ++k) s -= f.lower[k * n + ii] * y[k];
    y[ii] = s / f.lower[ii * n + ii];
  }
  return y;
}

/// Least-squares minimizer of ‖a·x − b‖₂ by column-pivoted Householder QR.
/// Shares no code with the Cholesky path; used to cross-check it.
inline Vector lstsq_oracle(const Matrix& a, std::span<const double> b) {
  if (b.size() != a.rows()) fail(ErrorCode::DimensionMismatch, "lstsq rhs length");
  const Eigen::MatrixXd dense = a.view();
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(dense);
  if (qr.rank() < static_cast<Eigen::Index>(a.cols())) {
    fail(ErrorCode::RankDeficient, "rank " + std::to_string(qr.rank()) + " < " + std::to_string(a.cols()));
  }
  const Eigen::Map<const Eigen::VectorXd> rhs(b.data(), static_cast<Eigen::Index>(b.size()));
  const Eigen::VectorXd x = qr.solve(rhs);
  return Vector(x.data(), x.data() + x.size());
}

}  // namespace chebpinn
