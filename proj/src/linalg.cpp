// SPDX-License-Identifier: Apache-2.0
#include "fedvar/linalg.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <string>

#include "fedvar/error.hpp"
#include "fedvar/kernels.hpp"

namespace fedvar {
namespace {

using EigenMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

EigenMat to_eigen(const Mat& m) {
  return Eigen::Map<const EigenMat>(m.data.data(), static_cast<Eigen::Index>(m.rows),
                                    static_cast<Eigen::Index>(m.cols));
}

Mat from_eigen(const EigenMat& e) {
  Mat m(static_cast<std::size_t>(e.rows()), static_cast<std::size_t>(e.cols()));
  Eigen::Map<EigenMat>(m.data.data(), e.rows(), e.cols()) = e;
  return m;
}

double max_abs(const Mat& m) {
  double r = 0.0;
  for (double x : m.data) r = std::max(r, std::abs(x));
  return r;
}

void require_square_symmetric(const Mat& m, double tol, const char* op) {
  if (m.rows != m.cols || m.rows == 0) throw DimensionError(std::string(op) + ": not square");
  if (max_abs_asymmetry(m) > tol * std::max(1.0, max_abs(m))) {
    throw DimensionError(std::string(op) + ": input not symmetric");
  }
}

Mat symmetrized(Mat s) {
  for (std::size_t i = 0; i < s.rows; ++i) {
    for (std::size_t j = i + 1; j < s.cols; ++j) {
      const double a = 0.5 * (s(i, j) + s(j, i));
      s(i, j) = a;
      s(j, i) = a;
    }
  }
  return s;
}

// V diag(f) V^T
Mat spectral_rebuild(const SymmetricEigen& e, std::span<const double> f) {
  const std::size_t n = e.values.size();
  Mat out(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < n; ++k) s += e.vectors(i, k) * f[k] * e.vectors(j, k);
      out(i, j) = s;
    }
  }
  return symmetrized(std::move(out));
}

}  // namespace

Mat::Mat(std::size_t r, std::size_t c, std::vector<double> values)
    : rows(r), cols(c), data(std::move(values)) {
  require_dims(data.size() == r * c, "Mat: rows*cols != data size");
}

Mat Mat::identity(std::size_t n) {
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

Mat Mat::diagonal(std::span<const double> d) {
  Mat m(d.size(), d.size());
  for (std::size_t i = 0; i < d.size(); ++i) m(i, i) = d[i];
  return m;
}

LowerUnitriangular::LowerUnitriangular(std::size_t dim) : dim_(dim), strict_(strict_size(dim), 0.0) {}

LowerUnitriangular::LowerUnitriangular(std::size_t dim, Vec strict_lower)
    : dim_(dim), strict_(std::move(strict_lower)) {
  require_dims(strict_.size() == strict_size(dim), "LowerUnitriangular: wrong strict size");
}

double LowerUnitriangular::at(std::size_t i, std::size_t j) const {
  if (i == j) return 1.0;
  if (j > i) return 0.0;
  return strict_[offset(i, j)];
}

Vec matvec(const Mat& m, std::span<const double> v) {
  require_dims(m.cols == v.size(), "matvec: m.cols != v.dim");
  Vec out(m.rows);
  for (std::size_t i = 0; i < m.rows; ++i) out[i] = kernels::dot(m.row(i), v);
  return out;
}

Vec matvec_transposed(const Mat& m, std::span<const double> v) {
  require_dims(m.rows == v.size(), "matvec_transposed: m.rows != v.dim");
  Vec out(m.cols, 0.0);
  for (std::size_t i = 0; i < m.rows; ++i) kernels::axpy(v[i], m.row(i), out);
  return out;
}

Mat matmul(const Mat& a, const Mat& b) {
  require_dims(a.cols == b.rows, "matmul: inner dimension mismatch");
  Mat out(a.rows, b.cols);
  for (std::size_t i = 0; i < a.rows; ++i) {
    for (std::size_t k = 0; k < a.cols; ++k) kernels::axpy(a(i, k), b.row(k), out.row(i));
  }
  return out;
}

Mat transpose(const Mat& m) {
  Mat t(m.cols, m.rows);
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) t(j, i) = m(i, j);
  return t;
}

Mat add(const Mat& a, const Mat& b) {
  require_dims(a.rows == b.rows && a.cols == b.cols, "add: shape mismatch");
  Mat out(a.rows, a.cols);
  kernels::scale_add(a.data, 1.0, b.data, out.data);
  return out;
}

Mat subtract(const Mat& a, const Mat& b) {
  require_dims(a.rows == b.rows && a.cols == b.cols, "subtract: shape mismatch");
  Mat out(a.rows, a.cols);
  kernels::scale_add(a.data, -1.0, b.data, out.data);
  return out;
}

Mat scaled(const Mat& m, double s) {
  Mat out = m;
  for (double& x : out.data) x *= s;
  return out;
}

double frobenius_norm(const Mat& m) { return std::sqrt(kernels::dot(m.data, m.data)); }

double max_abs_asymmetry(const Mat& m) {
  if (m.rows != m.cols) return INFINITY;
  double r = 0.0;
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = i + 1; j < m.cols; ++j) r = std::max(r, std::abs(m(i, j) - m(j, i)));
  return r;
}

Vec unitri_matvec(const LowerUnitriangular& l, std::span<const double> v) {
  const std::size_t n = l.dim();
  require_dims(n == v.size(), "unitri_matvec: dimension mismatch");
  Vec out(n);
  Vec row(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    const auto strict = l.strict_row(i);
    std::copy(strict.begin(), strict.end(), row.begin());
    row[i] = 1.0;
    out[i] = kernels::dot(row, v);
    row[i] = 0.0;
  }
  return out;
}

Vec unitri_solve(const LowerUnitriangular& l, std::span<const double> b) {
  const std::size_t n = l.dim();
  require_dims(n == b.size(), "unitri_solve: dimension mismatch");
  Vec x(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto strict = l.strict_row(i);
    x[i] = b[i] - kernels::dot(strict, std::span<const double>(x.data(), i));
  }
  return x;
}

Vec unitri_solve_transposed(const LowerUnitriangular& l, std::span<const double> b) {
  const std::size_t n = l.dim();
  require_dims(n == b.size(), "unitri_solve_transposed: dimension mismatch");
  Vec x(b.begin(), b.end());
  for (std::size_t i = n; i-- > 0;) {
    // x_i is final; eliminate it from the rows above.
    const auto strict = l.strict_row(i);
    for (std::size_t j = 0; j < i; ++j) x[j] -= strict[j] * x[i];
  }
  return x;
}

Mat dense_from_unitri(const LowerUnitriangular& l) {
  const std::size_t n = l.dim();
  Mat m(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j <= i; ++j) m(i, j) = l.at(i, j);
  return m;
}

SymmetricEigen symmetric_eigen(const Mat& m) {
  require_square_symmetric(m, 1e-10, "symmetric_eigen");
  Eigen::SelfAdjointEigenSolver<EigenMat> solver(to_eigen(m));
  if (solver.info() != Eigen::Success) throw NumericalError("symmetric_eigen: solver failed");
  SymmetricEigen out;
  out.values.assign(solver.eigenvalues().data(), solver.eigenvalues().data() + m.rows);
  out.vectors = from_eigen(solver.eigenvectors());
  return out;
}

Mat sqrtm_psd(const Mat& m) {
  const SymmetricEigen e = symmetric_eigen(m);
  Vec roots(e.values.size());
  for (std::size_t i = 0; i < roots.size(); ++i) {
    const double lambda = e.values[i];
    if (lambda < -1e-10) {
      throw NumericalError("sqrtm_psd: negative eigenvalue " + std::to_string(lambda));
    }
    roots[i] = std::sqrt(std::max(lambda, 0.0));
  }
  return spectral_rebuild(e, roots);
}

Mat inv_sqrtm_pd(const Mat& m) {
  const SymmetricEigen e = symmetric_eigen(m);
  Vec f(e.values.size());
  for (std::size_t i = 0; i < f.size(); ++i) {
    if (!(e.values[i] > 0.0)) throw NumericalError("inv_sqrtm_pd: matrix not positive definite");
    f[i] = 1.0 / std::sqrt(e.values[i]);
  }
  return spectral_rebuild(e, f);
}

Mat cholesky_lower(const Mat& m) {
  require_square_symmetric(m, 1e-10, "cholesky_lower");
  Eigen::LLT<EigenMat> llt(to_eigen(m));
  if (llt.info() != Eigen::Success) throw NumericalError("cholesky_lower: not positive definite");
  EigenMat lower = llt.matrixL();
  return from_eigen(lower);
}

bool all_finite(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

double norm2(std::span<const double> v) { return std::sqrt(kernels::dot(v, v)); }

}  // namespace fedvar
