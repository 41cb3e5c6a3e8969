// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace fedvar {

using Vec = std::vector<double>;

// Dense row-major matrix.
struct Mat {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Mat() = default;
  Mat(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}
  Mat(std::size_t r, std::size_t c, std::vector<double> values);

  static Mat zeros(std::size_t r, std::size_t c) { return Mat(r, c); }
  static Mat identity(std::size_t n);
  static Mat diagonal(std::span<const double> d);

  double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
  double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }
  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }
};

// Unit lower-triangular matrix holding only the strictly-lower entries,
// row-major: row i contributes i entries starting at offset i*(i-1)/2.
class LowerUnitriangular {
 public:
  LowerUnitriangular() = default;
  explicit LowerUnitriangular(std::size_t dim);
  LowerUnitriangular(std::size_t dim, Vec strict_lower);

  static std::size_t strict_size(std::size_t dim) { return dim == 0 ? 0 : dim * (dim - 1) / 2; }
  static std::size_t offset(std::size_t i, std::size_t j) { return i * (i - 1) / 2 + j; }

  std::size_t dim() const noexcept { return dim_; }
  double at(std::size_t i, std::size_t j) const;
  std::span<const double> strict() const noexcept { return strict_; }
  std::span<double> strict() noexcept { return strict_; }
  std::span<const double> strict_row(std::size_t i) const {
    return {strict_.data() + offset(i, 0), i};
  }

 private:
  std::size_t dim_ = 0;
  Vec strict_;
};

Vec matvec(const Mat& m, std::span<const double> v);
// m^T v
Vec matvec_transposed(const Mat& m, std::span<const double> v);
Mat matmul(const Mat& a, const Mat& b);
Mat transpose(const Mat& m);
Mat add(const Mat& a, const Mat& b);
Mat subtract(const Mat& a, const Mat& b);
Mat scaled(const Mat& m, double s);
double frobenius_norm(const Mat& m);
double max_abs_asymmetry(const Mat& m);

// Bitwise equal to matvec(dense_from_unitri(l), v): each row is expanded to
// its dense form and fed through the same row kernel.
Vec unitri_matvec(const LowerUnitriangular& l, std::span<const double> v);
// Solves L x = b (forward) and L^T x = b (backward).
Vec unitri_solve(const LowerUnitriangular& l, std::span<const double> b);
Vec unitri_solve_transposed(const LowerUnitriangular& l, std::span<const double> b);
Mat dense_from_unitri(const LowerUnitriangular& l);

struct SymmetricEigen {
  Vec values;   // ascending
  Mat vectors;  // columns are eigenvectors
};
SymmetricEigen symmetric_eigen(const Mat& m);

// Symmetric PSD square root by eigendecomposition. Eigenvalues in
// [-1e-10, 0) are clamped to zero; anything more negative, or asymmetry
// beyond 1e-10, throws.
Mat sqrtm_psd(const Mat& m);
// Inverse square root of a symmetric positive definite matrix.
Mat inv_sqrtm_pd(const Mat& m);
// Lower Cholesky factor; throws NumericalError when not positive definite.
Mat cholesky_lower(const Mat& m);

bool all_finite(std::span<const double> v);
double norm2(std::span<const double> v);

}  // namespace fedvar
