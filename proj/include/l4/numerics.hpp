#pragma once

// Small dense linear algebra in 64-bit floats plus seeded sampling helpers.
// Everything here is a pure function of its arguments.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

namespace l4 {

using Vector = std::vector<double>;

/// Reproducibility seed. Identical seeds yield bit-identical sample streams.
struct Seed {
  std::uint64_t value = 0;

  /// Independent child stream, e.g. derive(1) for the dataset, derive(2) for init.
  Seed derive(std::uint64_t stream) const noexcept;

  friend bool operator==(Seed, Seed) = default;
};

/// Row-major dense matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

/// Sequential left-to-right sum of a[i]*b[i]. Throws ContractError on length mismatch.
double dot(std::span<const double> a, std::span<const double> b);

double squared_norm(std::span<const double> a);
bool all_finite(std::span<const double> a) noexcept;

Matrix transpose(const Matrix& m);
Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
Vector matvec(const Matrix& m, std::span<const double> x);

/// max_ij |a_ij - b_ij|; shapes must agree.
double max_abs_diff(const Matrix& a, const Matrix& b);

/// Solves (spd) x = rhs by Cholesky. Returns nullopt if the factorization hits a
/// non-positive pivot.
std::optional<Vector> cholesky_solve(const Matrix& spd, std::span<const double> rhs);

/// n x n orthogonal matrix from Gram-Schmidt (with one re-orthogonalization pass)
/// of a standard-Gaussian sample. Diagonal of the implied R is positive.
Matrix random_orthogonal(std::size_t n, Seed seed);

/// The pieces of a matrix with prescribed singular values: product = left * right
/// where left = U[:, :cols] * diag(sigma) and right = V^T.
struct ConditionedFactors {
  Matrix left;
  Matrix right;
  Matrix product;
  std::vector<double> singular_values;
};

/// Singular values log-uniformly spaced from 1 down to 1/kappa.
std::vector<double> log_spaced_singular_values(std::size_t count, double kappa);

ConditionedFactors conditioned_factors(std::size_t rows, std::size_t cols, double kappa, Seed seed);

/// rows x cols matrix with condition number kappa (rows >= cols >= 2, kappa >= 1).
Matrix conditioned_matrix(std::size_t rows, std::size_t cols, double kappa, Seed seed);

/// dim x n matrix whose columns are independent N(0, I) draws.
Matrix gaussian_sample(std::size_t dim, std::size_t n, Seed seed);

}  // namespace l4
