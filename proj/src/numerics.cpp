#include "l4/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "l4/errors.hpp"

namespace l4 {

namespace {

std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

void require(bool ok, const char* msg) {
  if (!ok) throw ContractError(msg);
}

}  // namespace

Seed Seed::derive(std::uint64_t stream) const noexcept {
  return Seed{splitmix64(value ^ splitmix64(stream + 0x51ED270B27A4C5F3ULL))};
}

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  require(data_.size() == rows_ * cols_, "Matrix: data length does not equal rows*cols");
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) {
    throw ContractError("dot: length mismatch (" + std::to_string(a.size()) + " vs " +
                        std::to_string(b.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double squared_norm(std::span<const double> a) { return dot(a, a); }

bool all_finite(std::span<const double> a) noexcept {
  for (double x : a) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

Matrix transpose(const Matrix& m) {
  Matrix t(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) t(c, r) = m(r, c);
  return t;
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  require(a.cols() == b.rows(), "matmul: inner dimensions differ");
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto dst = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      auto src = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aik * src[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows(), "matmul_tn: row counts differ");
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto src = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = a(k, i);
      auto dst = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) dst[j] += aki * src[j];
    }
  }
  return out;
}

Vector matvec(const Matrix& m, std::span<const double> x) {
  require(m.cols() == x.size(), "matvec: dimension mismatch");
  Vector y(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) y[r] = dot(m.row(r), x);
  return y;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require(a.rows() == b.rows() && a.cols() == b.cols(), "max_abs_diff: shape mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

std::optional<Vector> cholesky_solve(const Matrix& spd, std::span<const double> rhs) {
  const std::size_t n = spd.rows();
  require(spd.cols() == n && rhs.size() == n, "cholesky_solve: dimension mismatch");
  Matrix l(n, n);
  for (std::size_t j = 0; j < n; ++j) {
    double d = spd(j, j);
    for (std::size_t k = 0; k < j; ++k) d -= l(j, k) * l(j, k);
    if (!(d > 0.0) || !std::isfinite(d)) return std::nullopt;
    const double ljj = std::sqrt(d);
    l(j, j) = ljj;
    for (std::size_t i = j + 1; i < n; ++i) {
      double s = spd(i, j);
      for (std::size_t k = 0; k < j; ++k) s -= l(i, k) * l(j, k);
      l(i, j) = s / ljj;
    }
  }
  Vector y(rhs.begin(), rhs.end());
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t k = 0; k < i; ++k) y[i] -= l(i, k) * y[k];
    y[i] /= l(i, i);
  }
  for (std::size_t i = n; i-- > 0;) {
    for (std::size_t k = i + 1; k < n; ++k) y[i] -= l(k, i) * y[k];
    y[i] /= l(i, i);
  }
  return y;
}

Matrix gaussian_sample(std::size_t dim, std::size_t n, Seed seed) {
  require(dim >= 1 && n >= 1, "gaussian_sample: dim and n must be >= 1");
  std::mt19937_64 rng(seed.value);
  std::normal_distribution<double> normal(0.0, 1.0);
  Matrix m(dim, n);
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < dim; ++i) m(i, j) = normal(rng);
  return m;
}

Matrix random_orthogonal(std::size_t n, Seed seed) {
  require(n >= 1, "random_orthogonal: n must be >= 1");
  Matrix q = gaussian_sample(n, n, seed);
  // Modified Gram-Schmidt over columns, each projection applied twice.
  for (std::size_t j = 0; j < n; ++j) {
    for (int pass = 0; pass < 2; ++pass) {
      for (std::size_t k = 0; k < j; ++k) {
        double proj = 0.0;
        for (std::size_t i = 0; i < n; ++i) proj += q(i, k) * q(i, j);
        for (std::size_t i = 0; i < n; ++i) q(i, j) -= proj * q(i, k);
      }
    }
    double norm = 0.0;
    for (std::size_t i = 0; i < n; ++i) norm += q(i, j) * q(i, j);
    norm = std::sqrt(norm);
    if (!(norm > 0.0)) throw NumericError("random_orthogonal: rank-deficient Gaussian sample");
    for (std::size_t i = 0; i < n; ++i) q(i, j) /= norm;
  }
  return q;
}

std::vector<double> log_spaced_singular_values(std::size_t count, double kappa) {
  require(count >= 1, "log_spaced_singular_values: count must be >= 1");
  require(kappa >= 1.0 && std::isfinite(kappa), "log_spaced_singular_values: kappa must be >= 1");
  std::vector<double> sigma(count, 1.0);
  if (count == 1) return sigma;
  const double log_kappa = std::log(kappa);
  for (std::size_t i = 1; i + 1 < count; ++i) {
    sigma[i] = std::exp(-log_kappa * static_cast<double>(i) / static_cast<double>(count - 1));
  }
  sigma[count - 1] = 1.0 / kappa;
  return sigma;
}

ConditionedFactors conditioned_factors(std::size_t rows, std::size_t cols, double kappa,
                                       Seed seed) {
  require(rows >= cols && cols >= 2, "conditioned_matrix: need rows >= cols >= 2");
  if (!(kappa >= 1.0) || !std::isfinite(kappa)) {
    throw ContractError("conditioned_matrix: kappa must be finite and >= 1");
  }
  const Matrix u = random_orthogonal(rows, seed.derive(1));
  const Matrix v = random_orthogonal(cols, seed.derive(2));

  ConditionedFactors f;
  f.singular_values = log_spaced_singular_values(cols, kappa);
  f.left = Matrix(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) f.left(r, c) = u(r, c) * f.singular_values[c];
  f.right = transpose(v);
  f.product = matmul(f.left, f.right);
  return f;
}

Matrix conditioned_matrix(std::size_t rows, std::size_t cols, double kappa, Seed seed) {
  return conditioned_factors(rows, cols, kappa, seed).product;
}

}  // namespace l4
