#include <gtest/gtest.h>

#include <cmath>

#include "l4/errors.hpp"
#include "l4/numerics.hpp"
#include "oracles.hpp"

using namespace l4;

TEST(Dot, HandExample) {
  const Vector a{1, 2}, b{3, 4};
  EXPECT_EQ(dot(a, b), 11.0);
}

TEST(Dot, ZeroAndOrthogonal) {
  const Vector x{1.5, -2.0, 7.0}, z(3, 0.0);
  EXPECT_EQ(dot(x, z), 0.0);
  const Vector e1{1, 0}, e2{0, 1};
  EXPECT_EQ(dot(e1, e2), 0.0);
}

TEST(Dot, LengthMismatchThrows) {
  const Vector a{1, 2}, b{1, 2, 3};
  EXPECT_THROW(dot(a, b), ContractError);
}

TEST(Seed, DeriveIsDeterministicAndDistinct) {
  const Seed s{42};
  EXPECT_EQ(s.derive(1), s.derive(1));
  EXPECT_NE(s.derive(1).value, s.derive(2).value);
  EXPECT_NE(s.derive(1).value, Seed{43}.derive(1).value);
}

TEST(RandomOrthogonal, OneByOne) {
  const Matrix q = random_orthogonal(1, Seed{3});
  EXPECT_EQ(std::abs(q(0, 0)), 1.0);
}

TEST(RandomOrthogonal, ZeroSizeThrows) { EXPECT_THROW(random_orthogonal(0, Seed{1}), ContractError); }

TEST(RandomOrthogonal, OrthogonalToRoundoff) {
  for (std::size_t n : {2u, 4u, 6u, 10u, 16u}) {
    for (std::uint64_t s = 1; s <= 10; ++s) {
      const Matrix q = random_orthogonal(n, Seed{s});
      EXPECT_LT(max_abs_diff(matmul_tn(q, q), Matrix::identity(n)), 1e-12) << n << " " << s;
    }
  }
}

TEST(RandomOrthogonal, SameSeedSameMatrix) {
  EXPECT_EQ(random_orthogonal(5, Seed{9}), random_orthogonal(5, Seed{9}));
  EXPECT_NE(random_orthogonal(5, Seed{9}), random_orthogonal(5, Seed{10}));
}

TEST(ConditionedMatrix, KappaOneGivesUnitSpectrum) {
  const auto sv = oracle::singular_values(conditioned_matrix(7, 4, 1.0, Seed{2}));
  for (Eigen::Index i = 0; i < sv.size(); ++i) EXPECT_NEAR(sv[i], 1.0, 1e-12);
}

TEST(ConditionedMatrix, SmallHandCase) {
  const auto sv = oracle::singular_values(conditioned_matrix(3, 2, 100.0, Seed{5}));
  ASSERT_EQ(sv.size(), 2);
  EXPECT_NEAR(sv[0], 1.0, 1e-12);
  EXPECT_NEAR(sv[1], 0.01, 1e-12);
}

TEST(ConditionedMatrix, ConditionNumberWithinOnePercent) {
  for (double kappa : {1e2, 1e5, 1e10}) {
    for (std::uint64_t s = 1; s <= 5; ++s) {
      const auto sv = oracle::singular_values(conditioned_matrix(10, 6, kappa, Seed{s}));
      const double measured = sv[0] / sv[sv.size() - 1];
      EXPECT_LT(std::abs(measured / kappa - 1.0), 0.01) << kappa << " seed " << s;
    }
  }
}

TEST(ConditionedMatrix, FactorsMultiplyToProduct) {
  const auto f = conditioned_factors(10, 6, 1e4, Seed{8});
  EXPECT_LT(max_abs_diff(matmul(f.left, f.right), f.product), 1e-15);
  EXPECT_EQ(f.singular_values.front(), 1.0);
  EXPECT_EQ(f.singular_values.back(), 1e-4);
}

TEST(ConditionedMatrix, SpectrumIsGeometric) {
  const auto s = log_spaced_singular_values(6, 1e10);
  for (std::size_t i = 0; i + 1 < s.size(); ++i) EXPECT_NEAR(s[i + 1] / s[i], 1e-2, 1e-13);
}

TEST(ConditionedMatrix, RejectsBadArguments) {
  EXPECT_THROW(conditioned_matrix(10, 6, 0.5, Seed{1}), ContractError);
  EXPECT_THROW(conditioned_matrix(3, 4, 10.0, Seed{1}), ContractError);
  EXPECT_THROW(conditioned_matrix(1, 1, 10.0, Seed{1}), ContractError);
  EXPECT_THROW(conditioned_matrix(10, 6, std::nan(""), Seed{1}), ContractError);
}

TEST(GaussianSample, MomentsOfAMillionDraws) {
  const Matrix m = gaussian_sample(1000, 1000, Seed{11});
  double sum = 0.0, sq = 0.0;
  for (double x : m.data()) {
    sum += x;
    sq += x * x;
  }
  const double n = static_cast<double>(m.size());
  const double mean = sum / n;
  EXPECT_LT(std::abs(mean), 5e-3);
  EXPECT_LT(std::abs(sq / n - mean * mean - 1.0), 1e-2);
}

TEST(GaussianSample, Deterministic) {
  EXPECT_EQ(gaussian_sample(6, 50, Seed{4}), gaussian_sample(6, 50, Seed{4}));
  EXPECT_NE(gaussian_sample(6, 50, Seed{4}), gaussian_sample(6, 50, Seed{5}));
}

TEST(GaussianSample, EmptyShapeThrows) {
  EXPECT_THROW(gaussian_sample(0, 5, Seed{1}), ContractError);
  EXPECT_THROW(gaussian_sample(5, 0, Seed{1}), ContractError);
}

TEST(Cholesky, SolvesAgainstEigen) {
  const Matrix a = gaussian_sample(5, 5, Seed{21});
  Matrix spd = matmul_tn(a, a);
  for (std::size_t i = 0; i < 5; ++i) spd(i, i) += 0.5;
  const Vector rhs{1, -2, 3, 0.5, 4};
  const auto x = cholesky_solve(spd, rhs);
  ASSERT_TRUE(x.has_value());
  const Eigen::VectorXd ref = oracle::to_eigen(spd).ldlt().solve(
      Eigen::Map<const Eigen::VectorXd>(rhs.data(), 5));
  for (int i = 0; i < 5; ++i) EXPECT_NEAR((*x)[i], ref[i], 1e-10);
}

TEST(Cholesky, IndefiniteReturnsNothing) {
  Matrix m(2, 2);
  m(0, 0) = 1;
  m(1, 1) = -1;
  const Vector rhs{1, 1};
  EXPECT_FALSE(cholesky_solve(m, rhs).has_value());
}

TEST(MatrixOps, TransposeAndProducts) {
  const Matrix a = gaussian_sample(3, 4, Seed{1});
  const Matrix b = gaussian_sample(3, 2, Seed{2});
  EXPECT_LT(max_abs_diff(matmul_tn(a, b), matmul(transpose(a), b)), 1e-15);
  EXPECT_THROW(matmul(a, b), ContractError);
  EXPECT_THROW(Matrix(2, 2, Vector{1, 2, 3}), ContractError);
}
