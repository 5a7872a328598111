#include "singd/linalg.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "singd/rng.hpp"

namespace singd {
namespace {

void expect_matrix_near(const Matrix& got, const Matrix& want, double tol) {
  ASSERT_EQ(got.rows(), want.rows());
  ASSERT_EQ(got.cols(), want.cols());
  for (std::size_t i = 0; i < got.rows(); ++i) {
    for (std::size_t j = 0; j < got.cols(); ++j) {
      EXPECT_NEAR(got(i, j), want(i, j), tol) << "at (" << i << ", " << j << ")";
    }
  }
}

TEST(Matmul, IdentityIsNeutral) {
  const Matrix a = Matrix::of({{1, 2}, {3, 4}});
  expect_matrix_near(matmul(Matrix::identity(2), a), a, 0.0);
}

TEST(Matmul, HandComputedProduct) {
  const Matrix a = Matrix::of({{1, 2}, {3, 4}});
  const Matrix b = Matrix::of({{0}, {1}});
  expect_matrix_near(matmul(a, b), Matrix::of({{2}, {4}}), 0.0);
}

TEST(Matmul, MismatchedShapesThrow) {
  const Matrix a(2, 3);
  const Matrix b(2, 3);
  EXPECT_THROW(matmul(a, b), ShapeError);
}

TEST(Matmul, AssociativityOnRandomTriples) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.gaussian_matrix(4, 4);
    const Matrix b = rng.gaussian_matrix(4, 4);
    const Matrix c = rng.gaussian_matrix(4, 4);
    expect_matrix_near(matmul(matmul(a, b), c), matmul(a, matmul(b, c)), 1e-12);
  }
}

TEST(Matmul, Fp32AccumulationIsCoarser) {
  Rng rng(8);
  const Matrix a = rng.gaussian_matrix(32, 32);
  const Matrix b = rng.gaussian_matrix(32, 32);
  const Matrix exact = matmul(a, b);
  const Matrix coarse = matmul(a, b, Accum::FP32);
  const double gap = max_abs(exact - coarse);
  EXPECT_GT(gap, 0.0);
  EXPECT_LT(gap, 1e-4);
}

TEST(TruncatedExpm, ZeroMatrixGivesIdentity) {
  expect_matrix_near(truncated_expm(Matrix(3, 3), 2.5, 1), Matrix::identity(3), 0.0);
}

TEST(TruncatedExpm, FirstAndSecondOrderOnIdentity) {
  const Matrix m = Matrix::identity(2);
  expect_matrix_near(truncated_expm(m, -0.1, 1), 0.9 * Matrix::identity(2), 1e-15);
  expect_matrix_near(truncated_expm(m, -0.1, 2), 0.905 * Matrix::identity(2), 1e-15);
}

TEST(TruncatedExpm, NonSquareThrows) {
  EXPECT_THROW(truncated_expm(Matrix(2, 3), 1.0, 1), ShapeError);
  EXPECT_THROW(truncated_expm(Matrix(2, 2), 1.0, 3), ContractError);
}

// 20-term Taylor sum as the series oracle.
Matrix expm_series(const Matrix& m, double scale) {
  Matrix sum = Matrix::identity(m.rows());
  Matrix term = Matrix::identity(m.rows());
  for (int k = 1; k <= 20; ++k) {
    term = (scale / k) * matmul(term, m);
    sum = sum + term;
  }
  return sum;
}

TEST(TruncatedExpm, SecondOrderErrorIsCubicInScale) {
  Rng rng(21);
  Matrix m = rng.gaussian_matrix(5, 5);
  m = (1.0 / frobenius_norm(m)) * m;  // ||m|| = 1
  const double s = 0.2;
  const double err_s = frobenius_norm(truncated_expm(m, s, 2) - expm_series(m, s));
  const double err_half = frobenius_norm(truncated_expm(m, s / 2, 2) - expm_series(m, s / 2));
  EXPECT_LT(err_s, 0.5 * s * s * s);
  EXPECT_GE(err_s / err_half, 6.0);
}

TEST(DenseInverse, Identity) {
  expect_matrix_near(dense_inverse(Matrix::identity(4)), Matrix::identity(4), 0.0);
}

TEST(DenseInverse, DiagonalReciprocals) {
  const Matrix a = Matrix::of({{2, 0}, {0, 4}});
  expect_matrix_near(dense_inverse(a), Matrix::of({{0.5, 0}, {0, 0.25}}), 1e-15);
}

TEST(DenseInverse, SingularMatrixReportsPivot) {
  const Matrix a = Matrix::of({{1, 1}, {1, 1}});
  try {
    dense_inverse(a);
    FAIL() << "expected SingularError";
  } catch (const SingularError& e) {
    EXPECT_EQ(e.pivot_index(), 1u);
  }
}

TEST(DenseInverse, RoundTripOnWellConditioned) {
  Rng rng(33);
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix m = rng.gaussian_matrix(8, 8);
    Matrix a = matmul(transpose(m), m);
    for (double& v : a.values()) v /= 8.0;
    for (std::size_t i = 0; i < 8; ++i) a(i, i) += 0.5;  // keeps cond well under 1e3
    const Matrix prod = matmul(dense_inverse(a), a);
    EXPECT_LT(frobenius_norm(prod - Matrix::identity(8)), 1e-10);
  }
}

TEST(Kron, IdentityTimesIdentity) {
  expect_matrix_near(kron(Matrix::identity(2), Matrix::identity(3)), Matrix::identity(6), 0.0);
}

TEST(Kron, ScalarFactor) {
  const Matrix b = Matrix::of({{1, 2}, {3, 4}});
  expect_matrix_near(kron(Matrix::of({{2}}), b), 2.0 * b, 0.0);
}

TEST(Kron, DiagonalByDiagonal) {
  const Matrix got = kron(Matrix::of({{1, 0}, {0, 2}}), Matrix::of({{3, 0}, {0, 4}}));
  const Matrix want = Matrix::of({{3, 0, 0, 0}, {0, 4, 0, 0}, {0, 0, 6, 0}, {0, 0, 0, 8}});
  expect_matrix_near(got, want, 0.0);
}

TEST(Kron, MixedProductProperty) {
  Rng rng(44);
  const Matrix a = rng.gaussian_matrix(2, 3);
  const Matrix b = rng.gaussian_matrix(3, 2);
  const Matrix c = rng.gaussian_matrix(3, 2);
  const Matrix d = rng.gaussian_matrix(2, 3);
  expect_matrix_near(matmul(kron(a, b), kron(c, d)), kron(matmul(a, c), matmul(b, d)), 1e-10);
}

TEST(Plumbing, TransposeTraceNormSymmetrize) {
  const Matrix a = Matrix::of({{1, 2}, {3, 4}});
  expect_matrix_near(transpose(a), Matrix::of({{1, 3}, {2, 4}}), 0.0);
  EXPECT_DOUBLE_EQ(trace(a), 5.0);
  EXPECT_DOUBLE_EQ(frobenius_norm(a), std::sqrt(30.0));
  expect_matrix_near(symmetrize(a), Matrix::of({{1, 2.5}, {2.5, 4}}), 0.0);
  EXPECT_THROW(trace(Matrix(2, 3)), ShapeError);
}

TEST(Plumbing, IsFiniteFlagsNan) {
  Matrix a(2, 2);
  EXPECT_TRUE(is_finite(a));
  a(1, 1) = std::nan("");
  EXPECT_FALSE(is_finite(a));
  a(1, 1) = std::numeric_limits<double>::infinity();
  EXPECT_FALSE(is_finite(a));
}

TEST(Matrix, ConstructorValidatesLength) {
  EXPECT_THROW(Matrix(2, 2, {1.0, 2.0, 3.0}), ShapeError);
}

}  // namespace
}  // namespace singd
