#include "singd/curvature.hpp"

#include <gtest/gtest.h>

#include "singd/rng.hpp"
#include "singd/tasks.hpp"

namespace singd {
namespace {

TEST(LinearLayerCurvature, SingleExampleOuterProducts) {
  const Matrix inputs = Matrix::of({{1, 2}});
  const Matrix out_grads = Matrix::of({{3}});
  const KroneckerCurvature curv = linear_layer_curvature(inputs, out_grads);
  EXPECT_DOUBLE_EQ(curv.U(0, 0), 1.0);
  EXPECT_DOUBLE_EQ(curv.U(0, 1), 2.0);
  EXPECT_DOUBLE_EQ(curv.U(1, 0), 2.0);
  EXPECT_DOUBLE_EQ(curv.U(1, 1), 4.0);
  EXPECT_DOUBLE_EQ(curv.G(0, 0), 9.0);
}

TEST(LinearLayerCurvature, ZeroInputs) {
  const KroneckerCurvature curv = linear_layer_curvature(Matrix(3, 2), Matrix(3, 1));
  EXPECT_EQ(max_abs(curv.U), 0.0);
  EXPECT_EQ(max_abs(curv.G), 0.0);
}

TEST(LinearLayerCurvature, BatchMeanOfOuterProducts) {
  const Matrix inputs = Matrix::of({{1, 0}, {0, 1}});
  const Matrix grads = Matrix::of({{1}, {1}});
  const KroneckerCurvature curv = linear_layer_curvature(inputs, grads);
  EXPECT_DOUBLE_EQ(curv.U(0, 0), 0.5);
  EXPECT_DOUBLE_EQ(curv.U(1, 1), 0.5);
  EXPECT_DOUBLE_EQ(curv.U(0, 1), 0.0);
}

TEST(LinearLayerCurvature, ErrorsOnBadBatches) {
  EXPECT_THROW(linear_layer_curvature(Matrix(0, 2), Matrix(0, 1)), ContractError);
  EXPECT_THROW(linear_layer_curvature(Matrix(3, 2), Matrix(2, 1)), ShapeError);
}

TEST(LinearLayerCurvature, SymmetricPsdOnRandomBatches) {
  Rng rng(5);
  const Matrix inputs = rng.gaussian_matrix(16, 5);
  const Matrix grads = rng.gaussian_matrix(16, 3);
  const KroneckerCurvature curv = linear_layer_curvature(inputs, grads);
  EXPECT_LE(max_abs(curv.U - transpose(curv.U)), 1e-10);
  EXPECT_LE(max_abs(curv.G - transpose(curv.G)), 1e-10);
  for (int probe = 0; probe < 20; ++probe) {
    const Matrix x = rng.gaussian_matrix(5, 1);
    const Matrix quad = matmul(matmul(transpose(x), curv.U), x);
    EXPECT_GE(quad(0, 0), -1e-10 * frobenius_norm(x) * frobenius_norm(x));
  }
}

TEST(LinearLayerCurvature, RecoversQuadraticTaskFactors) {
  Rng rng(6);
  const KroneckerQuadratic task = make_kronecker_quadratic(5, 3, 100.0, rng);
  const auto [inputs, grads] = task.defining_batches();
  const KroneckerCurvature curv = linear_layer_curvature(inputs, grads);
  EXPECT_LE(max_abs(curv.U - task.A), 1e-12);
  EXPECT_LE(max_abs(curv.G - task.B), 1e-12);
}

TEST(EmaUpdate, EndpointsAndMidpoint) {
  const Matrix prev = Matrix::identity(2);
  const Matrix fresh = 3.0 * Matrix::identity(2);
  EXPECT_LE(max_abs(ema_update(prev, fresh, 1.0) - fresh), 0.0);
  EXPECT_LE(max_abs(ema_update(prev, fresh, 0.5) - 2.0 * Matrix::identity(2)), 1e-15);
  EXPECT_LE(max_abs(ema_update(prev, fresh, 0.0) - prev), 0.0);
}

TEST(EmaUpdate, Errors) {
  EXPECT_THROW(ema_update(Matrix(2, 2), Matrix(3, 3), 0.5), ShapeError);
  EXPECT_THROW(ema_update(Matrix(2, 2), Matrix(2, 2), -0.1), ContractError);
  EXPECT_THROW(ema_update(Matrix(2, 2), Matrix(2, 2), 1.5), ContractError);
}

}  // namespace
}  // namespace singd
