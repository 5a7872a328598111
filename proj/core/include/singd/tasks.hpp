#pragma once

#include <string>
#include <utility>
#include <vector>

#include "singd/curvature.hpp"
#include "singd/linalg.hpp"
#include "singd/rng.hpp"

namespace singd {

struct LabeledData {
  Matrix x;  // rows are examples
  std::vector<int> labels;
  std::size_t classes = 0;
};

struct BlobsSpec {
  std::size_t classes = 3;
  std::size_t dim = 2;
  std::size_t train_size = 256;
  std::size_t test_size = 128;
  double noise = 0.15;
};

struct BlobsData {
  LabeledData train;
  LabeledData test;
};

/// Seeded gaussian clusters with one cluster per class.
BlobsData make_gaussian_blobs(const BlobsSpec& spec, Rng& rng);

/// Quadratic objective with an exactly Kronecker-factored Hessian:
///   loss(W) = 1/2 vec(W)^T (A (x) B) vec(W) - Tr(b^T W),
/// A (d_i x d_i) and B (d_o x d_o) symmetric positive definite. The gradient
/// is B W A - b and the Hessian is exactly A (x) B, so (U = A, G = B) is the
/// exact per-layer curvature.
struct KroneckerQuadratic {
  Matrix A, B, b;
  // Spectral data used to construct A and B; kept so that batches whose
  // second moments reproduce A and B exactly can be emitted.
  Matrix basis_A, basis_B;             // orthogonal columns
  std::vector<double> eigs_A, eigs_B;  // positive

  double loss(const Matrix& w) const;
  Matrix grad(const Matrix& w) const;
  KroneckerCurvature exact_curvature() const { return {A, B}; }

  /// B^-1 b A^-1, the unique stationary point (dense-inverse oracle).
  Matrix solve_oracle() const;

  /// (inputs, out_grads) batches with mean outer products exactly A and B.
  std::pair<Matrix, Matrix> defining_batches() const;
};

struct QuadraticEval {
  double loss;
  Matrix grad;
  KroneckerCurvature curvature;
};

QuadraticEval kronecker_quadratic_eval(const KroneckerQuadratic& task, const Matrix& w);

/// Builds the task with cond(A (x) B) equal to `cond`. `split` is the
/// fraction of log-condition assigned to the input-side factor A (0.5 =
/// even). Spectra are geometric with top eigenvalue 2, so multiplicative
/// preconditioner updates stay contractive from an identity start.
KroneckerQuadratic make_kronecker_quadratic(std::size_t d_i, std::size_t d_o, double cond,
                                            Rng& rng, double split = 0.5);

/// CSV datasets: header `label,f0,f1,...`, decimal values, UTF-8.
LabeledData load_csv_dataset(const std::string& path);

}  // namespace singd
