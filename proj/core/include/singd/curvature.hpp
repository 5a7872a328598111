#pragma once

#include "singd/linalg.hpp"

namespace singd {

/// Per-layer curvature approximation U (x) G: U is the second moment of the
/// layer inputs, G the second moment of the per-example loss gradients with
/// respect to the layer output.
struct KroneckerCurvature {
  Matrix U;  // d_i x d_i, symmetric PSD
  Matrix G;  // d_o x d_o, symmetric PSD
};

/// Batch means of the per-example outer products. `inputs` is m x d_i with
/// one example per row, `out_grads` is m x d_o.
KroneckerCurvature linear_layer_curvature(const Matrix& inputs, const Matrix& out_grads);

/// (1 - beta1) * prev + beta1 * fresh. Requires 0 < beta1 <= 1.
Matrix ema_update(const Matrix& prev, const Matrix& fresh, double beta1);

}  // namespace singd
