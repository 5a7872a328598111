#include "singd/curvature.hpp"

#include "singd/errors.hpp"

namespace singd {

namespace {

// (1/m) X^T X for an m x d batch-of-rows matrix.
Matrix second_moment(const Matrix& x) {
  const std::size_t m = x.rows();
  const std::size_t d = x.cols();
  Matrix out(d, d);
  for (std::size_t a = 0; a < d; ++a) {
    for (std::size_t b = a; b < d; ++b) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += x(i, a) * x(i, b);
      const double v = acc / static_cast<double>(m);
      out(a, b) = v;
      out(b, a) = v;
    }
  }
  return out;
}

}  // namespace

KroneckerCurvature linear_layer_curvature(const Matrix& inputs, const Matrix& out_grads) {
  if (inputs.rows() == 0) throw ContractError("linear_layer_curvature: empty batch");
  if (inputs.rows() != out_grads.rows()) {
    throw ShapeError("linear_layer_curvature: " + std::to_string(inputs.rows()) +
                     " inputs vs " + std::to_string(out_grads.rows()) + " gradients");
  }
  return {second_moment(inputs), second_moment(out_grads)};
}

Matrix ema_update(const Matrix& prev, const Matrix& fresh, double beta1) {
  if (!prev.same_shape(fresh)) throw ShapeError("ema_update: shape mismatch");
  if (!(beta1 >= 0.0 && beta1 <= 1.0)) {
    throw ContractError("ema_update: need 0 <= beta1 <= 1");
  }
  Matrix out = (1.0 - beta1) * prev;
  axpy(out, beta1, fresh);
  return out;
}

}  // namespace singd
