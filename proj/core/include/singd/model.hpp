#pragma once

#include <string>
#include <vector>

#include "singd/linalg.hpp"
#include "singd/rng.hpp"

namespace singd {

enum class Activation { Relu, Tanh, Identity };
enum class LossKind { SoftmaxCrossEntropy, Mse };

Activation parse_activation(const std::string& name);
LossKind parse_loss(const std::string& name);

/// What the curvature module consumes for one layer: the bias-augmented
/// inputs, the per-example loss gradients w.r.t. the layer output (before
/// activation), and the batch-mean weight gradient.
struct LayerTape {
  Matrix grad;       // d_o x (d_i + 1)
  Matrix inputs;     // m x (d_i + 1), last column all ones
  Matrix out_grads;  // m x d_o
};

struct ForwardBackward {
  double loss = 0.0;
  bool finite = true;
  Matrix logits;  // m x d_out
  std::vector<LayerTape> layers;
};

/// Fully-connected net. Biases are folded into the weight matrices via a
/// constant-1 input coordinate, so every parameter sits under the layer's
/// Kronecker preconditioner.
class Mlp {
 public:
  Mlp() = default;
  Mlp(std::vector<Matrix> weights, std::vector<Activation> activations);

  /// He-style init: entries ~ N(0, 1/sqrt(fan_in)), bias column zero.
  static Mlp random(std::size_t input_dim, const std::vector<std::size_t>& widths,
                    const std::vector<Activation>& activations, Rng& rng);

  std::size_t num_layers() const { return weights_.size(); }
  std::size_t input_dim() const;
  std::size_t output_dim() const;
  const std::vector<Matrix>& weights() const { return weights_; }
  std::vector<Matrix>& weights() { return weights_; }
  const std::vector<Activation>& activations() const { return activations_; }

  Matrix predict(const Matrix& x) const;  // m x d_out logits

 private:
  std::vector<Matrix> weights_;  // W_l: width_l x (prev_width + 1)
  std::vector<Activation> activations_;
};

/// Batch loss (mean of per-example losses) with gradients and per-layer
/// tapes. `targets` is m x d_out: one-hot rows for cross-entropy, regression
/// targets for MSE.
ForwardBackward forward_backward(const Mlp& model, const Matrix& x, const Matrix& targets,
                                 LossKind loss);

Matrix one_hot(const std::vector<int>& labels, std::size_t classes);
double accuracy(const Matrix& logits, const std::vector<int>& labels);

}  // namespace singd
