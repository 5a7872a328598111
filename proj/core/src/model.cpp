#include "singd/model.hpp"

#include <algorithm>
#include <cmath>

#include "singd/errors.hpp"

namespace singd {

namespace {

double activate(double z, Activation a) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Tanh: return std::tanh(z);
    case Activation::Identity: return z;
  }
  return z;
}

double activate_grad(double z, Activation a) {
  switch (a) {
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(z);
      return 1.0 - t * t;
    }
    case Activation::Identity: return 1.0;
  }
  return 1.0;
}

Matrix augment_ones(const Matrix& x) {
  Matrix out(x.rows(), x.cols() + 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) = x(i, j);
    out(i, x.cols()) = 1.0;
  }
  return out;
}

}  // namespace

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "tanh") return Activation::Tanh;
  if (name == "identity") return Activation::Identity;
  throw ConfigError("unknown activation '" + name + "'");
}

LossKind parse_loss(const std::string& name) {
  if (name == "softmax_cross_entropy") return LossKind::SoftmaxCrossEntropy;
  if (name == "mse") return LossKind::Mse;
  throw ConfigError("unknown loss '" + name + "'");
}

Mlp::Mlp(std::vector<Matrix> weights, std::vector<Activation> activations)
    : weights_(std::move(weights)), activations_(std::move(activations)) {
  if (weights_.size() != activations_.size()) {
    throw ShapeError("Mlp: one activation per layer required");
  }
  for (std::size_t l = 1; l < weights_.size(); ++l) {
    if (weights_[l].cols() != weights_[l - 1].rows() + 1) {
      throw ShapeError("Mlp: layer " + std::to_string(l) + " expects " +
                       std::to_string(weights_[l].cols()) + " inputs, previous layer emits " +
                       std::to_string(weights_[l - 1].rows()));
    }
  }
}

Mlp Mlp::random(std::size_t input_dim, const std::vector<std::size_t>& widths,
                const std::vector<Activation>& activations, Rng& rng) {
  if (widths.empty()) throw ContractError("Mlp::random: no layers");
  if (widths.size() != activations.size()) {
    throw ShapeError("Mlp::random: one activation per layer required");
  }
  std::vector<Matrix> weights;
  std::size_t fan_in = input_dim;
  for (std::size_t w : widths) {
    Matrix layer = rng.gaussian_matrix(w, fan_in + 1, 1.0 / std::sqrt(static_cast<double>(fan_in)));
    for (std::size_t i = 0; i < w; ++i) layer(i, fan_in) = 0.0;  // bias column
    weights.push_back(std::move(layer));
    fan_in = w;
  }
  return Mlp(std::move(weights), activations);
}

std::size_t Mlp::input_dim() const { return weights_.front().cols() - 1; }
std::size_t Mlp::output_dim() const { return weights_.back().rows(); }

Matrix Mlp::predict(const Matrix& x) const {
  Matrix h = x;
  for (std::size_t l = 0; l < weights_.size(); ++l) {
    Matrix z = matmul(augment_ones(h), transpose(weights_[l]));
    for (double& v : z.values()) v = activate(v, activations_[l]);
    h = std::move(z);
  }
  return h;
}

ForwardBackward forward_backward(const Mlp& model, const Matrix& x, const Matrix& targets,
                                 LossKind loss) {
  if (x.rows() == 0) throw ContractError("forward_backward: empty batch");
  if (x.cols() != model.input_dim()) {
    throw ShapeError("forward_backward: batch has " + std::to_string(x.cols()) +
                     " features, model expects " + std::to_string(model.input_dim()));
  }
  if (targets.rows() != x.rows() || targets.cols() != model.output_dim()) {
    throw ShapeError("forward_backward: targets must be batch x output_dim");
  }

  const std::size_t m = x.rows();
  const std::size_t num_layers = model.num_layers();
  ForwardBackward result;
  result.layers.resize(num_layers);

  // Forward pass, keeping augmented inputs and pre-activations per layer.
  std::vector<Matrix> pre(num_layers);
  Matrix h = x;
  for (std::size_t l = 0; l < num_layers; ++l) {
    result.layers[l].inputs = augment_ones(h);
    pre[l] = matmul(result.layers[l].inputs, transpose(model.weights()[l]));
    h = pre[l];
    for (double& v : h.values()) v = activate(v, model.activations()[l]);
  }
  result.logits = h;
  result.finite = is_finite(h);

  // Loss and its gradient w.r.t. the network output. Per-example losses are
  // not mean-scaled; the batch reduction happens in the weight gradient.
  Matrix delta(m, model.output_dim());
  double total_loss = 0.0;
  if (loss == LossKind::SoftmaxCrossEntropy) {
    for (std::size_t i = 0; i < m; ++i) {
      double zmax = h(i, 0);
      for (std::size_t c = 1; c < h.cols(); ++c) zmax = std::max(zmax, h(i, c));
      double sum = 0.0;
      for (std::size_t c = 0; c < h.cols(); ++c) sum += std::exp(h(i, c) - zmax);
      const double log_sum = std::log(sum) + zmax;
      for (std::size_t c = 0; c < h.cols(); ++c) {
        const double p = std::exp(h(i, c) - log_sum);
        delta(i, c) = p - targets(i, c);
        total_loss -= targets(i, c) * (h(i, c) - log_sum);
      }
    }
  } else {
    for (std::size_t i = 0; i < m; ++i) {
      for (std::size_t c = 0; c < h.cols(); ++c) {
        const double r = h(i, c) - targets(i, c);
        delta(i, c) = r;
        total_loss += 0.5 * r * r;
      }
    }
  }
  result.loss = total_loss / static_cast<double>(m);
  if (!std::isfinite(result.loss)) result.finite = false;

  // Backward pass: delta holds d(per-example loss)/d(post-activation).
  for (std::size_t l = num_layers; l-- > 0;) {
    Matrix g = delta;  // becomes d loss / d pre-activation
    for (std::size_t i = 0; i < g.rows(); ++i) {
      for (std::size_t j = 0; j < g.cols(); ++j) {
        g(i, j) *= activate_grad(pre[l](i, j), model.activations()[l]);
      }
    }
    result.layers[l].out_grads = g;
    result.layers[l].grad =
        (1.0 / static_cast<double>(m)) * matmul(transpose(g), result.layers[l].inputs);
    if (!is_finite(result.layers[l].grad)) result.finite = false;

    if (l > 0) {
      // Propagate through W_l, dropping the bias coordinate.
      const Matrix back = matmul(g, model.weights()[l]);
      delta = Matrix(m, model.weights()[l].cols() - 1);
      for (std::size_t i = 0; i < m; ++i) {
        for (std::size_t j = 0; j + 1 < model.weights()[l].cols(); ++j) {
          delta(i, j) = back(i, j);
        }
      }
    }
  }
  return result;
}

Matrix one_hot(const std::vector<int>& labels, std::size_t classes) {
  Matrix out(labels.size(), classes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int label = labels[i];
    if (label < 0 || static_cast<std::size_t>(label) >= classes) {
      throw ContractError("one_hot: label " + std::to_string(label) + " out of range");
    }
    out(i, static_cast<std::size_t>(label)) = 1.0;
  }
  return out;
}

double accuracy(const Matrix& logits, const std::vector<int>& labels) {
  if (logits.rows() != labels.size()) throw ShapeError("accuracy: batch size mismatch");
  std::size_t correct = 0;
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < logits.cols(); ++c) {
      if (logits(i, c) > logits(i, best)) best = c;
    }
    if (static_cast<int>(best) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(logits.rows());
}

}  // namespace singd
