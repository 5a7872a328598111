#include "singd/optim.hpp"

#include <cmath>

#include "singd/errors.hpp"

namespace singd {

namespace {

void quantize_factor_state(StructuredFactor& f, const PrecisionPolicy& p) {
  if (!p.quantizes(kQuantizeFactorState) || p.storage == Format::FP64) return;
  for (double& v : f.coeffs()) v = quantize(v, p.storage);
}

void check_grad_shape(const LayerOptState& state, const Matrix& grad, const Matrix& weights) {
  if (!grad.same_shape(weights)) {
    throw ShapeError("step: gradient " + std::to_string(grad.rows()) + "x" +
                     std::to_string(grad.cols()) + " vs weights " +
                     std::to_string(weights.rows()) + "x" + std::to_string(weights.cols()));
  }
  if (!grad.same_shape(state.m_mu)) {
    throw ShapeError("step: state was initialized for " + std::to_string(state.m_mu.rows()) +
                     "x" + std::to_string(state.m_mu.cols()));
  }
}

}  // namespace

OptimizerKind parse_optimizer_name(const std::string& name) {
  if (name == "kfac") return OptimizerKind::Kfac;
  if (name == "ikfac") return OptimizerKind::Ikfac;
  if (name == "singd") return OptimizerKind::Singd;
  if (name == "adamw") return OptimizerKind::Adamw;
  if (name == "sgd") return OptimizerKind::Sgd;
  throw ConfigError("unknown optimizer '" + name + "'");
}

std::string optimizer_name(OptimizerKind kind) {
  switch (kind) {
    case OptimizerKind::Kfac: return "kfac";
    case OptimizerKind::Ikfac: return "ikfac";
    case OptimizerKind::Singd: return "singd";
    case OptimizerKind::Adamw: return "adamw";
    case OptimizerKind::Sgd: return "sgd";
  }
  return "?";
}

bool has_preconditioner(OptimizerKind kind) {
  return kind == OptimizerKind::Kfac || kind == OptimizerKind::Ikfac ||
         kind == OptimizerKind::Singd;
}

void OptimizerConfig::validate() const {
  if (!(beta1 > 0.0)) throw ContractError("optimizer: beta1 must be > 0");
  if (!(beta2 > 0.0)) throw ContractError("optimizer: beta2 must be > 0");
  if (!(alpha1 >= 0.0 && alpha1 < 1.0)) throw ContractError("optimizer: need 0 <= alpha1 < 1");
  if (!(alpha2 >= 0.0 && alpha2 < 1.0)) throw ContractError("optimizer: need 0 <= alpha2 < 1");
  if (!(lambda >= 0.0)) throw ContractError("optimizer: lambda must be >= 0");
  if (interval < 1) throw ContractError("optimizer: T must be >= 1");
  if (truncation_order != 1 && truncation_order != 2) {
    throw ContractError("optimizer: truncation_order must be 1 or 2");
  }
  precision.validate();
}

LayerOptState LayerOptState::init(std::size_t d_out, std::size_t d_in,
                                  const OptimizerConfig& cfg) {
  cfg.validate();
  LayerOptState state;
  state.kind = cfg.kind;
  state.m_mu = Matrix(d_out, d_in);
  switch (cfg.kind) {
    case OptimizerKind::Kfac:
      state.S_K = Matrix::identity(d_in);
      state.S_C = Matrix::identity(d_out);
      state.S_K_inv = Matrix::identity(d_in);
      state.S_C_inv = Matrix::identity(d_out);
      break;
    case OptimizerKind::Ikfac:
    case OptimizerKind::Singd: {
      const FactorStructure sk = cfg.structure_K.bind(d_in);
      const FactorStructure sc = cfg.structure_C.bind(d_out);
      state.K = StructuredFactor::identity(sk);
      state.C = StructuredFactor::identity(sc);
      state.m_K = StructuredFactor::zero(sk);
      state.m_C = StructuredFactor::zero(sc);
      break;
    }
    case OptimizerKind::Adamw:
      state.m_s = Matrix(d_out, d_in);
      break;
    case OptimizerKind::Sgd:
      break;
  }
  return state;
}

double LayerOptState::factor_norm_K() const {
  if (kind == OptimizerKind::Kfac) return frobenius_norm(S_K);
  if (kind == OptimizerKind::Ikfac || kind == OptimizerKind::Singd) {
    return std::sqrt(gram_trace(K));
  }
  return 0.0;
}

double LayerOptState::factor_norm_C() const {
  if (kind == OptimizerKind::Kfac) return frobenius_norm(S_C);
  if (kind == OptimizerKind::Ikfac || kind == OptimizerKind::Singd) {
    return std::sqrt(gram_trace(C));
  }
  return 0.0;
}

void kfac_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                         const OptimizerConfig& cfg) {
  const PrecisionPolicy& p = cfg.precision;
  const Accum acc = p.accum();
  const Matrix u = p.apply(curv.U, kQuantizeCurvature);
  const Matrix g = p.apply(curv.G, kQuantizeCurvature);

  state.S_K = p.apply(ema_update(state.S_K, u, cfg.beta1), kQuantizeFactorState);
  state.S_C = p.apply(ema_update(state.S_C, g, cfg.beta1), kQuantizeFactorState);

  Matrix damped_K = state.S_K;
  for (std::size_t i = 0; i < damped_K.rows(); ++i) damped_K(i, i) += cfg.lambda;
  Matrix damped_C = state.S_C;
  for (std::size_t i = 0; i < damped_C.rows(); ++i) damped_C(i, i) += cfg.lambda;

  try {
    state.S_K_inv = p.apply(dense_inverse(damped_K, acc), kQuantizeFactorState);
    state.S_C_inv = p.apply(dense_inverse(damped_C, acc), kQuantizeFactorState);
  } catch (const SingularError& e) {
    state.events.push_back({state.step, std::string("singular: ") + e.what()});
    throw;
  }

  // How far the cached inverse is from a true inverse of the stored damped
  // factor; grows with conditioning x storage rounding.
  const double res_K = frobenius_norm(matmul(damped_K, state.S_K_inv) -
                                      Matrix::identity(damped_K.rows()));
  const double res_C = frobenius_norm(matmul(damped_C, state.S_C_inv) -
                                      Matrix::identity(damped_C.rows()));
  state.precond_residual = std::max({state.precond_residual, res_K, res_C});
}

void inverse_free_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                                 const OptimizerConfig& cfg, bool adaptive_trace) {
  const PrecisionPolicy& p = cfg.precision;
  const Accum acc = p.accum();
  const Matrix u = p.apply(curv.U, kQuantizeCurvature);
  const Matrix g = p.apply(curv.G, kQuantizeCurvature);

  const std::size_t d_i = state.K.dim();
  const std::size_t d_o = state.C.dim();

  // Everything on the right-hand side uses the factors before this update.
  const Matrix h_K = congruence(state.K, u, acc);
  const Matrix h_C = congruence(state.C, g, acc);
  const Matrix ktk = gram(state.K, acc);
  const Matrix ctc = gram(state.C, acc);

  double tr_hC, tr_hK, c2, k2;
  if (adaptive_trace) {
    tr_hC = trace(h_C);
    tr_hK = trace(h_K);
    c2 = cfg.lambda * gram_trace(state.C);
    k2 = cfg.lambda * gram_trace(state.K);
  } else {
    tr_hC = static_cast<double>(d_o);
    tr_hK = static_cast<double>(d_i);
    c2 = cfg.lambda * static_cast<double>(d_o);
    k2 = cfg.lambda * static_cast<double>(d_i);
  }

  Matrix bracket_K = tr_hC * h_K;
  axpy(bracket_K, c2, ktk);
  for (std::size_t i = 0; i < d_i; ++i) bracket_K(i, i) -= static_cast<double>(d_o);
  bracket_K = symmetrize(bracket_K);

  Matrix bracket_C = tr_hK * h_C;
  axpy(bracket_C, k2, ctc);
  for (std::size_t i = 0; i < d_o; ++i) bracket_C(i, i) -= static_cast<double>(d_i);
  bracket_C = symmetrize(bracket_C);

  const double momentum = adaptive_trace ? cfg.alpha1 : 0.0;
  state.m_K = add(scaled(state.m_K, momentum),
                  scaled(project(state.K.structure(), bracket_K), 0.5 / static_cast<double>(d_o)));
  state.m_C = add(scaled(state.m_C, momentum),
                  scaled(project(state.C.structure(), bracket_C), 0.5 / static_cast<double>(d_i)));
  quantize_factor_state(state.m_K, p);
  quantize_factor_state(state.m_C, p);

  state.K = right_update(state.K, state.m_K, cfg.beta1, cfg.truncation_order, acc);
  state.C = right_update(state.C, state.m_C, cfg.beta1, cfg.truncation_order, acc);
  quantize_factor_state(state.K, p);
  quantize_factor_state(state.C, p);
}

void ikfac_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                          const OptimizerConfig& cfg) {
  inverse_free_precond_update(state, curv, cfg, /*adaptive_trace=*/false);
}

void singd_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                          const OptimizerConfig& cfg) {
  inverse_free_precond_update(state, curv, cfg, /*adaptive_trace=*/true);
}

void apply_direction(LayerOptState& state, const Matrix& grad, Matrix& weights,
                     const OptimizerConfig& cfg) {
  if (!has_preconditioner(state.kind)) {
    throw ContractError("apply_direction: state is not a preconditioned variant");
  }
  check_grad_shape(state, grad, weights);
  const PrecisionPolicy& p = cfg.precision;
  const Accum acc = p.accum();
  const Matrix g = p.apply(grad, kQuantizeGradients);

  Matrix direction = state.kind == OptimizerKind::Kfac
                         ? matmul(matmul(state.S_C_inv, g, acc), state.S_K_inv, acc)
                         : sandwich_precondition(state.C, g, state.K, acc);

  Matrix m = cfg.alpha2 * state.m_mu;
  axpy(m, 1.0, direction);
  if (cfg.gamma != 0.0) axpy(m, cfg.gamma, weights);
  state.m_mu = p.apply(m, kQuantizeFactorState);

  axpy(weights, -cfg.beta2, state.m_mu);
  p.apply_in_place(weights, kQuantizeParameters);
  ++state.step;
}

void adamw_step(LayerOptState& state, const Matrix& grad, Matrix& weights,
                const OptimizerConfig& cfg) {
  if (state.kind != OptimizerKind::Adamw) {
    throw ContractError("adamw_step: state is not an adamw state");
  }
  check_grad_shape(state, grad, weights);
  const PrecisionPolicy& p = cfg.precision;
  const Matrix g = p.apply(grad, kQuantizeGradients);
  const auto t = static_cast<double>(state.step + 1);

  Matrix gsq = g;
  for (double& v : gsq.values()) v *= v;
  state.m_s = p.apply(ema_update(state.m_s, gsq, cfg.beta1), kQuantizeFactorState);

  Matrix m = cfg.alpha2 * state.m_mu;
  axpy(m, 1.0 - cfg.alpha2, g);
  state.m_mu = p.apply(m, kQuantizeFactorState);

  const double bias_s = 1.0 - std::pow(1.0 - cfg.beta1, t);
  const double bias_m = 1.0 - std::pow(cfg.alpha2, t);
  Matrix update = weights;  // reused as the step buffer
  for (std::size_t i = 0; i < weights.rows(); ++i) {
    for (std::size_t j = 0; j < weights.cols(); ++j) {
      const double s = std::sqrt(state.m_s(i, j) / bias_s) + cfg.lambda;
      const double step_ij = cfg.beta2 * state.m_mu(i, j) / (s * bias_m);
      const double decay = cfg.adamw_decay_sign == AdamwDecaySign::Paper
                               ? cfg.gamma * weights(i, j)
                               : -cfg.beta2 * cfg.gamma * weights(i, j);
      update(i, j) = weights(i, j) - step_ij + decay;
    }
  }
  weights = p.apply(update, kQuantizeParameters);
  ++state.step;
}

void sgd_momentum_step(LayerOptState& state, const Matrix& grad, Matrix& weights,
                       const OptimizerConfig& cfg) {
  if (state.kind != OptimizerKind::Sgd) {
    throw ContractError("sgd_momentum_step: state is not an sgd state");
  }
  check_grad_shape(state, grad, weights);
  const PrecisionPolicy& p = cfg.precision;
  const Matrix g = p.apply(grad, kQuantizeGradients);

  Matrix m = cfg.alpha2 * state.m_mu;
  axpy(m, 1.0, g);
  if (cfg.gamma != 0.0) axpy(m, cfg.gamma, weights);
  state.m_mu = p.apply(m, kQuantizeFactorState);

  axpy(weights, -cfg.beta2, state.m_mu);
  p.apply_in_place(weights, kQuantizeParameters);
  ++state.step;
}

}  // namespace singd
