#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "singd/curvature.hpp"
#include "singd/linalg.hpp"
#include "singd/precision.hpp"
#include "singd/structured.hpp"

namespace singd {

enum class OptimizerKind { Kfac, Ikfac, Singd, Adamw, Sgd };

OptimizerKind parse_optimizer_name(const std::string& name);
std::string optimizer_name(OptimizerKind kind);

/// Whether the optimizer keeps a Kronecker preconditioner that is refreshed
/// every T steps (as opposed to the elementwise baselines).
bool has_preconditioner(OptimizerKind kind);

enum class AdamwDecaySign {
  Paper,      // mu <- mu - beta2*M + gamma*mu
  Decoupled,  // mu <- mu - beta2*(M + gamma*mu)
};

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::Singd;
  double beta1 = 0.1;   // preconditioner learning rate / EMA weight
  double beta2 = 0.05;  // parameter learning rate
  double alpha1 = 0.0;  // Riemannian momentum on m_K, m_C (SINGD only)
  double alpha2 = 0.0;  // parameter momentum
  double lambda = 1e-8; // damping
  double gamma = 0.0;   // weight decay
  std::size_t interval = 1;  // T: preconditioner update period in steps
  StructureSpec structure_K{};
  StructureSpec structure_C{};
  int truncation_order = 1;  // matrix exponential truncation, 1 or 2
  AdamwDecaySign adamw_decay_sign = AdamwDecaySign::Paper;
  PrecisionPolicy precision{};

  void validate() const;
};

struct StepEvent {
  std::uint64_t step;
  std::string what;
};

/// Per-layer optimizer state for a d_o x d_i weight matrix. Members that do
/// not apply to the configured variant stay empty. Owned value; distinct
/// layers may be updated concurrently, a single layer must be serialized.
struct LayerOptState {
  OptimizerKind kind = OptimizerKind::Singd;

  // KFAC reference path.
  Matrix S_K, S_C;          // EMA of U, G
  Matrix S_K_inv, S_C_inv;  // cached damped inverses

  // Inverse-free path (IKFAC / SINGD).
  StructuredFactor K, C;
  StructuredFactor m_K, m_C;

  // AdamW second moment.
  Matrix m_s;

  Matrix m_mu;  // update-direction momentum, d_o x d_i
  std::uint64_t step = 0;

  std::vector<StepEvent> events;  // recorded singularity / non-finite events
  double precond_residual = 0.0;  // max over updates of ||(S+lambda I) S^-1 - I||_F

  static LayerOptState init(std::size_t d_out, std::size_t d_in, const OptimizerConfig& cfg);

  /// sqrt(Tr(K^T K)) resp. ||S_K||_F; 0 when the variant keeps no factor.
  double factor_norm_K() const;
  double factor_norm_C() const;
};

/// KFAC preconditioner refresh: EMA the Kronecker factors, then invert the
/// damped factors and cache the inverses. Call on steps with t mod T == 0.
/// Records and rethrows SingularError when a damped factor is singular
/// within tolerance (the expected low-precision failure mode).
void kfac_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                         const OptimizerConfig& cfg);

/// Shared inverse-free preconditioner refresh. With adaptive_trace the
/// curvature and damping terms are weighted by Tr(H_C), Tr(C^T C) (and
/// mirrored for C): the scale-invariant update. Without it those traces are
/// replaced by Tr(I), which makes K K^T track the damped inverse EMA factor
/// to first order in beta1.
void inverse_free_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                                 const OptimizerConfig& cfg, bool adaptive_trace);

/// The fixed-trace special case of the inverse-free update (alpha1 forced
/// to 0). Structured factors give the projected (SIKFAC) variant.
void ikfac_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                          const OptimizerConfig& cfg);

/// The adaptive-trace update; with dense factors this is the unstructured
/// method, with structured factors the projected one.
void singd_precond_update(LayerOptState& state, const KroneckerCurvature& curv,
                          const OptimizerConfig& cfg);

/// Momentum + preconditioned gradient + coupled weight decay, then the
/// parameter step. Runs every step. For KFAC the direction is
/// S_C^-1 G S_K^-1, for the inverse-free variants C C^T G K K^T.
void apply_direction(LayerOptState& state, const Matrix& grad, Matrix& weights,
                     const OptimizerConfig& cfg);

/// AdamW exactly as printed in the reference pseudocode, including the
/// decay sign (see AdamwDecaySign).
void adamw_step(LayerOptState& state, const Matrix& grad, Matrix& weights,
                const OptimizerConfig& cfg);

/// m <- alpha2*m + grad + gamma*weights; weights <- weights - beta2*m.
void sgd_momentum_step(LayerOptState& state, const Matrix& grad, Matrix& weights,
                       const OptimizerConfig& cfg);

}  // namespace singd
