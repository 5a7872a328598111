#include "singd/verify.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <sstream>

#include "singd/curvature.hpp"
#include "singd/errors.hpp"
#include "singd/optim.hpp"
#include "singd/rng.hpp"
#include "singd/tasks.hpp"

namespace singd {

namespace {

Matrix random_spd(std::size_t d, Rng& rng) {
  const Matrix m = rng.gaussian_matrix(d, d);
  Matrix spd = matmul(transpose(m), m);
  for (double& v : spd.values()) v /= static_cast<double>(d);
  for (std::size_t i = 0; i < d; ++i) spd(i, i) += 0.1;
  return spd;
}

Matrix random_symmetric(std::size_t d, Rng& rng) {
  return symmetrize(rng.gaussian_matrix(d, d));
}

StructuredFactor random_member(const FactorStructure& s, Rng& rng) {
  StructuredFactor f = StructuredFactor::zero(s);
  for (double& v : f.coeffs()) v = rng.gaussian();
  return f;
}

LayerOptState make_state(OptimizerKind kind, const FactorStructure& sk,
                         const FactorStructure& sc) {
  LayerOptState state;
  state.kind = kind;
  state.K = StructuredFactor::identity(sk);
  state.C = StructuredFactor::identity(sc);
  state.m_K = StructuredFactor::zero(sk);
  state.m_C = StructuredFactor::zero(sc);
  state.m_mu = Matrix(sc.dim, sk.dim);
  return state;
}

PropertyResult check_le(const std::string& name, double measured, double bound) {
  std::ostringstream text;
  text << "<= " << bound;
  return {name, measured, text.str(), measured <= bound};
}

PropertyResult check_gt(const std::string& name, double measured, double bound) {
  std::ostringstream text;
  text << "> " << bound;
  return {name, measured, text.str(), measured > bound};
}

PropertyResult check_in(const std::string& name, double measured, double lo, double hi) {
  std::ostringstream text;
  text << "in [" << lo << ", " << hi << "]";
  return {name, measured, text.str(), measured >= lo && measured <= hi};
}

// --------------------------------------------------------------------------
// theorem1: the self-outer product of the multiplicatively updated factor
// tracks the damped inverse of the EMA factor with an O(beta1^2) gap, so
// halving beta1 shrinks the gap roughly fourfold.
// --------------------------------------------------------------------------

double kfac_equivalence_error(double beta1, double lambda, std::size_t steps,
                              std::size_t d, std::uint64_t seed) {
  Rng rng(seed);
  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Ikfac;
  cfg.beta1 = beta1;
  cfg.lambda = lambda;

  LayerOptState state =
      make_state(OptimizerKind::Ikfac, FactorStructure::dense(d), FactorStructure::dense(1));

  // Reference EMA factor; the damped matrix S + lambda*I starts at the
  // identity, matching (K0 K0^T)^-1 for K0 = I.
  Matrix s = (1.0 - lambda) * Matrix::identity(d);
  const Matrix g_side = Matrix::identity(1);
  for (std::size_t t = 0; t < steps; ++t) {
    // Wishart draws without a diagonal shift; at this spread the beta1^2
    // leading term of the gap dominates the higher orders at beta1 = 0.1.
    const Matrix m = rng.gaussian_matrix(d, d);
    Matrix u = matmul(transpose(m), m);
    for (double& v : u.values()) v /= static_cast<double>(d);
    ikfac_precond_update(state, {u, g_side}, cfg);
    s = ema_update(s, u, beta1);
  }
  Matrix damped = s;
  for (std::size_t i = 0; i < d; ++i) damped(i, i) += lambda;
  const Matrix k_dense = state.K.to_dense();
  const Matrix kkt = matmul(k_dense, transpose(k_dense));
  return frobenius_norm(kkt - dense_inverse(damped));
}

VerifyReport suite_theorem1() {
  VerifyReport report{"theorem1", {}};
  const double lambda = 0.01;
  const std::uint64_t seed = 1201;
  const double e_10 = kfac_equivalence_error(0.1, lambda, 20, 8, seed);
  const double e_05 = kfac_equivalence_error(0.05, lambda, 20, 8, seed);
  const double e_025 = kfac_equivalence_error(0.025, lambda, 20, 8, seed);
  report.results.push_back(check_in("halving_ratio e(0.05)/e(0.1)", e_05 / e_10, 0.15, 0.40));
  report.results.push_back(check_in("halving_ratio e(0.025)/e(0.05)", e_025 / e_05, 0.15, 0.40));
  return report;
}

// --------------------------------------------------------------------------
// invariance: rescaling the Kronecker pair as (alpha*U, G/alpha) leaves the
// adaptive-trace update invariant, while the fixed-trace update is not.
// --------------------------------------------------------------------------

double trajectory_gap(OptimizerKind kind, const FactorStructure& sk, const FactorStructure& sc,
                      double alpha, std::size_t steps, std::uint64_t seed) {
  OptimizerConfig cfg;
  cfg.kind = kind;
  cfg.beta1 = 0.05;
  cfg.beta2 = 0.1;
  cfg.alpha1 = kind == OptimizerKind::Singd ? 0.3 : 0.0;
  cfg.alpha2 = 0.5;
  cfg.lambda = 1e-2;
  cfg.gamma = 1e-2;

  auto run = [&](double scale) {
    Rng rng(seed);
    LayerOptState state = make_state(kind, sk, sc);
    Matrix w = rng.gaussian_matrix(sc.dim, sk.dim);
    std::vector<std::vector<double>> trail;
    for (std::size_t t = 0; t < steps; ++t) {
      Matrix u = random_spd(sk.dim, rng);
      Matrix g_curv = random_spd(sc.dim, rng);
      const Matrix g = rng.gaussian_matrix(sc.dim, sk.dim);
      u = scale * u;
      g_curv = (1.0 / scale) * g_curv;
      if (kind == OptimizerKind::Singd) {
        singd_precond_update(state, {u, g_curv}, cfg);
      } else {
        ikfac_precond_update(state, {u, g_curv}, cfg);
      }
      apply_direction(state, g, w, cfg);
      std::vector<double> snap;
      for (double v : state.K.coeffs()) snap.push_back(v);
      for (double v : state.C.coeffs()) snap.push_back(v);
      for (double v : w.values()) snap.push_back(v);
      trail.push_back(std::move(snap));
    }
    return trail;
  };

  const auto base = run(1.0);
  const auto scaled_run = run(alpha);
  double gap = 0.0;
  for (std::size_t t = 0; t < base.size(); ++t) {
    for (std::size_t i = 0; i < base[t].size(); ++i) {
      gap = std::max(gap, std::abs(base[t][i] - scaled_run[t][i]));
    }
  }
  return gap;
}

VerifyReport suite_invariance() {
  VerifyReport report{"invariance", {}};
  const std::size_t d_i = 6, d_o = 4;
  const std::vector<FactorStructure> k_structs = all_structures(d_i);
  const std::vector<FactorStructure> c_structs = all_structures(d_o);
  for (std::size_t s = 0; s < k_structs.size(); ++s) {
    for (double alpha : {0.1, 10.0}) {
      const double gap =
          trajectory_gap(OptimizerKind::Singd, k_structs[s], c_structs[s], alpha, 50, 77);
      std::ostringstream name;
      name << "singd " << structure_kind_name(k_structs[s].kind) << " alpha=" << alpha;
      report.results.push_back(check_le(name.str(), gap, 1e-10));
    }
  }
  for (double alpha : {0.1, 10.0}) {
    const double gap =
        trajectory_gap(OptimizerKind::Ikfac, FactorStructure::dense(d_i),
                       FactorStructure::dense(d_o), alpha, 50, 77);
    std::ostringstream name;
    name << "ikfac not invariant alpha=" << alpha;
    report.results.push_back(check_gt(name.str(), gap, 1e-3));
  }
  return report;
}

// --------------------------------------------------------------------------
// projections
// --------------------------------------------------------------------------

VerifyReport suite_projections() {
  VerifyReport report{"projections", {}};
  const std::size_t d = 6;
  std::vector<FactorStructure> structs = all_structures(d);
  // Add a ragged block split on top of the default even one.
  structs.push_back(FactorStructure::block_diagonal(d, 4));

  Rng rng(4242);
  for (const FactorStructure& s : structs) {
    double worst = 0.0;
    for (int trial = 0; trial < 100; ++trial) {
      const Matrix m = random_symmetric(d, rng);
      const Matrix got = project(s, m).to_dense();
      const Matrix want = oracle_project_dense(s, m);
      worst = std::max(worst, max_abs(got - want));
    }
    report.results.push_back(check_le("projection " + s.name(), worst, 1e-14));
  }

  // Triangular identity: proj(M) + proj(M)^T reassembles 2M.
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const Matrix m = random_symmetric(d, rng);
    const Matrix p = project(FactorStructure::tril(d), m).to_dense();
    worst = std::max(worst, max_abs(p + transpose(p) - 2.0 * m));
  }
  report.results.push_back(check_le("tril identity proj(M)+proj(M)^T = 2M", worst, 1e-12));

  // The dense projection must be the identity map, exactly.
  double dense_gap = 0.0;
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix m = random_symmetric(d, rng);
    dense_gap = std::max(dense_gap, max_abs(project(FactorStructure::dense(d), m).to_dense() - m));
  }
  report.results.push_back(check_le("dense projection is a no-op", dense_gap, 0.0));
  return report;
}

// --------------------------------------------------------------------------
// closure
// --------------------------------------------------------------------------

VerifyReport suite_closure() {
  VerifyReport report{"closure", {}};
  Rng rng(515151);
  for (std::size_t d : {std::size_t{4}, std::size_t{8}, std::size_t{16}}) {
    std::vector<FactorStructure> structs = all_structures(d);
    structs.push_back(FactorStructure::block_diagonal(d, 3));  // ragged at 4, 8 and 16
    for (const FactorStructure& s : structs) {
      // Support mask from an all-ones member.
      StructuredFactor ones = StructuredFactor::zero(s);
      for (double& v : ones.coeffs()) v = 1.0;
      const Matrix mask = ones.to_dense();

      double off_support = 0.0;
      double vs_oracle = 0.0;
      for (int trial = 0; trial < 100; ++trial) {
        const StructuredFactor a = random_member(s, rng);
        const StructuredFactor b = random_member(s, rng);
        const Matrix dense_product = matmul(a.to_dense(), b.to_dense());
        const Matrix dense_update =
            matmul(a.to_dense(), truncated_expm(b.to_dense(), -0.1, 1));
        const Matrix compact_product = multiply(a, b).to_dense();
        const Matrix compact_update = right_update(a, b, 0.1).to_dense();
        for (std::size_t i = 0; i < d; ++i) {
          for (std::size_t j = 0; j < d; ++j) {
            if (mask(i, j) == 0.0) {
              off_support = std::max({off_support, std::abs(dense_product(i, j)),
                                      std::abs(dense_update(i, j))});
            }
          }
        }
        vs_oracle = std::max(vs_oracle, max_abs(compact_product - dense_product));
        vs_oracle = std::max(vs_oracle, max_abs(compact_update - dense_update));
      }
      std::ostringstream name;
      name << "closure " << s.name();
      report.results.push_back(check_le(name.str(), off_support, 1e-14));
      std::ostringstream name2;
      name2 << "compact product matches dense " << s.name();
      report.results.push_back(check_le(name2.str(), vs_oracle, 1e-12));
    }
  }
  return report;
}

// --------------------------------------------------------------------------
// precision
// --------------------------------------------------------------------------

double sample_wide(Rng& rng) {
  const double mantissa = 1.0 + rng.uniform();
  const int exponent = static_cast<int>(rng.uniform(-320.0, 320.0));
  const double sign = rng.uniform() < 0.5 ? -1.0 : 1.0;
  return sign * std::ldexp(mantissa, exponent);
}

VerifyReport suite_precision() {
  VerifyReport report{"precision", {}};
  const Format formats[] = {Format::BF16, Format::FP16, Format::FP32};

  Rng rng(90909);
  for (Format f : formats) {
    std::size_t idempotence_violations = 0;
    std::size_t monotonicity_violations = 0;
    std::size_t oracle_mismatches = 0;
    for (int i = 0; i < 100000; ++i) {
      const double x = sample_wide(rng);
      const double q = quantize(x, f);
      if (std::bit_cast<std::uint64_t>(quantize(q, f)) != std::bit_cast<std::uint64_t>(q)) {
        ++idempotence_violations;
      }
      const double y = sample_wide(rng);
      const double lo = std::min(x, y), hi = std::max(x, y);
      if (quantize(lo, f) > quantize(hi, f)) ++monotonicity_violations;
      const double oracle = quantize_bits_oracle(x, f);
      if (std::bit_cast<std::uint64_t>(q) != std::bit_cast<std::uint64_t>(oracle)) {
        ++oracle_mismatches;
      }
    }
    // A few values the random sweep cannot hit.
    for (double x : {0.0, -0.0, std::numeric_limits<double>::infinity(),
                     -std::numeric_limits<double>::infinity(), 1.0 + 0x1.0p-8, 0.2,
                     std::numeric_limits<double>::denorm_min(), 3.4e38, 65504.0, 65520.0}) {
      if (std::bit_cast<std::uint64_t>(quantize(x, f)) !=
          std::bit_cast<std::uint64_t>(quantize_bits_oracle(x, f))) {
        ++oracle_mismatches;
      }
    }
    const std::string tag = format_name(f);
    report.results.push_back(
        check_le("idempotence violations " + tag, static_cast<double>(idempotence_violations), 0.0));
    report.results.push_back(check_le("monotonicity violations " + tag,
                                      static_cast<double>(monotonicity_violations), 0.0));
    report.results.push_back(
        check_le("bit-oracle mismatches " + tag, static_cast<double>(oracle_mismatches), 0.0));
  }

  double worst_rel = 0.0;
  for (int i = 0; i < 100000; ++i) {
    const double mantissa = 1.0 + rng.uniform();
    const int exponent = static_cast<int>(rng.uniform(-100.0, 100.0));
    const double x = std::ldexp(mantissa, exponent);
    worst_rel = std::max(worst_rel, std::abs(quantize(x, Format::BF16) - x) / std::abs(x));
  }
  report.results.push_back(check_le("bf16 relative error (normal range)", worst_rel, 0x1.0p-8));
  return report;
}

// --------------------------------------------------------------------------
// quadratic
// --------------------------------------------------------------------------

VerifyReport suite_quadratic() {
  VerifyReport report{"quadratic", {}};
  Rng rng(2718);
  const KroneckerQuadratic task = make_kronecker_quadratic(4, 4, 1e3, rng);

  OptimizerConfig cfg;
  cfg.kind = OptimizerKind::Singd;
  cfg.beta1 = 0.5;
  cfg.beta2 = 0.5;
  cfg.alpha1 = 0.0;
  cfg.alpha2 = 0.0;
  cfg.gamma = 0.0;
  cfg.lambda = 1e-8;

  LayerOptState state =
      make_state(OptimizerKind::Singd, FactorStructure::dense(4), FactorStructure::dense(4));
  Matrix w(4, 4);
  std::size_t first_converged = 0;
  bool converged = false;
  for (std::size_t t = 0; t < 200; ++t) {
    const QuadraticEval eval = kronecker_quadratic_eval(task, w);
    if (!converged && frobenius_norm(eval.grad) < 1e-6) {
      converged = true;
      first_converged = t;
    }
    singd_precond_update(state, eval.curvature, cfg);
    apply_direction(state, eval.grad, w, cfg);
  }
  const double final_grad = frobenius_norm(task.grad(w));
  if (!converged && final_grad < 1e-6) {
    converged = true;
    first_converged = 200;
  }
  report.results.push_back(check_le("steps to ||grad|| < 1e-6",
                                    converged ? static_cast<double>(first_converged) : 1e9,
                                    200.0));
  report.results.push_back(check_le("final ||grad||", final_grad, 1e-6));
  report.results.push_back(
      check_le("distance to dense-inverse solution", frobenius_norm(w - task.solve_oracle()), 1e-5));
  return report;
}

}  // namespace

// --------------------------------------------------------------------------
// Independent oracles
// --------------------------------------------------------------------------

double quantize_bits_oracle(double x, Format f) {
  int precision, emin, emax;
  switch (f) {
    case Format::FP64: return x;
    case Format::FP32: precision = 24; emin = -126; emax = 127; break;
    case Format::BF16: precision = 8; emin = -126; emax = 127; break;
    case Format::FP16: precision = 11; emin = -14; emax = 15; break;
    default: return x;
  }

  const std::uint64_t bits = std::bit_cast<std::uint64_t>(x);
  const bool negative = (bits >> 63) != 0;
  const int exp_field = static_cast<int>((bits >> 52) & 0x7FF);
  const std::uint64_t frac = bits & ((std::uint64_t{1} << 52) - 1);
  if (exp_field == 0x7FF) return x;           // inf / nan
  if (exp_field == 0 && frac == 0) return x;  // signed zero

  // Normalize to mant * 2^(E - 52) with bit 52 of mant set.
  int e_unbiased;
  std::uint64_t mant;
  if (exp_field == 0) {
    const int lead = 63 - std::countl_zero(frac);
    mant = frac << (52 - lead);
    e_unbiased = lead - 1074;
  } else {
    mant = frac | (std::uint64_t{1} << 52);
    e_unbiased = exp_field - 1023;
  }

  const int ulp_exp = std::max(e_unbiased, emin) - (precision - 1);
  const int shift = ulp_exp - e_unbiased + 52;  // low bits of mant below one ulp
  double q;
  if (shift >= 54) {
    q = 0.0;  // magnitude below half of the smallest subnormal
  } else {
    std::uint64_t integral = shift >= 53 ? 0 : (mant >> shift);
    const std::uint64_t rem = shift >= 53 ? mant : (mant & ((std::uint64_t{1} << shift) - 1));
    const std::uint64_t half = std::uint64_t{1} << (shift - 1);
    if (rem > half || (rem == half && (integral & 1))) ++integral;
    q = std::ldexp(static_cast<double>(integral), ulp_exp);
  }
  const double max_finite = std::ldexp(2.0 - std::ldexp(1.0, 1 - precision), emax);
  if (q > max_finite) q = std::numeric_limits<double>::infinity();
  return negative ? -q : q;
}

Matrix oracle_project_dense(const FactorStructure& s, const Matrix& m) {
  const std::size_t d = s.dim;
  Matrix out(d, d);
  switch (s.kind) {
    case StructureKind::Dense:
      out = m;
      break;
    case StructureKind::Diagonal:
      for (std::size_t i = 0; i < d; ++i) out(i, i) = m(i, i);
      break;
    case StructureKind::BlockDiagonal:
      for (std::size_t b0 = 0; b0 < d; b0 += s.block) {
        const std::size_t n = std::min(s.block, d - b0);
        for (std::size_t i = 0; i < n; ++i) {
          for (std::size_t j = 0; j < n; ++j) out(b0 + i, b0 + j) = m(b0 + i, b0 + j);
        }
      }
      break;
    case StructureKind::Tril:
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) out(i, j) = (i == j ? 1.0 : 2.0) * m(i, j);
      }
      break;
    case StructureKind::Triu:
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) out(i, j) = (i == j ? 1.0 : 2.0) * m(i, j);
      }
      break;
    case StructureKind::TriuToeplitz:
      for (std::size_t p = 0; p < d; ++p) {
        double band = 0.0;
        for (std::size_t t = 0; t + p < d; ++t) band += m(t, t + p);
        band /= static_cast<double>(d - p);
        for (std::size_t i = 0; i + p < d; ++i) out(i, i + p) = (p == 0 ? 1.0 : 2.0) * band;
      }
      break;
    case StructureKind::TrilToeplitz:
      for (std::size_t p = 0; p < d; ++p) {
        double band = 0.0;
        for (std::size_t t = 0; t + p < d; ++t) band += m(t + p, t);
        band /= static_cast<double>(d - p);
        for (std::size_t i = 0; i + p < d; ++i) out(i + p, i) = (p == 0 ? 1.0 : 2.0) * band;
      }
      break;
    case StructureKind::Hierarchical: {
      const std::size_t mid = d - s.d2 - s.d3;
      const std::size_t r2 = s.d2, r3 = s.d2 + mid;
      for (std::size_t i = 0; i < s.d2; ++i) {
        for (std::size_t j = 0; j < s.d2; ++j) out(i, j) = m(i, j);            // M11
        for (std::size_t j = r2; j < r3; ++j) out(i, j) = 2.0 * m(i, j);       // 2 M12
        for (std::size_t j = r3; j < d; ++j) out(i, j) = 2.0 * m(i, j);        // 2 M13
      }
      for (std::size_t i = r2; i < r3; ++i) out(i, i) = m(i, i);               // diag(M22)
      for (std::size_t i = r3; i < d; ++i) {
        for (std::size_t j = r2; j < r3; ++j) out(i, j) = 2.0 * m(i, j);       // 2 M32
        for (std::size_t j = r3; j < d; ++j) out(i, j) = m(i, j);              // M33
      }
      break;
    }
    case StructureKind::RankKTril:
      for (std::size_t i = 0; i < s.rank; ++i) {
        for (std::size_t j = 0; j < s.rank; ++j) out(i, j) = m(i, j);          // M11
        for (std::size_t j = s.rank; j < d; ++j) out(i, j) = 2.0 * m(i, j);    // 2 M12
      }
      for (std::size_t i = s.rank; i < d; ++i) out(i, i) = m(i, i);            // diag(M22)
      break;
    case StructureKind::RankKTriu:
      for (std::size_t i = 0; i < s.rank; ++i) {
        for (std::size_t j = 0; j < s.rank; ++j) out(i, j) = m(i, j);          // M11
      }
      for (std::size_t i = s.rank; i < d; ++i) {
        for (std::size_t j = 0; j < s.rank; ++j) out(i, j) = 2.0 * m(i, j);    // 2 M21
        out(i, i) = m(i, i);                                                   // diag(M22)
      }
      break;
  }
  return out;
}

bool VerifyReport::pass() const {
  for (const PropertyResult& r : results) {
    if (!r.pass) return false;
  }
  return true;
}

std::vector<std::string> verify_suite_names() {
  return {"theorem1", "invariance", "projections", "closure", "precision", "quadratic"};
}

VerifyReport run_verify_suite(const std::string& suite) {
  if (suite == "theorem1") return suite_theorem1();
  if (suite == "invariance") return suite_invariance();
  if (suite == "projections") return suite_projections();
  if (suite == "closure") return suite_closure();
  if (suite == "precision") return suite_precision();
  if (suite == "quadratic") return suite_quadratic();
  throw ConfigError("unknown verify suite '" + suite + "'");
}

void print_report(const VerifyReport& report, std::ostream& os) {
  for (const PropertyResult& r : report.results) {
    os << report.suite << ": " << r.name << " measured=" << r.measured << " bound=" << r.bound
       << (r.pass ? " PASS" : " FAIL") << "\n";
  }
  os << report.suite << ": " << (report.pass() ? "PASS" : "FAIL") << "\n";
}

}  // namespace singd
