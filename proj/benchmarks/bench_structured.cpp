#include <benchmark/benchmark.h>

#include "singd/rng.hpp"
#include "singd/structured.hpp"

// Scaling of the structured-factor operations with dimension. Compare the
// per-doubling runtime ratios of the sparse classes against the dense class:
// the factor-side multiplications scale with the stored coefficients, the
// congruence output is dense either way.

namespace {

using singd::FactorStructure;
using singd::StructureKind;

FactorStructure make_structure(StructureKind kind, std::size_t d) {
  switch (kind) {
    case StructureKind::Diagonal: return FactorStructure::diagonal(d);
    case StructureKind::BlockDiagonal: return FactorStructure::block_diagonal(d, 8);
    case StructureKind::Tril: return FactorStructure::tril(d);
    case StructureKind::TriuToeplitz: return FactorStructure::triu_toeplitz(d);
    case StructureKind::Hierarchical: return FactorStructure::hierarchical(d, d / 8, d / 8);
    case StructureKind::RankKTril: return FactorStructure::rank_k_tril(d, 4);
    default: return FactorStructure::dense(d);
  }
}

void bench_congruence(benchmark::State& state, StructureKind kind) {
  const auto d = static_cast<std::size_t>(state.range(0));
  singd::Rng rng(11);
  const FactorStructure s = make_structure(kind, d);
  singd::StructuredFactor k = singd::StructuredFactor::identity(s);
  for (double& v : k.coeffs()) v += 0.01 * rng.gaussian();
  const singd::Matrix u = singd::symmetrize(rng.gaussian_matrix(d, d));
  for (auto _ : state) {
    benchmark::DoNotOptimize(singd::congruence(k, u));
  }
}

void bench_right_update(benchmark::State& state, StructureKind kind) {
  const auto d = static_cast<std::size_t>(state.range(0));
  singd::Rng rng(12);
  const FactorStructure s = make_structure(kind, d);
  singd::StructuredFactor k = singd::StructuredFactor::identity(s);
  singd::StructuredFactor m = singd::StructuredFactor::zero(s);
  for (double& v : m.coeffs()) v = rng.gaussian();
  for (auto _ : state) {
    benchmark::DoNotOptimize(singd::right_update(k, m, 0.01));
  }
}

void bench_sandwich(benchmark::State& state, StructureKind kind) {
  const auto d = static_cast<std::size_t>(state.range(0));
  singd::Rng rng(13);
  const FactorStructure s = make_structure(kind, d);
  singd::StructuredFactor k = singd::StructuredFactor::identity(s);
  singd::StructuredFactor c = singd::StructuredFactor::identity(s);
  const singd::Matrix g = rng.gaussian_matrix(d, d);
  for (auto _ : state) {
    benchmark::DoNotOptimize(singd::sandwich_precondition(c, g, k));
  }
}

}  // namespace

BENCHMARK_CAPTURE(bench_congruence, dense, StructureKind::Dense)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_congruence, diagonal, StructureKind::Diagonal)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_congruence, block_diagonal, StructureKind::BlockDiagonal)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_congruence, triu_toeplitz, StructureKind::TriuToeplitz)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_congruence, rank_k_tril, StructureKind::RankKTril)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_congruence, hierarchical, StructureKind::Hierarchical)->RangeMultiplier(2)->Range(64, 512);

BENCHMARK_CAPTURE(bench_right_update, dense, StructureKind::Dense)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_right_update, diagonal, StructureKind::Diagonal)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_right_update, block_diagonal, StructureKind::BlockDiagonal)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_right_update, triu_toeplitz, StructureKind::TriuToeplitz)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_right_update, rank_k_tril, StructureKind::RankKTril)->RangeMultiplier(2)->Range(64, 512);

BENCHMARK_CAPTURE(bench_sandwich, dense, StructureKind::Dense)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_sandwich, diagonal, StructureKind::Diagonal)->RangeMultiplier(2)->Range(64, 512);
BENCHMARK_CAPTURE(bench_sandwich, block_diagonal, StructureKind::BlockDiagonal)->RangeMultiplier(2)->Range(64, 512);

BENCHMARK_MAIN();
