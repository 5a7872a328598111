#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "singd/linalg.hpp"

namespace singd {

/// Sparsity classes closed under matrix multiplication and elementwise
/// linear operations, so factor updates never leave the class.
enum class StructureKind {
  Dense,
  Diagonal,
  BlockDiagonal,  // dense blocks of size k along the diagonal, ragged tail
  Tril,           // full lower triangular
  Triu,           // full upper triangular
  TrilToeplitz,   // lower triangular with constant bands
  TriuToeplitz,   // upper triangular with constant bands
  Hierarchical,   // [[A11 A12 A13],[0 D22 0],[0 A32 A33]], D22 diagonal
  RankKTril,      // [[A11 A12],[0 D22]], A11 k x k dense, D22 diagonal
  RankKTriu,      // [[A11 0],[A21 D22]], transpose mirror of RankKTril
};

std::string structure_kind_name(StructureKind kind);

/// A structure kind bound to a concrete dimension (plus its parameters).
struct FactorStructure {
  StructureKind kind = StructureKind::Dense;
  std::size_t dim = 0;
  std::size_t block = 0;  // BlockDiagonal block size k
  std::size_t rank = 0;   // RankKTril / RankKTriu k
  std::size_t d2 = 0;     // Hierarchical top block
  std::size_t d3 = 0;     // Hierarchical bottom block

  static FactorStructure dense(std::size_t d);
  static FactorStructure diagonal(std::size_t d);
  static FactorStructure block_diagonal(std::size_t d, std::size_t k);
  static FactorStructure tril(std::size_t d);
  static FactorStructure triu(std::size_t d);
  static FactorStructure tril_toeplitz(std::size_t d);
  static FactorStructure triu_toeplitz(std::size_t d);
  static FactorStructure hierarchical(std::size_t d, std::size_t d2, std::size_t d3);
  static FactorStructure rank_k_tril(std::size_t d, std::size_t k);
  static FactorStructure rank_k_triu(std::size_t d, std::size_t k);

  void validate() const;  // throws ContractError on bad parameters
  std::string name() const;

  bool operator==(const FactorStructure&) const = default;
};

/// Number of scalars stored for a factor of this structure.
std::size_t storage_count(const FactorStructure& s);

/// Structure kind plus parameters, not yet bound to a dimension. This is
/// what configs carry; the dimension comes from the layer.
struct StructureSpec {
  StructureKind kind = StructureKind::Dense;
  std::size_t block = 2;
  std::size_t rank = 1;
  std::size_t d2 = 1;
  std::size_t d3 = 1;

  /// Parses e.g. "diagonal", "block_diagonal(k=2)", "hierarchical(d2=1,d3=2)".
  static StructureSpec parse(std::string_view text);
  std::string name() const;

  FactorStructure bind(std::size_t dim) const;

  bool operator==(const StructureSpec&) const = default;
};

/// A Kronecker factor held in compact per-class storage; only structural
/// nonzeros are stored. Value type, cheap to copy at desk scale.
class StructuredFactor {
 public:
  StructuredFactor() = default;
  StructuredFactor(FactorStructure structure, std::vector<double> coeffs);

  static StructuredFactor identity(const FactorStructure& s);
  static StructuredFactor zero(const FactorStructure& s);

  const FactorStructure& structure() const { return structure_; }
  std::size_t dim() const { return structure_.dim; }
  std::span<double> coeffs() { return coeffs_; }
  std::span<const double> coeffs() const { return coeffs_; }

  Matrix to_dense() const;
  bool finite() const;

 private:
  FactorStructure structure_;
  std::vector<double> coeffs_;
};

/// Subspace projection: maps a dense symmetric matrix into the structure,
/// with the off-diagonal weighting of each class baked into the stored
/// coefficients (so to_dense(project(...)) is the projected matrix itself).
/// Requires m symmetric within 1e-8 relative.
StructuredFactor project(const FactorStructure& s, const Matrix& m);

/// Structure-closed product a*b, computed in compact storage.
StructuredFactor multiply(const StructuredFactor& a, const StructuredFactor& b,
                          Accum accum = Accum::FP64);

/// k * (I - beta1*m) for order 1; order 2 appends + (beta1^2/2) m^2 inside
/// the parenthesis (truncated exponential of -beta1*m). Stays in structure.
StructuredFactor right_update(const StructuredFactor& k, const StructuredFactor& m,
                              double beta1, int order = 1, Accum accum = Accum::FP64);

/// Dense symmetric K^T U K, exploiting the structure of K in the products.
Matrix congruence(const StructuredFactor& k, const Matrix& u, Accum accum = Accum::FP64);

/// Dense K^T K.
Matrix gram(const StructuredFactor& k, Accum accum = Accum::FP64);

/// Tr(K^T K): sum of squares of all structural entries (band values count
/// once per occupied position).
double gram_trace(const StructuredFactor& k);

/// C C^T G K K^T for a d_o x d_i gradient matrix G, as four structured
/// multiplications.
Matrix sandwich_precondition(const StructuredFactor& c, const Matrix& g,
                             const StructuredFactor& k, Accum accum = Accum::FP64);

/// Same-structure elementwise ops.
StructuredFactor add(const StructuredFactor& a, const StructuredFactor& b);
StructuredFactor scaled(const StructuredFactor& a, double s);

/// All kinds at a given dimension, for parameter sweeps in tests and the
/// verification suites. Block size 2, rank min(2, d), hierarchical splits
/// d2 = d3 = max(1, d/4) when they fit.
std::vector<FactorStructure> all_structures(std::size_t d);

}  // namespace singd
