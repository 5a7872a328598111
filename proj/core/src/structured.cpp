#include "singd/structured.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "singd/errors.hpp"

namespace singd {

namespace {

// ---------------------------------------------------------------------------
// Block layouts. Dense, Diagonal, BlockDiagonal, Hierarchical and RankK*
// are unions of dense or diagonal sub-blocks over a shared partition of
// [0, d); that makes identity/to_dense/project/multiply generic for them.
// Tril/Triu (packed triangles) and the Toeplitz classes (band vectors)
// have dedicated code paths.
// ---------------------------------------------------------------------------

struct Block {
  std::size_t r0, c0, nr, nc;
  bool diag;        // diagonal block: nr == nc, stores nr coefficients
  std::size_t off;  // offset into the coefficient vector

  std::size_t count() const { return diag ? nr : nr * nc; }
};

bool is_block_kind(StructureKind k) {
  switch (k) {
    case StructureKind::Dense:
    case StructureKind::Diagonal:
    case StructureKind::BlockDiagonal:
    case StructureKind::Hierarchical:
    case StructureKind::RankKTril:
    case StructureKind::RankKTriu:
      return true;
    default:
      return false;
  }
}

bool is_toeplitz_kind(StructureKind k) {
  return k == StructureKind::TrilToeplitz || k == StructureKind::TriuToeplitz;
}

std::vector<Block> block_layout(const FactorStructure& s) {
  std::vector<Block> blocks;
  auto push = [&blocks](std::size_t r0, std::size_t c0, std::size_t nr,
                        std::size_t nc, bool diag) {
    if (nr == 0 || nc == 0) return;
    const std::size_t off = blocks.empty() ? 0 : blocks.back().off + blocks.back().count();
    blocks.push_back(Block{r0, c0, nr, nc, diag, off});
  };

  const std::size_t d = s.dim;
  switch (s.kind) {
    case StructureKind::Dense:
      push(0, 0, d, d, false);
      break;
    case StructureKind::Diagonal:
      push(0, 0, d, d, true);
      break;
    case StructureKind::BlockDiagonal:
      for (std::size_t r0 = 0; r0 < d; r0 += s.block) {
        const std::size_t n = std::min(s.block, d - r0);
        push(r0, r0, n, n, false);
      }
      break;
    case StructureKind::Hierarchical: {
      const std::size_t mid = d - s.d2 - s.d3;
      push(0, 0, s.d2, s.d2, false);                          // A11
      push(0, s.d2, s.d2, mid, false);                        // A12
      push(0, s.d2 + mid, s.d2, s.d3, false);                 // A13
      push(s.d2, s.d2, mid, mid, true);                       // D22
      push(s.d2 + mid, s.d2, s.d3, mid, false);               // A32
      push(s.d2 + mid, s.d2 + mid, s.d3, s.d3, false);        // A33
      break;
    }
    case StructureKind::RankKTril:
      push(0, 0, s.rank, s.rank, false);                      // A11
      push(0, s.rank, s.rank, d - s.rank, false);             // A12
      push(s.rank, s.rank, d - s.rank, d - s.rank, true);     // D22
      break;
    case StructureKind::RankKTriu:
      push(0, 0, s.rank, s.rank, false);                      // A11
      push(s.rank, 0, d - s.rank, s.rank, false);             // A21
      push(s.rank, s.rank, d - s.rank, d - s.rank, true);     // D22
      break;
    default:
      throw std::logic_error("block_layout: not a block kind");
  }
  return blocks;
}

// Packed-triangle offsets.
std::size_t tril_offset(std::size_t i, std::size_t j) { return i * (i + 1) / 2 + j; }
std::size_t triu_offset(std::size_t d, std::size_t i, std::size_t j) {
  return i * d - i * (i - 1) / 2 + (j - i);
}

void check_same_structure(const StructuredFactor& a, const StructuredFactor& b,
                          const char* op) {
  if (!(a.structure() == b.structure())) {
    throw ContractError(std::string(op) + ": structure mismatch (" +
                        a.structure().name() + " vs " + b.structure().name() + ")");
  }
}

// ---------------------------------------------------------------------------
// Multiplication kernels, templated on the accumulator type.
// ---------------------------------------------------------------------------

template <typename AccT>
std::vector<AccT> multiply_block_coeffs(const FactorStructure& s,
                                        std::span<const double> a,
                                        std::span<const double> b) {
  const std::vector<Block> layout = block_layout(s);
  std::vector<AccT> out(storage_count(s), AccT(0));

  auto find_target = [&layout](const Block& pa, const Block& pb) -> const Block& {
    for (const Block& ob : layout) {
      if (ob.r0 == pa.r0 && ob.nr == pa.nr && ob.c0 == pb.c0 && ob.nc == pb.nc) return ob;
    }
    throw std::logic_error("structured multiply: class not closed");
  };

  for (const Block& pa : layout) {
    for (const Block& pb : layout) {
      if (pa.c0 != pb.r0 || pa.nc != pb.nr) continue;  // ranges are a partition
      const Block& ob = find_target(pa, pb);
      if (ob.diag) {
        if (!pa.diag || !pb.diag) {
          throw std::logic_error("structured multiply: dense mass on diagonal block");
        }
        for (std::size_t i = 0; i < ob.nr; ++i) {
          out[ob.off + i] += static_cast<AccT>(a[pa.off + i]) * static_cast<AccT>(b[pb.off + i]);
        }
      } else if (pa.diag) {  // diag * dense: scale rows
        for (std::size_t i = 0; i < ob.nr; ++i) {
          const AccT f = static_cast<AccT>(a[pa.off + i]);
          for (std::size_t j = 0; j < ob.nc; ++j) {
            out[ob.off + i * ob.nc + j] += f * static_cast<AccT>(b[pb.off + i * pb.nc + j]);
          }
        }
      } else if (pb.diag) {  // dense * diag: scale columns
        for (std::size_t i = 0; i < ob.nr; ++i) {
          for (std::size_t j = 0; j < ob.nc; ++j) {
            out[ob.off + i * ob.nc + j] += static_cast<AccT>(a[pa.off + i * pa.nc + j]) *
                                           static_cast<AccT>(b[pb.off + j]);
          }
        }
      } else {
        for (std::size_t i = 0; i < pa.nr; ++i) {
          for (std::size_t j = 0; j < pb.nc; ++j) {
            AccT acc = 0;
            for (std::size_t t = 0; t < pa.nc; ++t) {
              acc += static_cast<AccT>(a[pa.off + i * pa.nc + t]) *
                     static_cast<AccT>(b[pb.off + t * pb.nc + j]);
            }
            out[ob.off + i * ob.nc + j] += acc;
          }
        }
      }
    }
  }
  return out;
}

template <typename AccT>
std::vector<AccT> multiply_tri_coeffs(const FactorStructure& s,
                                      std::span<const double> a,
                                      std::span<const double> b) {
  const std::size_t d = s.dim;
  std::vector<AccT> out(storage_count(s), AccT(0));
  if (s.kind == StructureKind::Tril) {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j <= i; ++j) {
        AccT acc = 0;
        for (std::size_t t = j; t <= i; ++t) {
          acc += static_cast<AccT>(a[tril_offset(i, t)]) * static_cast<AccT>(b[tril_offset(t, j)]);
        }
        out[tril_offset(i, j)] = acc;
      }
    }
  } else {
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = i; j < d; ++j) {
        AccT acc = 0;
        for (std::size_t t = i; t <= j; ++t) {
          acc += static_cast<AccT>(a[triu_offset(d, i, t)]) *
                 static_cast<AccT>(b[triu_offset(d, t, j)]);
        }
        out[triu_offset(d, i, j)] = acc;
      }
    }
  }
  return out;
}

// Triangular Toeplitz matrices multiply as truncated band convolutions.
template <typename AccT>
std::vector<AccT> multiply_band_coeffs(const FactorStructure& s,
                                       std::span<const double> a,
                                       std::span<const double> b) {
  const std::size_t d = s.dim;
  std::vector<AccT> out(d, AccT(0));
  for (std::size_t j = 0; j < d; ++j) {
    AccT acc = 0;
    for (std::size_t p = 0; p <= j; ++p) {
      acc += static_cast<AccT>(a[p]) * static_cast<AccT>(b[j - p]);
    }
    out[j] = acc;
  }
  return out;
}

template <typename AccT>
StructuredFactor multiply_impl(const StructuredFactor& a, const StructuredFactor& b) {
  const FactorStructure& s = a.structure();
  std::vector<AccT> buf;
  if (is_block_kind(s.kind)) {
    buf = multiply_block_coeffs<AccT>(s, a.coeffs(), b.coeffs());
  } else if (is_toeplitz_kind(s.kind)) {
    buf = multiply_band_coeffs<AccT>(s, a.coeffs(), b.coeffs());
  } else {
    buf = multiply_tri_coeffs<AccT>(s, a.coeffs(), b.coeffs());
  }
  std::vector<double> coeffs(buf.begin(), buf.end());
  return StructuredFactor(s, std::move(coeffs));
}

// K * X (transposed = false) or K^T * X (transposed = true), X dense.
template <typename AccT>
Matrix left_mul_impl(const StructuredFactor& k, const Matrix& x, bool transposed) {
  const FactorStructure& s = k.structure();
  const std::size_t d = s.dim;
  if (x.rows() != d) {
    throw ShapeError("structured left multiply: factor dim " + std::to_string(d) +
                     " vs matrix rows " + std::to_string(x.rows()));
  }
  const std::size_t cols = x.cols();
  std::vector<AccT> buf(d * cols, AccT(0));
  std::span<const double> a = k.coeffs();

  if (is_block_kind(s.kind)) {
    for (const Block& blk : block_layout(s)) {
      const std::size_t out0 = transposed ? blk.c0 : blk.r0;
      const std::size_t in0 = transposed ? blk.r0 : blk.c0;
      if (blk.diag) {
        for (std::size_t i = 0; i < blk.nr; ++i) {
          const AccT f = static_cast<AccT>(a[blk.off + i]);
          for (std::size_t j = 0; j < cols; ++j) {
            buf[(out0 + i) * cols + j] += f * static_cast<AccT>(x(in0 + i, j));
          }
        }
      } else {
        const std::size_t out_n = transposed ? blk.nc : blk.nr;
        const std::size_t in_n = transposed ? blk.nr : blk.nc;
        for (std::size_t i = 0; i < out_n; ++i) {
          for (std::size_t t = 0; t < in_n; ++t) {
            const AccT f = static_cast<AccT>(transposed ? a[blk.off + t * blk.nc + i]
                                                        : a[blk.off + i * blk.nc + t]);
            if (f == AccT(0)) continue;
            for (std::size_t j = 0; j < cols; ++j) {
              buf[(out0 + i) * cols + j] += f * static_cast<AccT>(x(in0 + t, j));
            }
          }
        }
      }
    }
  } else if (s.kind == StructureKind::Tril || s.kind == StructureKind::Triu) {
    const bool lower = (s.kind == StructureKind::Tril);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t t = 0; t < d; ++t) {
        // Entry of K (or K^T) at (i, t).
        const std::size_t r = transposed ? t : i;
        const std::size_t c = transposed ? i : t;
        const bool inside = lower ? (c <= r) : (c >= r);
        if (!inside) continue;
        const double kv = lower ? a[tril_offset(r, c)] : a[triu_offset(d, r, c)];
        const AccT f = static_cast<AccT>(kv);
        if (f == AccT(0)) continue;
        for (std::size_t j = 0; j < cols; ++j) {
          buf[i * cols + j] += f * static_cast<AccT>(x(t, j));
        }
      }
    }
  } else {
    const bool upper_bands = (s.kind == StructureKind::TriuToeplitz);
    // TriuToeplitz holds K(i, i+p) = band[p]; TrilToeplitz holds K(i+p, i).
    for (std::size_t p = 0; p < d; ++p) {
      const AccT f = static_cast<AccT>(a[p]);
      if (f == AccT(0)) continue;
      // Row shift of X contributing under this band: out(i) += f * x(i + shift)
      // where shift depends on orientation and transposition.
      const bool up = (upper_bands != transposed);  // true: out(i) += f*x(i+p)
      for (std::size_t i = 0; i + p < d; ++i) {
        const std::size_t oi = up ? i : i + p;
        const std::size_t xi = up ? i + p : i;
        for (std::size_t j = 0; j < cols; ++j) {
          buf[oi * cols + j] += f * static_cast<AccT>(x(xi, j));
        }
      }
    }
  }

  Matrix out(d, cols);
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = static_cast<double>(buf[i]);
  return out;
}

// X * K (transposed = false) or X * K^T (transposed = true), X dense.
// Row-major friendly: every inner loop walks a contiguous slice of X, the
// output row, or the packed coefficients.
template <typename AccT>
Matrix right_mul_impl(const Matrix& x, const StructuredFactor& k, bool transposed) {
  const FactorStructure& s = k.structure();
  const std::size_t d = s.dim;
  if (x.cols() != d) {
    throw ShapeError("structured right multiply: factor dim " + std::to_string(d) +
                     " vs matrix cols " + std::to_string(x.cols()));
  }
  const std::size_t rows = x.rows();
  std::vector<AccT> buf(rows * d, AccT(0));
  std::span<const double> a = k.coeffs();

  if (is_block_kind(s.kind)) {
    const std::vector<Block> layout = block_layout(s);
    for (std::size_t i = 0; i < rows; ++i) {
      AccT* out_row = buf.data() + i * d;
      for (const Block& blk : layout) {
        if (blk.diag) {
          const std::size_t in0 = transposed ? blk.c0 : blk.r0;
          const std::size_t out0 = transposed ? blk.r0 : blk.c0;
          for (std::size_t t = 0; t < blk.nr; ++t) {
            out_row[out0 + t] += static_cast<AccT>(x(i, in0 + t)) * static_cast<AccT>(a[blk.off + t]);
          }
        } else if (!transposed) {
          // out[:, c0+j] += sum_t x[:, r0+t] * B(t, j)
          for (std::size_t t = 0; t < blk.nr; ++t) {
            const AccT xv = static_cast<AccT>(x(i, blk.r0 + t));
            if (xv == AccT(0)) continue;
            const double* brow = a.data() + blk.off + t * blk.nc;
            for (std::size_t j = 0; j < blk.nc; ++j) {
              out_row[blk.c0 + j] += xv * static_cast<AccT>(brow[j]);
            }
          }
        } else {
          // out[:, r0+t] += sum_j x[:, c0+j] * B(t, j)
          for (std::size_t t = 0; t < blk.nr; ++t) {
            const double* brow = a.data() + blk.off + t * blk.nc;
            AccT acc = 0;
            for (std::size_t j = 0; j < blk.nc; ++j) {
              acc += static_cast<AccT>(x(i, blk.c0 + j)) * static_cast<AccT>(brow[j]);
            }
            out_row[blk.r0 + t] += acc;
          }
        }
      }
    }
  } else if (s.kind == StructureKind::Tril || s.kind == StructureKind::Triu) {
    const bool lower = (s.kind == StructureKind::Tril);
    for (std::size_t i = 0; i < rows; ++i) {
      AccT* out_row = buf.data() + i * d;
      for (std::size_t t = 0; t < d; ++t) {
        // Packed row t of K covers columns [0, t] (tril) or [t, d) (triu).
        const std::size_t j0 = lower ? 0 : t;
        const std::size_t j1 = lower ? t + 1 : d;
        const double* krow =
            a.data() + (lower ? tril_offset(t, 0) : triu_offset(d, t, t));
        if (!transposed) {
          const AccT xv = static_cast<AccT>(x(i, t));
          if (xv == AccT(0)) continue;
          for (std::size_t j = j0; j < j1; ++j) {
            out_row[j] += xv * static_cast<AccT>(krow[j - j0]);
          }
        } else {
          AccT acc = 0;
          for (std::size_t j = j0; j < j1; ++j) {
            acc += static_cast<AccT>(x(i, j)) * static_cast<AccT>(krow[j - j0]);
          }
          out_row[t] += acc;
        }
      }
    }
  } else {
    const bool upper_bands = (s.kind == StructureKind::TriuToeplitz);
    for (std::size_t i = 0; i < rows; ++i) {
      AccT* out_row = buf.data() + i * d;
      for (std::size_t p = 0; p < d; ++p) {
        const AccT f = static_cast<AccT>(a[p]);
        if (f == AccT(0)) continue;
        // TriuToeplitz holds K(t, t+p); X*K shifts columns right by p, X*K^T
        // shifts left. TrilToeplitz mirrors.
        const bool shift_right = (upper_bands != transposed);
        if (shift_right) {
          for (std::size_t j = 0; j + p < d; ++j) {
            out_row[j + p] += f * static_cast<AccT>(x(i, j));
          }
        } else {
          for (std::size_t j = 0; j + p < d; ++j) {
            out_row[j] += f * static_cast<AccT>(x(i, j + p));
          }
        }
      }
    }
  }

  Matrix out(rows, d);
  auto ov = out.values();
  for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = static_cast<double>(buf[i]);
  return out;
}

Matrix left_mul(const StructuredFactor& k, const Matrix& x, Accum accum) {
  return accum == Accum::FP32 ? left_mul_impl<float>(k, x, false)
                              : left_mul_impl<double>(k, x, false);
}

Matrix left_tmul(const StructuredFactor& k, const Matrix& x, Accum accum) {
  return accum == Accum::FP32 ? left_mul_impl<float>(k, x, true)
                              : left_mul_impl<double>(k, x, true);
}

Matrix right_mul(const Matrix& x, const StructuredFactor& k, Accum accum) {
  return accum == Accum::FP32 ? right_mul_impl<float>(x, k, false)
                              : right_mul_impl<double>(x, k, false);
}

Matrix right_tmul(const Matrix& x, const StructuredFactor& k, Accum accum) {
  return accum == Accum::FP32 ? right_mul_impl<float>(x, k, true)
                              : right_mul_impl<double>(x, k, true);
}

}  // namespace

// ---------------------------------------------------------------------------
// FactorStructure
// ---------------------------------------------------------------------------

std::string structure_kind_name(StructureKind kind) {
  switch (kind) {
    case StructureKind::Dense: return "dense";
    case StructureKind::Diagonal: return "diagonal";
    case StructureKind::BlockDiagonal: return "block_diagonal";
    case StructureKind::Tril: return "tril";
    case StructureKind::Triu: return "triu";
    case StructureKind::TrilToeplitz: return "tril_toeplitz";
    case StructureKind::TriuToeplitz: return "triu_toeplitz";
    case StructureKind::Hierarchical: return "hierarchical";
    case StructureKind::RankKTril: return "rank_k_tril";
    case StructureKind::RankKTriu: return "rank_k_triu";
  }
  return "?";
}

FactorStructure FactorStructure::dense(std::size_t d) { return {StructureKind::Dense, d}; }
FactorStructure FactorStructure::diagonal(std::size_t d) { return {StructureKind::Diagonal, d}; }
FactorStructure FactorStructure::block_diagonal(std::size_t d, std::size_t k) {
  return {StructureKind::BlockDiagonal, d, k};
}
FactorStructure FactorStructure::tril(std::size_t d) { return {StructureKind::Tril, d}; }
FactorStructure FactorStructure::triu(std::size_t d) { return {StructureKind::Triu, d}; }
FactorStructure FactorStructure::tril_toeplitz(std::size_t d) {
  return {StructureKind::TrilToeplitz, d};
}
FactorStructure FactorStructure::triu_toeplitz(std::size_t d) {
  return {StructureKind::TriuToeplitz, d};
}
FactorStructure FactorStructure::hierarchical(std::size_t d, std::size_t d2, std::size_t d3) {
  FactorStructure s{StructureKind::Hierarchical, d};
  s.d2 = d2;
  s.d3 = d3;
  return s;
}
FactorStructure FactorStructure::rank_k_tril(std::size_t d, std::size_t k) {
  FactorStructure s{StructureKind::RankKTril, d};
  s.rank = k;
  return s;
}
FactorStructure FactorStructure::rank_k_triu(std::size_t d, std::size_t k) {
  FactorStructure s{StructureKind::RankKTriu, d};
  s.rank = k;
  return s;
}

void FactorStructure::validate() const {
  if (dim == 0) throw ContractError("structure: dim must be positive");
  switch (kind) {
    case StructureKind::BlockDiagonal:
      if (block < 1 || block > dim) {
        throw ContractError("block_diagonal: need 1 <= k <= d, got k=" +
                            std::to_string(block) + ", d=" + std::to_string(dim));
      }
      break;
    case StructureKind::Hierarchical:
      if (d2 + d3 > dim) {
        throw ContractError("hierarchical: need d2 + d3 <= d, got d2=" +
                            std::to_string(d2) + ", d3=" + std::to_string(d3) +
                            ", d=" + std::to_string(dim));
      }
      break;
    case StructureKind::RankKTril:
    case StructureKind::RankKTriu:
      if (rank > dim) {
        throw ContractError("rank_k: need k <= d, got k=" + std::to_string(rank) +
                            ", d=" + std::to_string(dim));
      }
      break;
    default:
      break;
  }
}

std::string FactorStructure::name() const {
  std::string n = structure_kind_name(kind);
  if (kind == StructureKind::BlockDiagonal) n += "(k=" + std::to_string(block) + ")";
  if (kind == StructureKind::RankKTril || kind == StructureKind::RankKTriu) {
    n += "(k=" + std::to_string(rank) + ")";
  }
  if (kind == StructureKind::Hierarchical) {
    n += "(d2=" + std::to_string(d2) + ",d3=" + std::to_string(d3) + ")";
  }
  return n + "[d=" + std::to_string(dim) + "]";
}

std::size_t storage_count(const FactorStructure& s) {
  const std::size_t d = s.dim;
  switch (s.kind) {
    case StructureKind::Tril:
    case StructureKind::Triu:
      return d * (d + 1) / 2;
    case StructureKind::TrilToeplitz:
    case StructureKind::TriuToeplitz:
      return d;
    default: {
      std::size_t n = 0;
      for (const Block& b : block_layout(s)) n += b.count();
      return n;
    }
  }
}

// ---------------------------------------------------------------------------
// StructureSpec
// ---------------------------------------------------------------------------

StructureSpec StructureSpec::parse(std::string_view text) {
  auto fail = [&] {
    throw ConfigError("bad structure '" + std::string(text) + "'");
  };
  std::string_view name = text;
  std::string_view params;
  if (auto open = text.find('('); open != std::string_view::npos) {
    if (text.back() != ')') fail();
    name = text.substr(0, open);
    params = text.substr(open + 1, text.size() - open - 2);
  }

  StructureSpec spec;
  if (name == "dense") spec.kind = StructureKind::Dense;
  else if (name == "diagonal") spec.kind = StructureKind::Diagonal;
  else if (name == "block_diagonal") spec.kind = StructureKind::BlockDiagonal;
  else if (name == "tril") spec.kind = StructureKind::Tril;
  else if (name == "triu") spec.kind = StructureKind::Triu;
  else if (name == "tril_toeplitz") spec.kind = StructureKind::TrilToeplitz;
  else if (name == "triu_toeplitz") spec.kind = StructureKind::TriuToeplitz;
  else if (name == "hierarchical") spec.kind = StructureKind::Hierarchical;
  else if (name == "rank_k_tril") spec.kind = StructureKind::RankKTril;
  else if (name == "rank_k_triu") spec.kind = StructureKind::RankKTriu;
  else fail();

  while (!params.empty()) {
    const auto comma = params.find(',');
    std::string_view item = params.substr(0, comma);
    params = comma == std::string_view::npos ? std::string_view{} : params.substr(comma + 1);
    const auto eq = item.find('=');
    if (eq == std::string_view::npos) fail();
    const std::string key(item.substr(0, eq));
    std::size_t value = 0;
    try {
      value = std::stoul(std::string(item.substr(eq + 1)));
    } catch (const std::exception&) {
      fail();
    }
    if (key == "k" && spec.kind == StructureKind::BlockDiagonal) spec.block = value;
    else if (key == "k" && (spec.kind == StructureKind::RankKTril ||
                            spec.kind == StructureKind::RankKTriu)) spec.rank = value;
    else if (key == "d2" && spec.kind == StructureKind::Hierarchical) spec.d2 = value;
    else if (key == "d3" && spec.kind == StructureKind::Hierarchical) spec.d3 = value;
    else fail();
  }
  return spec;
}

std::string StructureSpec::name() const {
  std::string n = structure_kind_name(kind);
  if (kind == StructureKind::BlockDiagonal) n += "(k=" + std::to_string(block) + ")";
  if (kind == StructureKind::RankKTril || kind == StructureKind::RankKTriu) {
    n += "(k=" + std::to_string(rank) + ")";
  }
  if (kind == StructureKind::Hierarchical) {
    n += "(d2=" + std::to_string(d2) + ",d3=" + std::to_string(d3) + ")";
  }
  return n;
}

FactorStructure StructureSpec::bind(std::size_t dim) const {
  FactorStructure s;
  s.kind = kind;
  s.dim = dim;
  switch (kind) {
    case StructureKind::BlockDiagonal:
      s.block = std::min(block, dim);
      break;
    case StructureKind::RankKTril:
    case StructureKind::RankKTriu:
      s.rank = std::min(rank, dim);
      break;
    case StructureKind::Hierarchical:
      s.d2 = d2;
      s.d3 = d3;
      break;
    default:
      break;
  }
  s.validate();
  return s;
}

// ---------------------------------------------------------------------------
// StructuredFactor
// ---------------------------------------------------------------------------

StructuredFactor::StructuredFactor(FactorStructure structure, std::vector<double> coeffs)
    : structure_(structure), coeffs_(std::move(coeffs)) {
  structure_.validate();
  if (coeffs_.size() != storage_count(structure_)) {
    throw ShapeError("StructuredFactor: got " + std::to_string(coeffs_.size()) +
                     " coeffs, structure " + structure_.name() + " stores " +
                     std::to_string(storage_count(structure_)));
  }
}

StructuredFactor StructuredFactor::zero(const FactorStructure& s) {
  s.validate();
  return StructuredFactor(s, std::vector<double>(storage_count(s), 0.0));
}

StructuredFactor StructuredFactor::identity(const FactorStructure& s) {
  StructuredFactor f = zero(s);
  auto c = f.coeffs();
  switch (s.kind) {
    case StructureKind::Tril:
      for (std::size_t i = 0; i < s.dim; ++i) c[tril_offset(i, i)] = 1.0;
      break;
    case StructureKind::Triu:
      for (std::size_t i = 0; i < s.dim; ++i) c[triu_offset(s.dim, i, i)] = 1.0;
      break;
    case StructureKind::TrilToeplitz:
    case StructureKind::TriuToeplitz:
      c[0] = 1.0;
      break;
    default:
      for (const Block& b : block_layout(s)) {
        if (b.r0 != b.c0) continue;
        if (b.diag) {
          for (std::size_t i = 0; i < b.nr; ++i) c[b.off + i] = 1.0;
        } else {
          for (std::size_t i = 0; i < b.nr; ++i) c[b.off + i * b.nc + i] = 1.0;
        }
      }
      break;
  }
  return f;
}

Matrix StructuredFactor::to_dense() const {
  const std::size_t d = structure_.dim;
  Matrix m(d, d);
  switch (structure_.kind) {
    case StructureKind::Tril:
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) m(i, j) = coeffs_[tril_offset(i, j)];
      }
      break;
    case StructureKind::Triu:
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) m(i, j) = coeffs_[triu_offset(d, i, j)];
      }
      break;
    case StructureKind::TriuToeplitz:
      for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t i = 0; i + p < d; ++i) m(i, i + p) = coeffs_[p];
      }
      break;
    case StructureKind::TrilToeplitz:
      for (std::size_t p = 0; p < d; ++p) {
        for (std::size_t i = 0; i + p < d; ++i) m(i + p, i) = coeffs_[p];
      }
      break;
    default:
      for (const Block& b : block_layout(structure_)) {
        if (b.diag) {
          for (std::size_t i = 0; i < b.nr; ++i) m(b.r0 + i, b.c0 + i) = coeffs_[b.off + i];
        } else {
          for (std::size_t i = 0; i < b.nr; ++i) {
            for (std::size_t j = 0; j < b.nc; ++j) {
              m(b.r0 + i, b.c0 + j) = coeffs_[b.off + i * b.nc + j];
            }
          }
        }
      }
      break;
  }
  return m;
}

bool StructuredFactor::finite() const {
  for (double v : coeffs_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------
// Projection
// ---------------------------------------------------------------------------

StructuredFactor project(const FactorStructure& s, const Matrix& m) {
  if (!m.is_square() || m.rows() != s.dim) {
    throw ShapeError("project: structure dim " + std::to_string(s.dim) + " vs matrix " +
                     std::to_string(m.rows()) + "x" + std::to_string(m.cols()));
  }
  double asym = 0.0;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = i + 1; j < m.cols(); ++j) {
      asym = std::max(asym, std::abs(m(i, j) - m(j, i)));
    }
  }
  if (asym > 1e-8 * std::max(max_abs(m), 1.0)) {
    throw ContractError("project: input asymmetric beyond tolerance");
  }

  const std::size_t d = s.dim;
  StructuredFactor f = StructuredFactor::zero(s);
  auto c = f.coeffs();
  switch (s.kind) {
    case StructureKind::Tril:
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j <= i; ++j) {
          c[tril_offset(i, j)] = (i == j ? 1.0 : 2.0) * m(i, j);
        }
      }
      break;
    case StructureKind::Triu:
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = i; j < d; ++j) {
          c[triu_offset(d, i, j)] = (i == j ? 1.0 : 2.0) * m(i, j);
        }
      }
      break;
    case StructureKind::TriuToeplitz:
      for (std::size_t p = 0; p < d; ++p) {
        double sum = 0.0;
        for (std::size_t t = 0; t + p < d; ++t) sum += m(t, t + p);
        const double band = sum / static_cast<double>(d - p);
        c[p] = (p == 0 ? 1.0 : 2.0) * band;
      }
      break;
    case StructureKind::TrilToeplitz:
      for (std::size_t p = 0; p < d; ++p) {
        double sum = 0.0;
        for (std::size_t t = 0; t + p < d; ++t) sum += m(t + p, t);
        const double band = sum / static_cast<double>(d - p);
        c[p] = (p == 0 ? 1.0 : 2.0) * band;
      }
      break;
    default:
      for (const Block& b : block_layout(s)) {
        const double w = (b.r0 == b.c0) ? 1.0 : 2.0;
        if (b.diag) {
          for (std::size_t i = 0; i < b.nr; ++i) c[b.off + i] = m(b.r0 + i, b.c0 + i);
        } else {
          for (std::size_t i = 0; i < b.nr; ++i) {
            for (std::size_t j = 0; j < b.nc; ++j) {
              c[b.off + i * b.nc + j] = w * m(b.r0 + i, b.c0 + j);
            }
          }
        }
      }
      break;
  }
  return f;
}

// ---------------------------------------------------------------------------
// Algebra
// ---------------------------------------------------------------------------

StructuredFactor multiply(const StructuredFactor& a, const StructuredFactor& b, Accum accum) {
  check_same_structure(a, b, "multiply");
  return accum == Accum::FP32 ? multiply_impl<float>(a, b) : multiply_impl<double>(a, b);
}

StructuredFactor add(const StructuredFactor& a, const StructuredFactor& b) {
  check_same_structure(a, b, "add");
  StructuredFactor out = a;
  auto oc = out.coeffs();
  auto bc = b.coeffs();
  for (std::size_t i = 0; i < oc.size(); ++i) oc[i] += bc[i];
  return out;
}

StructuredFactor scaled(const StructuredFactor& a, double s) {
  StructuredFactor out = a;
  for (double& v : out.coeffs()) v *= s;
  return out;
}

StructuredFactor right_update(const StructuredFactor& k, const StructuredFactor& m,
                              double beta1, int order, Accum accum) {
  check_same_structure(k, m, "right_update");
  if (order != 1 && order != 2) throw ContractError("right_update: order must be 1 or 2");

  const StructuredFactor km = multiply(k, m, accum);
  StructuredFactor out = add(k, scaled(km, -beta1));
  if (order == 2) {
    const StructuredFactor kmm = multiply(km, m, accum);
    out = add(out, scaled(kmm, 0.5 * beta1 * beta1));
  }
  return out;
}

Matrix congruence(const StructuredFactor& k, const Matrix& u, Accum accum) {
  if (!u.is_square() || u.rows() != k.dim()) {
    throw ShapeError("congruence: factor dim " + std::to_string(k.dim()) + " vs matrix " +
                     std::to_string(u.rows()) + "x" + std::to_string(u.cols()));
  }
  return right_mul(left_tmul(k, u, accum), k, accum);
}

Matrix gram(const StructuredFactor& k, Accum accum) {
  return left_tmul(k, k.to_dense(), accum);
}

double gram_trace(const StructuredFactor& k) {
  const auto c = k.coeffs();
  if (is_toeplitz_kind(k.structure().kind)) {
    // Band p occupies d - p positions.
    const std::size_t d = k.dim();
    double s = 0.0;
    for (std::size_t p = 0; p < d; ++p) s += static_cast<double>(d - p) * c[p] * c[p];
    return s;
  }
  double s = 0.0;
  for (double v : c) s += v * v;
  return s;
}

Matrix sandwich_precondition(const StructuredFactor& c, const Matrix& g,
                             const StructuredFactor& k, Accum accum) {
  if (g.rows() != c.dim() || g.cols() != k.dim()) {
    throw ShapeError("sandwich_precondition: gradient " + std::to_string(g.rows()) + "x" +
                     std::to_string(g.cols()) + " vs factors d_o=" + std::to_string(c.dim()) +
                     ", d_i=" + std::to_string(k.dim()));
  }
  const Matrix ct_g = left_tmul(c, g, accum);
  const Matrix cct_g = left_mul(c, ct_g, accum);
  const Matrix cct_g_k = right_mul(cct_g, k, accum);
  return right_tmul(cct_g_k, k, accum);
}

std::vector<FactorStructure> all_structures(std::size_t d) {
  std::vector<FactorStructure> out;
  out.push_back(FactorStructure::dense(d));
  out.push_back(FactorStructure::diagonal(d));
  out.push_back(FactorStructure::block_diagonal(d, std::min<std::size_t>(2, d)));
  out.push_back(FactorStructure::tril(d));
  out.push_back(FactorStructure::triu(d));
  out.push_back(FactorStructure::tril_toeplitz(d));
  out.push_back(FactorStructure::triu_toeplitz(d));
  const std::size_t part = std::max<std::size_t>(1, d / 4);
  if (2 * part <= d) out.push_back(FactorStructure::hierarchical(d, part, part));
  out.push_back(FactorStructure::rank_k_tril(d, std::min<std::size_t>(2, d)));
  out.push_back(FactorStructure::rank_k_triu(d, std::min<std::size_t>(2, d)));
  return out;
}

}  // namespace singd
