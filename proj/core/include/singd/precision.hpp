#pragma once

#include <cstdint>
#include <string>

#include "singd/linalg.hpp"

namespace singd {

/// Emulated storage formats. BF16/FP16 are rounded in software so that
/// low-precision behaviour is reproducible on any hardware.
enum class Format : std::uint8_t { FP64, FP32, BF16, FP16 };

Format parse_format(const std::string& name);
std::string format_name(Format f);

/// Round-to-nearest-even of x to the given format, with overflow to
/// infinity and gradual underflow. FP64 is a pass-through.
double quantize(double x, Format f);

Matrix quantize_matrix(const Matrix& m, Format f);

/// Tensors that get rounded to the storage format at step boundaries.
enum QuantizePoint : std::uint8_t {
  kQuantizeFactorState = 1u << 0,  // K, C, m_K, m_C / S_K, S_C, caches, momenta
  kQuantizeGradients = 1u << 1,
  kQuantizeCurvature = 1u << 2,
  kQuantizeParameters = 1u << 3,
};

constexpr std::uint8_t kQuantizeAll = kQuantizeFactorState | kQuantizeGradients |
                                      kQuantizeCurvature | kQuantizeParameters;

/// Storage format plus accumulation width, applied at operation boundaries:
/// operands live in the storage format, reductions run in the accumulation
/// format, results are rounded back to storage.
struct PrecisionPolicy {
  Format storage = Format::FP64;
  Format accumulation = Format::FP64;  // FP64 or FP32 only
  std::uint8_t points = 0;

  bool quantizes(QuantizePoint p) const { return (points & p) != 0; }
  Accum accum() const { return accumulation == Format::FP32 ? Accum::FP32 : Accum::FP64; }

  /// Throws ContractError unless accumulation is FP64/FP32 and at least as
  /// wide as storage.
  void validate() const;

  /// Storage BF16 at every quantize point, FP32 accumulation.
  static PrecisionPolicy bf16();

  double apply(double x, QuantizePoint p) const {
    return quantizes(p) ? quantize(x, storage) : x;
  }
  Matrix apply(const Matrix& m, QuantizePoint p) const {
    return quantizes(p) ? quantize_matrix(m, storage) : m;
  }
  void apply_in_place(Matrix& m, QuantizePoint p) const;
};

}  // namespace singd
