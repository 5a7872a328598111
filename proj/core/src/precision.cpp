#include "singd/precision.hpp"

#include <cmath>
#include <limits>

#include "singd/errors.hpp"

namespace singd {

namespace {

// Rounds to a binary format with `precision` significand bits (implicit bit
// included) and exponent range [emin, emax]. Works by scaling x so that one
// ulp of the target becomes 1.0, rounding half-to-even, and scaling back;
// both scalings are exact powers of two.
double round_to_binary(double x, int precision, int emin, int emax) {
  if (x == 0.0 || !std::isfinite(x)) return x;  // keeps -0, inf, nan

  int exp;  // |x| = f * 2^exp, f in [0.5, 1)
  std::frexp(std::fabs(x), &exp);
  const int e = exp - 1;  // |x| in [2^e, 2^(e+1))

  const int ulp_exp = (e >= emin ? e : emin) - (precision - 1);
  const double scale = std::ldexp(1.0, ulp_exp);
  const double q = std::nearbyint(x / scale) * scale;

  const double max_finite = std::ldexp(2.0 - std::ldexp(1.0, 1 - precision), emax);
  if (std::fabs(q) > max_finite) {
    return std::copysign(std::numeric_limits<double>::infinity(), x);
  }
  return q;
}

int format_width(Format f) {
  switch (f) {
    case Format::FP64: return 64;
    case Format::FP32: return 32;
    case Format::BF16:
    case Format::FP16: return 16;
  }
  return 64;
}

}  // namespace

Format parse_format(const std::string& name) {
  if (name == "fp64") return Format::FP64;
  if (name == "fp32") return Format::FP32;
  if (name == "bf16") return Format::BF16;
  if (name == "fp16") return Format::FP16;
  throw ConfigError("unknown precision format '" + name + "'");
}

std::string format_name(Format f) {
  switch (f) {
    case Format::FP64: return "fp64";
    case Format::FP32: return "fp32";
    case Format::BF16: return "bf16";
    case Format::FP16: return "fp16";
  }
  return "fp64";
}

double quantize(double x, Format f) {
  switch (f) {
    case Format::FP64:
      return x;
    case Format::FP32:
      // Hardware cast performs the correct single rounding.
      return static_cast<double>(static_cast<float>(x));
    case Format::BF16:
      return round_to_binary(x, 8, -126, 127);
    case Format::FP16:
      return round_to_binary(x, 11, -14, 15);
  }
  return x;
}

Matrix quantize_matrix(const Matrix& m, Format f) {
  Matrix out = m;
  if (f != Format::FP64) {
    for (double& v : out.values()) v = quantize(v, f);
  }
  return out;
}

void PrecisionPolicy::validate() const {
  if (accumulation != Format::FP64 && accumulation != Format::FP32) {
    throw ContractError("precision: accumulation format must be fp64 or fp32");
  }
  if (format_width(accumulation) < format_width(storage)) {
    throw ContractError("precision: accumulation format narrower than storage");
  }
}

PrecisionPolicy PrecisionPolicy::bf16() {
  PrecisionPolicy p;
  p.storage = Format::BF16;
  p.accumulation = Format::FP32;
  p.points = kQuantizeAll;
  return p;
}

void PrecisionPolicy::apply_in_place(Matrix& m, QuantizePoint p) const {
  if (!quantizes(p) || storage == Format::FP64) return;
  for (double& v : m.values()) v = quantize(v, storage);
}

}  // namespace singd
