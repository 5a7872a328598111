#pragma once

#include <string>
#include <vector>

#include "singd/linalg.hpp"
#include "singd/precision.hpp"
#include "singd/structured.hpp"

namespace singd {

struct PropertyResult {
  std::string name;
  double measured = 0.0;
  std::string bound;  // human-readable acceptance bound, e.g. "<= 1e-14"
  bool pass = false;
};

struct VerifyReport {
  std::string suite;
  std::vector<PropertyResult> results;
  bool pass() const;
};

/// Suites: theorem1, invariance, projections, closure, precision, quadratic.
/// Each binds to one invariant family; an unknown name raises ConfigError.
VerifyReport run_verify_suite(const std::string& suite);
std::vector<std::string> verify_suite_names();

void print_report(const VerifyReport& report, std::ostream& os);

// Independent second routes used by the suites and the acceptance tests.

/// Bit-manipulation rounding oracle (deliberately a different route from
/// quantize()): round-to-nearest-even on the IEEE-754 representation.
double quantize_bits_oracle(double x, Format f);

/// Literal dense implementation of the subspace projection maps.
Matrix oracle_project_dense(const FactorStructure& s, const Matrix& m);

}  // namespace singd
