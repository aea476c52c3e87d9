#pragma once

#include <cstdint>

#include "fieldlab/expr.hpp"

namespace fieldlab {

struct EquivOptions {
  int trials = 20;
  double tol = 1e-9;
  std::uint64_t seed = 0x5eed5eedULL;
  double lo = -2.0;
  double hi = 2.0;
  int max_resamples = 10;  // per trial, on domain errors
};

// Samples the union of the two expressions' coordinates uniformly and
// compares values with tolerance tol * (1 + max(|a|, |b|)). Domain errors
// trigger a resample; a trial whose resamples are exhausted raises
// Inconclusive. Returns false at the first disagreeing sample.
bool equiv_probabilistic(const Expr& a, const Expr& b,
                         const EquivOptions& opts = {});

inline bool equiv_zero(const Expr& a, const EquivOptions& opts = {}) {
  return equiv_probabilistic(a, Expr(), opts);
}

}  // namespace fieldlab
