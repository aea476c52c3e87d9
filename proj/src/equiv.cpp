#include "fieldlab/equiv.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fieldlab/errors.hpp"

namespace fieldlab {

bool equiv_probabilistic(const Expr& a, const Expr& b, const EquivOptions& opts) {
  std::set<CoordId> coords;
  collect_coords(a, coords);
  collect_coords(b, coords);
  std::mt19937_64 rng(opts.seed);
  std::uniform_real_distribution<double> dist(opts.lo, opts.hi);
  for (int t = 0; t < opts.trials; ++t) {
    bool done = false;
    for (int attempt = 0; attempt <= opts.max_resamples && !done; ++attempt) {
      Valuation at;
      for (const auto& c : coords) at[c] = dist(rng);
      double va, vb;
      try {
        va = eval(a, at);
        vb = eval(b, at);
      } catch (const Error& e) {
        if (e.kind() == ErrorKind::DomainError) continue;
        throw;
      }
      done = true;
      double scale = 1.0 + std::max(std::abs(va), std::abs(vb));
      if (std::abs(va - vb) > opts.tol * scale) return false;
    }
    if (!done)
      fail(ErrorKind::Inconclusive,
           "all samples hit domain errors while comparing expressions");
  }
  return true;
}

}  // namespace fieldlab
