#pragma once

#include <cstdint>
#include <string>

#include <json.hpp>

#include "fieldlab/chains.hpp"
#include "fieldlab/theories.hpp"

namespace fieldlab {

inline constexpr const char* kToolVersion = "0.1.0";

// Outcome of one command: the JSON document the tool prints plus the
// aggregate verdict that drives the exit status. Documents are deterministic
// for a fixed seed; keys are emitted in sorted order.
struct Report {
  nlohmann::json doc;
  bool pass = true;

  std::string text() const { return doc.dump(2) + "\n"; }
};

struct AnalyzeOptions {
  std::uint64_t seed = 0x0c0ffee0ULL;
  int samples = 64;
  double tol = 1e-9;
};

// Samples the box for a regularity profile, tests nondegeneracy of the
// velocity-layer, dual-layer, and graph-restricted structures, ranks the
// fiber derivative, and verifies the pullback identities relating the
// canonical forms. The verdict asserts the internal consistency statements
// that hold for every theory (regular or not).
Report cmd_analyze(const TheoryBundle& b, const AnalyzeOptions& opt = {});

struct ConstraintsOptions {
  // lagrangian | hamiltonian | unified | restricted | all
  std::string formalism = "all";
  ChainOptions chain;
};

// Runs the requested constraint chains and reports every step: emitted
// constraints, accepted fractions, worst residuals, and stabilization. With
// "all" the three projectable chains are transported onto each other and
// compared pointwise. The verdict requires stabilization of every chain
// that ran, and agreement of the transports when they ran.
Report cmd_constraints(const TheoryBundle& b,
                       const ConstraintsOptions& opt = {});

struct IntegrateOptions {
  double horizon = 1.0;
  double step = 1e-3;
  Valuation state;         // empty: use the bundle's default initial state
  double drift_tol = 1e-6; // coupling-function drift bound
  double residual_tol = 1e-6;  // field-equation residual bound
  int table_rows = 200;    // trajectory rows kept in the report
};

// Integrates the transversal flow of the coupling structure on the final
// constraint set (mechanics only, n = 1). Regular theories flow on the
// graph of the fiber derivative; singular theories need a registered
// cokernel, are restricted to the stabilized chain, and the initial jets
// are realigned through the beta section first. Reports the trajectory,
// the coupling-function drift, the worst field-equation residual, and the
// holonomy defect along the flow.
Report cmd_integrate(const TheoryBundle& b, const IntegrateOptions& opt);

struct ExteriorOptions {
  int trials = 100;
  std::uint64_t seed = 0x0c0ffee0ULL;
};

// Property suite for the exterior algebra on randomly generated charts:
// d*d = 0, graded anticommutativity, the Leibniz rule, nested-contraction
// antisymmetry, and the slot-sum identity for operator insertion.
Report cmd_check_exterior(const ExteriorOptions& opt = {});

}  // namespace fieldlab
