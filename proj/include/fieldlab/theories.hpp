#pragma once

#include <optional>
#include <string>
#include <vector>

#include "fieldlab/bundles.hpp"
#include "fieldlab/chains.hpp"

namespace fieldlab {

// Everything a command needs to run one study case: the theory itself plus
// the sampling region, the registered cokernel and step registrations, the
// dual-side data when the case ships one, and a default initial state for
// the integrator (position and velocity coordinates; momenta are completed
// by the caller).
struct TheoryBundle {
  std::string name;
  LagrangianTheory theory;
  SampleBox box;
  CokernelBasis cokernel;
  std::vector<StepRegistration> registrations;
  std::optional<HamiltonianData> hamiltonian;
  Valuation initial_state;
};

// Names load_theory accepts without touching the filesystem.
std::vector<std::string> builtin_theories();
bool is_builtin_theory(const std::string& name);

// Loads a builtin by name, or a JSON theory file by path. Unknown names and
// unreadable files throw BadInput; malformed JSON or expression text throws
// SyntaxError with a location; inconsistent dimensions throw BadInput.
//
// File schema (all expressions use the chart's coordinate language):
//   {
//     "name": "...",
//     "n": 1,
//     "m": 2,                      // optional cross-check against the fibers
//     "fibers": [{"name": "y", "count": 2, "momentum": "py"},
//                {"name": "h", "sym2": true, "momentum": "q"}],
//     "lagrangian": "(1/2)*y[0,0]^2 + y[1]*y[0,0]",
//     "cokernel": [[null, "1"]],   // covectors, one entry per fiber row
//     "registrations": [{"chain": "unified", "step": 3,
//                        "functions": ["y[1,0]"]}],
//     "box": {"ranges": {"h[0,0]": [-2.0, -0.5]},
//             "fallback": [-1.5, 1.5],
//             "guards": [{"expr": "-det2(h)", "min": 0.1}]},
//     "hamiltonian": {"coords": ["x[0]", "y[0]", "py[0,0]"],  // optional,
//                     "h": "(1/2)*py[0,0]^2"},   // defaults to reduced dual
//     "initial_state": {"x[0]": 0.0, "y[0]": 1.0, "y[0,0]": 0.0}
//   }
TheoryBundle load_theory(const std::string& name_or_path);

// Parses theory-file text directly; `origin` labels error messages.
TheoryBundle parse_theory_text(const std::string& text,
                               const std::string& origin);

}  // namespace fieldlab
