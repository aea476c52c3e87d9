#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "fieldlab/systems.hpp"

namespace fieldlab {

// The four constraint chains. The first three are the formalism chains the
// reports talk about; the restricted chain runs the unified equation with
// the form pulled back to velocity coordinates and is the one the
// cross-formalism projections target.
enum class ChainKind {
  LagrangianZ,
  HamiltonianZstar,
  UnifiedPairing,
  UnifiedRestricted,
};

const char* chain_kind_name(ChainKind k);
Formalism chain_formalism(ChainKind k);

struct Guard {
  Expr fn;
  double min = 0.0;  // accept iff fn(pt) >= min
};

// Per-coordinate draw ranges plus rejection guards. Coordinates without an
// explicit range use the fallback interval.
struct SampleBox {
  std::map<CoordId, std::pair<double, double>> ranges;
  std::pair<double, double> fallback{-1.5, 1.5};
  std::vector<Guard> guards;

  std::pair<double, double> range(const CoordId& id) const;
  bool guards_ok(const Valuation& at) const;
};

// A symbolic basis of the left null space of the velocity Hessian, one
// weight per fiber row. Registered by theory definitions whose Lagrangian
// is quadratic in the velocities; enables symbolic secondary constraints.
struct CokernelBasis {
  std::vector<std::vector<Expr>> covectors;
  bool empty() const { return covectors.empty(); }
};

// User-registered symbolic constraints for a specific chain step, used where
// the classifier alone cannot parametrize the accepted set (sampling needs
// a symbolic handle). Validated against the classifier on accepted points.
struct StepRegistration {
  ChainKind kind = ChainKind::LagrangianZ;
  int step = 0;
  std::vector<Expr> fns;
};

struct ChainSetup {
  ChainKind kind = ChainKind::LagrangianZ;
  LayerPtr layer;
  SystemTemplate tpl;
  ConstraintSet seed;  // the step-1 set
  SampleBox box;
  CokernelBasis cokernel;
  std::vector<StepRegistration> registrations;
  // velocity-layer force terms: the fiber-differential rows of the
  // Lagrangian system evaluated on the holonomic lift with vanishing
  // second-order coefficients; the covector emission projects these
  std::vector<Expr> force_rows;
};

struct ChainOptions {
  int max_steps = 8;
  int samples_per_step = 256;
  double solve_tol = 1e-8;
  double membership_tol = 1e-7;
  double project_tol = 1e-10;
  int project_iters = 50;
  int draw_attempts = 80;  // draws allowed per accepted sample point
  std::uint64_t seed = 0x0c0ffee0ULL;
};

struct StepTrace {
  int r = 1;
  ConstraintSet set;                  // cumulative symbolic set S_r
  std::vector<std::string> emitted;   // printed step-r additions
  std::vector<Valuation> sample;      // the on-S_{r-1} sample classified here
  std::vector<char> accepted;
  double accepted_fraction = 1.0;
  double max_residual = 0.0;          // worst solve residual among accepted

  std::vector<Valuation> accepted_points() const;
};

struct AlgorithmTrace {
  ChainKind kind = ChainKind::LagrangianZ;
  Formalism formalism = Formalism::LagrangianZ;
  LayerPtr layer;
  std::vector<StepTrace> steps;
  bool stabilized = false;
  int stabilization_index = -1;

  const ConstraintSet& set_at(int r) const;  // S_min(r, last)
};

ChainSetup make_lagrangian_chain(const LagrangianTheory& th, SampleBox box,
                                 CokernelBasis cokernel = {},
                                 std::vector<StepRegistration> regs = {});
ChainSetup make_unified_chain(const LagrangianTheory& th, SampleBox box,
                              CokernelBasis cokernel = {},
                              std::vector<StepRegistration> regs = {});
ChainSetup make_restricted_chain(const LagrangianTheory& th, SampleBox box,
                                 CokernelBasis cokernel = {},
                                 std::vector<StepRegistration> regs = {});
ChainSetup make_hamiltonian_chain(const HamiltonianData& hd, SampleBox box,
                                  std::vector<StepRegistration> regs = {});

// Symbolic secondary constraints of the chain: rows of the template that
// carry no unknowns, plus the registered-cokernel projections of the force
// rows. Throws NoCokernelRegistered when require_cokernel is set and the
// setup has none; throws InvalidCokernel when a registered covector fails
// the left-null check against the velocity Hessian.
std::vector<Expr> secondary_constraints(const ChainSetup& setup,
                                        const LagrangianTheory& th,
                                        bool require_cokernel = false);

// Membership classifier: pt belongs to step r iff it satisfies S_{r-1} and
// the pointwise system with S_{r-1} tangency rows is solvable.
bool chain_member(const ChainSetup& setup, const AlgorithmTrace& trace, int r,
                  const Valuation& pt, double solve_tol = 1e-8);

// Runs the chain until two consecutive steps classify the sample the same
// way or max_steps is hit. Never throws on failure to stabilize; the flag
// records it.
AlgorithmTrace run_algorithm(const ChainSetup& setup,
                             const ChainOptions& opt = {});

// Draws count points in the box, Gauss-Newton projected onto the set;
// exposed for the validation suites.
std::vector<Valuation> sample_on_set(const LayerPtr& layer,
                                     const SampleBox& box,
                                     const ConstraintSet& set,
                                     int count, const ChainOptions& opt,
                                     std::uint64_t seed_offset = 0);

struct TransportEntry {
  int r = 2;
  std::string direction;
  double max_violation = 0.0;
  int points = 0;
};

struct TransportReport {
  std::vector<TransportEntry> entries;
  double max_violation = 0.0;
  bool stabilization_agree = false;
  int stab_lagrangian = -1;
  int stab_hamiltonian = -1;
  int stab_restricted = -1;
};

// Maps each chain's accepted step-r samples through the coordinate
// projections (drop momenta to reach velocity coordinates, drop the scalar
// momentum and the jets to reach the reduced dual, the fiber derivative from
// velocity to the reduced dual) and evaluates the target chain's step-r
// constraints on the images.
TransportReport transport_and_compare(const LagrangianTheory& th,
                                      const AlgorithmTrace& restricted,
                                      const AlgorithmTrace& lagrangian,
                                      const AlgorithmTrace& hamiltonian,
                                      int max_points = 1000);

// {"formalism", "steps": [{"r", "constraints", "accepted_fraction",
//   "max_residual"}], "stabilized"}
std::string trace_to_json(const AlgorithmTrace& trace);

}  // namespace fieldlab
