#pragma once

#include <functional>

#include "fieldlab/chains.hpp"

namespace fieldlab {

// Cosymplectic pair on an odd-dimensional layer. Use make_reeb_problem to
// get the degree, dimension, and closedness checks.
struct ReebProblem {
  LayerPtr layer;
  FormX omega;
  FormX eta;
};

ReebProblem make_reeb_problem(LayerPtr layer, FormX omega, FormX eta);

// The unique xi with i_xi omega = 0 and eta(xi) = 1, as components in layer
// coordinate order. DegenerateStructure when the pointwise system is rank
// deficient or inconsistent.
Eigen::VectorXd reeb_components(const ReebProblem& rp, const Valuation& pt,
                                double tol = 1e-9);

using FlowField = std::function<Eigen::VectorXd(const Valuation&)>;

FlowField reeb_flow(const ReebProblem& rp, double tol = 1e-9);

// max_i |xi^{y^i} - z^i(pt)| on a one-dimensional base; the coordinate form
// of the second-order condition for a direction with unit time component.
double sode_defect(const Eigen::VectorXd& xi, const LayerPtr& layer,
                   const Valuation& pt);

struct Trajectory {
  LayerPtr layer;
  std::string method = "rk4";
  double step = 0.0;
  std::vector<double> times;
  std::vector<Eigen::VectorXd> states;

  Valuation state_at(std::size_t k) const;
};

// Classical fixed-step fourth-order Runge-Kutta. The step is adjusted to
// the nearest exact divisor of the horizon; NonFiniteState on overflow.
Trajectory integrate(const LayerPtr& layer, const FlowField& f,
                     const Valuation& start, double horizon, double step);

std::string trajectory_to_json(const Trajectory& tr);
std::vector<Valuation> initial_conditions_from_json(const std::string& text,
                                                    const LayerPtr& layer);

// Brute-force verification chain for one-dimensional bases, built from
// finite differences of the Lagrangian alone: at each sampled point the
// evaluated pairing-space system is solved for a single direction
// constrained to the numerically estimated tangent space of the previous
// step's accepted set. Tangents come from finite-difference gradients of
// the seed functions, deeper levels from gradients of the local
// solvability functionals.
class PresymplecticOracle {
 public:
  explicit PresymplecticOracle(LagrangianTheory th, SampleBox box = {},
                               ChainOptions opt = {});

  const AlgorithmTrace& run();
  const AlgorithmTrace& trace() const { return trace_; }
  LayerPtr layer() const { return layer_; }
  const ConstraintSet& seed() const { return seed_; }

  // step-r classifier: previous-level membership plus pointwise solvability
  bool member(int r, const Valuation& pt) const;
  bool solvable(const Valuation& pt, int step) const;
  // min-norm direction of the step classification system
  Eigen::VectorXd direction(const Valuation& pt, int step = 2) const;

 private:
  struct System {
    Eigen::MatrixXd M;
    Eigen::VectorXd b;
  };
  Eigen::MatrixXd omega_matrix(const Valuation& pt) const;
  System assemble_for_step(const Valuation& pt, int step) const;
  std::vector<Valuation> draw_level(int level, int count,
                                    std::uint64_t salt) const;

  LagrangianTheory th_;
  LayerPtr layer_;
  SampleBox box_;
  ChainOptions opt_;
  ConstraintSet seed_;
  std::vector<std::vector<Valuation>> accepted_;
  AlgorithmTrace trace_;
  bool ran_ = false;
};

AlgorithmTrace presymplectic_chain_oracle(const LagrangianTheory& th,
                                          const SampleBox& box,
                                          const ChainOptions& opt = {});

}  // namespace fieldlab
