#pragma once

#include <map>
#include <string>

#include "fieldlab/connections.hpp"
#include "fieldlab/linalg.hpp"

namespace fieldlab {

struct SystemColumn {
  CoordId target;
  int mu = 0;
};

// Pointwise linear system in the lift coefficients: rows are the basis-form
// coefficients of i_h(omega) - (n-1) omega evaluated at a point, optionally
// extended by tangency rows h(d/dx^mu)(phi) = 0 for known constraints.
struct ProjectorSystem {
  Formalism formalism = Formalism::LagrangianZ;
  LayerPtr layer;
  Eigen::MatrixXd M;
  Eigen::VectorXd b;
  std::vector<SystemColumn> columns;
  std::vector<std::string> row_labels;
};

struct SolveResult {
  bool solvable = false;
  Eigen::VectorXd solution;
  double residual = 0.0;  // relative distance of b from the column space
  int free_parameters = 0;
};

// Symbolic expansion of the contraction identity, built once per form and
// reused for every point. Each row is affine in the unknown coefficients:
// constant + sum_u coeff_u * gamma_u.
class SystemTemplate {
 public:
  struct Row {
    std::vector<int> tuple;  // sorted basis-form index, empty for tangency
    Expr constant;
    std::map<int, Expr> coeffs;  // column index -> coefficient
    std::string label;
  };

  SystemTemplate(Formalism f, LayerPtr layer, const FormX& omega);

  Formalism formalism() const { return formalism_; }
  const LayerPtr& layer() const { return layer_; }
  const std::vector<Row>& rows() const { return rows_; }
  const std::vector<SystemColumn>& columns() const { return columns_; }
  int column_of(const CoordId& target, int mu) const;

  // Constants of the rows that carry no unknown at all; on the pairing layer
  // these are exactly the primary constraint residuals.
  std::vector<Expr> unknown_free_rows() const;

  ProjectorSystem assemble_at(const Valuation& pt) const;
  // Adds one row per (constraint, direction) imposing tangency; throws
  // PointOffConstraint when pt violates the set.
  ProjectorSystem assemble_at(const Valuation& pt,
                              const ConstraintSet& tangency) const;

  ConnectionCoeffs coefficients_from(const Eigen::VectorXd& x) const;

 private:
  Formalism formalism_;
  LayerPtr layer_;
  std::vector<SystemColumn> columns_;
  std::vector<Row> rows_;
};

// Ready-made templates: the velocity-layer system for the theory's form, and
// the pairing-layer system for the coupling form.
SystemTemplate lagrangian_system(const LagrangianTheory& th);
SystemTemplate unified_system(const LagrangianTheory& th);
SystemTemplate hamiltonian_system(const HamiltonianData& hd);
// Same equation as the velocity-layer system but against the coupling form
// restricted to the graph; kept separate so traces can tell them apart.
SystemTemplate restricted_unified_system(const LagrangianTheory& th);

SolveResult solve_pointwise(const ProjectorSystem& sys, double tol = 1e-8);

// Momentum residuals P^mu_i - dL/dz^i_mu together with the coupling function
// p + P z - L, on the pairing layer. These cut out the graph of the fiber
// derivative and are the seed constraints of the unified chain.
ConstraintSet primary_constraints_unified(const LagrangianTheory& th);

}  // namespace fieldlab
