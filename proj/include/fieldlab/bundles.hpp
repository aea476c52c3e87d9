#pragma once

#include <optional>

#include "fieldlab/forms.hpp"

namespace fieldlab {

// A first-order field theory: a Lagrangian density coefficient on the
// velocity layer of a trivialized bundle over an n-dimensional base.
struct LagrangianTheory {
  ChartPtr chart;
  Expr L;
  std::vector<Expr> dLdz;  // indexed i*n + mu
  std::vector<Expr> dLdy;  // indexed i
};

LagrangianTheory make_theory(ChartPtr chart, Expr L);

// Hessian of L in the velocity block, flat index a = i*n + mu.
std::vector<Expr> velocity_hessian(const LagrangianTheory& th);
Eigen::MatrixXd velocity_hessian_at(const LagrangianTheory& th, const Valuation& at);
bool is_regular_at(const LagrangianTheory& th, const Valuation& at,
                   double tol = 1e-10);

// Canonical n-form of the theory on the velocity layer,
//   (L - z dL/dz) volume + dL/dz dy ^ (contracted volume),
// and its negated differential.
FormX theory_theta(const LagrangianTheory& th);
FormX theory_omega(const LagrangianTheory& th);

// Tautological forms on the full dual layer:
//   p volume + P^mu_i dy^i ^ (contracted volume)_mu.
FormX dual_theta(const ChartPtr& chart);
FormX dual_omega(const ChartPtr& chart);

// Fiber derivative into the full dual layer: p = L - z dL/dz, P = dL/dz.
// Image expressions are indexed by full-dual layer positions.
std::vector<Expr> full_legendre(const LagrangianTheory& th);
// Reduced fiber derivative into the reduced dual layer: P = dL/dz.
std::vector<Expr> reduced_legendre(const LagrangianTheory& th);
Eigen::MatrixXd reduced_legendre_jacobian_at(const LagrangianTheory& th,
                                             const Valuation& at);

// Hamiltonian data: a local Hamiltonian function on the reduced dual layer
// or on a sublayer of it (for constrained images of the fiber derivative).
struct HamiltonianData {
  ChartPtr chart;
  LayerPtr layer;
  Expr H;
};

// -H volume + P dy ^ (contracted volume), over the momenta present in the
// layer, and its negated differential.
FormX hamiltonian_theta(const HamiltonianData& hd);
FormX hamiltonian_omega(const HamiltonianData& hd);

// Pairing layer constructions.
Expr pairing_function(const ChartPtr& chart);            // p + P^mu_i z^i_mu
Expr coupling_hamiltonian(const LagrangianTheory& th);   // p + P z - L
FormX pairing_theta(const ChartPtr& chart);
FormX pairing_omega(const ChartPtr& chart);
// pairing_omega + d(coupling) ^ volume
FormX coupling_omega(const LagrangianTheory& th);

// Graph of the fiber derivative inside the pairing layer: velocity layer ->
// pairing layer images (p and P substituted by their Legendre values).
std::vector<Expr> pairing_graph(const LagrangianTheory& th);
// Momentum residuals on the pairing layer: P^mu_i - dL/dz^i_mu and the
// scalar residual p - (L - z dL/dz).
std::vector<Expr> momentum_residuals(const LagrangianTheory& th);
Expr scalar_momentum_residual(const LagrangianTheory& th);
// coupling_omega pulled back along pairing_graph; lives on the velocity
// layer and coincides with theory_omega.
FormX restricted_coupling_omega(const LagrangianTheory& th);

// Closed-form Legendre inversion for velocity-quadratic Lagrangians with a
// constant invertible Hessian. Returns the velocity expressions over the
// reduced dual layer and the Hamiltonian H = P z(P) - L(z(P)).
struct LegendreInverse {
  std::vector<Expr> z_of_p;  // indexed i*n + mu
  Expr H;
};
std::optional<LegendreInverse> invert_quadratic_legendre(
    const LagrangianTheory& th, double tol = 1e-12);

}  // namespace fieldlab
