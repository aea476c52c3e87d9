#pragma once

#include <Eigen/Dense>

#include "fieldlab/bundles.hpp"
#include "fieldlab/forms.hpp"

namespace fieldlab {

enum class Formalism { LagrangianZ, HamiltonianZstar, UnifiedW0 };

inline const char* formalism_name(Formalism f) {
  switch (f) {
    case Formalism::LagrangianZ: return "lagrangian";
    case Formalism::HamiltonianZstar: return "hamiltonian";
    case Formalism::UnifiedW0: return "unified";
  }
  return "?";
}

// Horizontal-lift coefficients on a layer,
//
//   h(d/dx^mu) = d/dx^mu + sum_t gamma(t, mu) d/dw^t
//
// over the non-base coordinates w^t of the layer. Base rows stay zero; the
// induced projector kills every fiber direction, so h^2 = h holds by
// construction. The formalism tag records which layer family the
// coefficients refer to (velocity, reduced dual, pairing).
struct ConnectionCoeffs {
  Formalism formalism = Formalism::LagrangianZ;
  LayerPtr layer;
  std::vector<Expr> table;  // layer->dim() rows by n columns, row-major

  ConnectionCoeffs() = default;
  ConnectionCoeffs(Formalism f, LayerPtr l)
      : formalism(f), layer(std::move(l)) {
    table.assign((std::size_t)layer->dim() * layer->chart->n(), Expr());
  }

  int n() const { return layer->chart->n(); }
  Expr& at(int target, int mu) { return table[(std::size_t)target * n() + mu]; }
  const Expr& at(int target, int mu) const {
    return table[(std::size_t)target * n() + mu];
  }
  void set(const CoordId& target, int mu, Expr v) {
    at(layer->position(target), mu) = std::move(v);
  }
  const Expr& of(const CoordId& target, int mu) const {
    return at(layer->position(target), mu);
  }
};

// The idempotent (1,1)-tensor with image spanned by the lifts and kernel the
// vertical distribution.
LinearOperator<Expr> projector_from_coeffs(const ConnectionCoeffs& c);

// Lift components at a point; column mu holds h(d/dx^mu). The top n rows are
// the identity, so composing with the base projection gives Id exactly.
Eigen::MatrixXd lift_matrix_at(const ConnectionCoeffs& c, const Valuation& at);

// Gamma^i_mu(pt) - z^i_mu(pt) for every fiber coordinate i and direction mu
// (velocity-layer coefficients only). All zero iff the connection is
// semiholonomic at the point.
std::vector<double> semiholonomic_defect(const ConnectionCoeffs& c,
                                         const Valuation& at);

// The same numbers read off the vertical pairing tensor evaluated on the n
// horizontal lifts; used to cross-check semiholonomic_defect.
std::vector<double> semiholonomic_defect_via_pairing(const ConnectionCoeffs& c,
                                                     const Valuation& at);

// Max deviation of the Christoffel components (fiber-coordinate rows) across
// sample points that agree on everything except the listed varying
// coordinates. Zero iff the connection projects along those fibers.
double projectability_defect(const ConnectionCoeffs& c,
                             const std::vector<Valuation>& fiber_samples,
                             const std::vector<CoordId>& varying);

// Symbolic variant: true iff no Christoffel component depends on any of the
// given fiber coordinates.
bool projectable_symbolic(const ConnectionCoeffs& c,
                          const std::vector<CoordId>& fiber_coords);

// Replaces every jet coordinate of z0 by the corresponding Christoffel value
// at z0. Requires the coefficients to be constant along the given fiber
// directions (an empty list skips the check: the fiber is a point); throws
// NotProjectable otherwise. The two-argument form samples all jet
// coordinates.
Valuation beta_point(const ConnectionCoeffs& c, const Valuation& z0,
                     const std::vector<CoordId>& fiber_coords,
                     double tol = 1e-8, unsigned seed = 7);
Valuation beta_point(const ConnectionCoeffs& c, const Valuation& z0);

// Oracle for beta_point: integrates the vertical flow z' = Gamma - z from z0
// until the horizon and returns the end state. Converges exponentially to
// the beta point when the coefficients are fiber-constant.
Valuation beta_alpha_limit(const ConnectionCoeffs& c, const Valuation& z0,
                           double horizon = 30.0, double step = 0.01);

enum class Provenance { PrimarySymbolic, SecondarySymbolic, NumericOnly };

inline const char* provenance_name(Provenance p) {
  switch (p) {
    case Provenance::PrimarySymbolic: return "primary-symbolic";
    case Provenance::SecondarySymbolic: return "secondary-symbolic";
    case Provenance::NumericOnly: return "numeric-only";
  }
  return "?";
}

// Constraint functions on a fixed layer with a membership tolerance scaled
// by the gradient norm at the point (so near-singular gradients are not
// flagged spuriously).
struct ConstraintSet {
  LayerPtr layer;
  double tol = 1e-7;
  struct Entry {
    Expr fn;
    Provenance tag = Provenance::PrimarySymbolic;
  };
  std::vector<Entry> entries;

  void add(Expr fn, Provenance tag);
  bool empty() const { return entries.empty(); }
  int size() const { return (int)entries.size(); }

  // |fn(at)| / max(1, |grad fn(at)|), maximized over entries.
  double scaled_residual(const Valuation& at) const;
  bool satisfied(const Valuation& at) const {
    return empty() || scaled_residual(at) <= tol;
  }

  // cached coordinate gradients, one row per entry
  const std::vector<std::vector<Expr>>& gradients() const;

 private:
  mutable std::vector<std::vector<Expr>> grads_;
};

// max_{phi, mu} |h(d/dx^mu)(phi)(pt)|: directional derivatives of every
// constraint along every horizontal lift. Throws PointOffConstraint when pt
// violates the set.
double submanifold_tangency_defect(const ConnectionCoeffs& c,
                                   const ConstraintSet& cs,
                                   const Valuation& at);

// Pulls reduced-dual coefficients back to the velocity layer through the
// fiber derivative: Christoffel rows are composed with P = dL/dz, making
// them constant along the fiber-derivative fibers by construction. Jet rows
// are left zero (callers needing them solve the velocity-layer system).
ConnectionCoeffs transport_reduced_to_velocity(const ConnectionCoeffs& ham,
                                               const LagrangianTheory& th);

}  // namespace fieldlab
