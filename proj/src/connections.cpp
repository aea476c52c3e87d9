#include "fieldlab/connections.hpp"

#include <cmath>
#include <random>

namespace fieldlab {

LinearOperator<Expr> projector_from_coeffs(const ConnectionCoeffs& c) {
  LinearOperator<Expr> h(c.layer);
  int n = c.n();
  for (int mu = 0; mu < n; ++mu) {
    h.add_entry(mu, mu, kconst(1.0));
    for (int t = n; t < c.layer->dim(); ++t) {
      const Expr& g = c.at(t, mu);
      if (!g.is_zero()) h.add_entry(t, mu, g);
    }
  }
  return h;
}

Eigen::MatrixXd lift_matrix_at(const ConnectionCoeffs& c, const Valuation& at) {
  int dim = c.layer->dim();
  int n = c.n();
  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(dim, n);
  EvalCache cache;
  for (int mu = 0; mu < n; ++mu) {
    M(mu, mu) = 1.0;
    for (int t = n; t < dim; ++t) {
      const Expr& g = c.at(t, mu);
      if (!g.is_zero()) M(t, mu) = cache.eval(g, at);
    }
  }
  return M;
}

std::vector<double> semiholonomic_defect(const ConnectionCoeffs& c,
                                         const Valuation& at) {
  if (c.formalism != Formalism::LagrangianZ)
    fail(ErrorKind::BadInput,
         "semiholonomic defect needs velocity-layer coefficients");
  const BundleChart& chart = *c.layer->chart;
  int n = chart.n(), m = chart.m();
  std::vector<double> out;
  out.reserve((std::size_t)m * n);
  EvalCache cache;
  for (int i = 0; i < m; ++i) {
    int row = c.layer->position(fiber_coord(i));
    for (int mu = 0; mu < n; ++mu) {
      double gamma = cache.eval(c.at(row, mu), at);
      out.push_back(gamma - at.at(jet_coord(i, mu)));
    }
  }
  return out;
}

std::vector<double> semiholonomic_defect_via_pairing(const ConnectionCoeffs& c,
                                                     const Valuation& at) {
  if (c.formalism != Formalism::LagrangianZ)
    fail(ErrorKind::BadInput,
         "semiholonomic defect needs velocity-layer coefficients");
  const BundleChart& chart = *c.layer->chart;
  int n = chart.n(), m = chart.m();
  Eigen::MatrixXd lifts = lift_matrix_at(c, at);
  std::vector<double> out;
  out.reserve((std::size_t)m * n);
  for (int i = 0; i < m; ++i) {
    FormX alpha(c.layer, 1);
    alpha.add_term({c.layer->position(fiber_coord(i))}, kconst(1.0));
    for (int mu = 0; mu < n; ++mu)
      alpha.add_term({mu}, neg(kcoord(jet_coord(i, mu))));
    for (int nu = 0; nu < n; ++nu) {
      FormX w = wedge(alpha, volume_contracted(c.layer, nu));
      out.push_back(form_on_vectors(evaluate_form(w, at), lifts));
    }
  }
  return out;
}

double projectability_defect(const ConnectionCoeffs& c,
                             const std::vector<Valuation>& fiber_samples,
                             const std::vector<CoordId>& varying) {
  if (fiber_samples.empty())
    fail(ErrorKind::BadInput, "need at least one fiber sample");
  auto is_varying = [&](const CoordId& id) {
    for (const auto& v : varying)
      if (v == id) return true;
    return false;
  };
  const Valuation& first = fiber_samples.front();
  for (const auto& s : fiber_samples)
    for (const auto& id : c.layer->coords)
      if (!is_varying(id) && std::abs(s.at(id) - first.at(id)) > 1e-12)
        fail(ErrorKind::SampleMismatch,
             "samples disagree on a projected coordinate");

  int n = c.n();
  double defect = 0.0;
  std::vector<EvalCache> caches(fiber_samples.size());
  for (int t = n; t < c.layer->dim(); ++t) {
    if (c.layer->coords[t].space != Space::Fiber) continue;
    for (int mu = 0; mu < n; ++mu) {
      const Expr& g = c.at(t, mu);
      double base = caches[0].eval(g, fiber_samples[0]);
      for (std::size_t k = 1; k < fiber_samples.size(); ++k)
        defect = std::max(
            defect, std::abs(caches[k].eval(g, fiber_samples[k]) - base));
    }
  }
  return defect;
}

bool projectable_symbolic(const ConnectionCoeffs& c,
                          const std::vector<CoordId>& fiber_coords) {
  int n = c.n();
  for (int t = n; t < c.layer->dim(); ++t) {
    if (c.layer->coords[t].space != Space::Fiber) continue;
    for (int mu = 0; mu < n; ++mu)
      for (const auto& fc : fiber_coords)
        if (depends_on(c.at(t, mu), fc)) return false;
  }
  return true;
}

Valuation beta_point(const ConnectionCoeffs& c, const Valuation& z0,
                     const std::vector<CoordId>& fiber_coords, double tol,
                     unsigned seed) {
  if (c.formalism != Formalism::LagrangianZ)
    fail(ErrorKind::BadInput, "beta needs velocity-layer coefficients");
  const BundleChart& chart = *c.layer->chart;
  int n = chart.n(), m = chart.m();

  if (!fiber_coords.empty()) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<Valuation> samples{z0};
    for (int k = 0; k < 8; ++k) {
      Valuation s = z0;
      for (const auto& id : fiber_coords) s[id] = dist(rng);
      samples.push_back(std::move(s));
    }
    if (projectability_defect(c, samples, fiber_coords) > tol)
      fail(ErrorKind::NotProjectable,
           "coefficients vary along the sampled fiber");
  }

  Valuation out = z0;
  EvalCache cache;
  for (int i = 0; i < m; ++i) {
    int row = c.layer->position(fiber_coord(i));
    for (int mu = 0; mu < n; ++mu)
      out[jet_coord(i, mu)] = cache.eval(c.at(row, mu), z0);
  }
  return out;
}

Valuation beta_point(const ConnectionCoeffs& c, const Valuation& z0) {
  const BundleChart& chart = *c.layer->chart;
  std::vector<CoordId> all;
  for (int i = 0; i < chart.m(); ++i)
    for (int mu = 0; mu < chart.n(); ++mu) all.push_back(jet_coord(i, mu));
  return beta_point(c, z0, all);
}

Valuation beta_alpha_limit(const ConnectionCoeffs& c, const Valuation& z0,
                           double horizon, double step) {
  if (c.formalism != Formalism::LagrangianZ)
    fail(ErrorKind::BadInput, "beta needs velocity-layer coefficients");
  const BundleChart& chart = *c.layer->chart;
  int n = chart.n(), m = chart.m();

  struct Slot {
    CoordId z;
    int row, mu;
  };
  std::vector<Slot> slots;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      slots.push_back({jet_coord(i, mu), c.layer->position(fiber_coord(i)), mu});

  Valuation state = z0;
  auto rhs = [&](const Valuation& s) {
    EvalCache cache;
    std::vector<double> v(slots.size());
    for (std::size_t k = 0; k < slots.size(); ++k)
      v[k] = cache.eval(c.at(slots[k].row, slots[k].mu), s) - s.at(slots[k].z);
    return v;
  };

  int steps = (int)std::lround(horizon / step);
  for (int it = 0; it < steps; ++it) {
    auto k1 = rhs(state);
    Valuation s2 = state;
    for (std::size_t k = 0; k < slots.size(); ++k)
      s2[slots[k].z] += 0.5 * step * k1[k];
    auto k2 = rhs(s2);
    Valuation s3 = state;
    for (std::size_t k = 0; k < slots.size(); ++k)
      s3[slots[k].z] += 0.5 * step * k2[k];
    auto k3 = rhs(s3);
    Valuation s4 = state;
    for (std::size_t k = 0; k < slots.size(); ++k)
      s4[slots[k].z] += step * k3[k];
    auto k4 = rhs(s4);
    for (std::size_t k = 0; k < slots.size(); ++k) {
      state[slots[k].z] +=
          step / 6.0 * (k1[k] + 2.0 * k2[k] + 2.0 * k3[k] + k4[k]);
      if (!std::isfinite(state[slots[k].z]))
        fail(ErrorKind::NonFiniteState, "vertical flow diverged");
    }
  }
  return state;
}

void ConstraintSet::add(Expr fn, Provenance tag) {
  entries.push_back({std::move(fn), tag});
  grads_.clear();
}

const std::vector<std::vector<Expr>>& ConstraintSet::gradients() const {
  if (grads_.size() != entries.size()) {
    grads_.clear();
    grads_.reserve(entries.size());
    for (const auto& e : entries) {
      std::vector<Expr> row;
      row.reserve(layer->dim());
      for (const auto& id : layer->coords) row.push_back(diff(e.fn, id));
      grads_.push_back(std::move(row));
    }
  }
  return grads_;
}

double ConstraintSet::scaled_residual(const Valuation& at) const {
  const auto& grads = gradients();
  EvalCache cache;
  double worst = 0.0;
  for (std::size_t e = 0; e < entries.size(); ++e) {
    double val = std::abs(cache.eval(entries[e].fn, at));
    double g2 = 0.0;
    for (const auto& d : grads[e]) {
      double gv = cache.eval(d, at);
      g2 += gv * gv;
    }
    worst = std::max(worst, val / std::max(1.0, std::sqrt(g2)));
  }
  return worst;
}

double submanifold_tangency_defect(const ConnectionCoeffs& c,
                                   const ConstraintSet& cs,
                                   const Valuation& at) {
  if (cs.empty()) return 0.0;
  if (cs.layer != c.layer)
    fail(ErrorKind::LayerMismatch,
         "constraints live on a different layer than the coefficients");
  if (!cs.satisfied(at))
    fail(ErrorKind::PointOffConstraint, "point violates the constraint set");

  const auto& grads = cs.gradients();
  int n = c.n();
  EvalCache cache;
  double defect = 0.0;
  for (const auto& row : grads) {
    for (int mu = 0; mu < n; ++mu) {
      double v = cache.eval(row[mu], at);
      for (int t = n; t < c.layer->dim(); ++t) {
        const Expr& g = c.at(t, mu);
        if (!g.is_zero()) v += cache.eval(g, at) * cache.eval(row[t], at);
      }
      defect = std::max(defect, std::abs(v));
    }
  }
  return defect;
}

ConnectionCoeffs transport_reduced_to_velocity(const ConnectionCoeffs& ham,
                                               const LagrangianTheory& th) {
  LayerPtr reduced = th.chart->layer_reduced_dual();
  if (ham.layer != reduced)
    fail(ErrorKind::LayerMismatch,
         "transport expects reduced-dual coefficients");
  const BundleChart& chart = *th.chart;
  int n = chart.n(), m = chart.m();

  std::unordered_map<CoordId, Expr, CoordIdHash> repl;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      repl[momentum_pmu(i, mu)] = th.dLdz[(std::size_t)i * n + mu];

  ConnectionCoeffs out(Formalism::LagrangianZ, chart.layer_velocity());
  for (int i = 0; i < m; ++i) {
    int src = reduced->position(fiber_coord(i));
    int dst = out.layer->position(fiber_coord(i));
    for (int mu = 0; mu < n; ++mu)
      out.at(dst, mu) = substitute(ham.at(src, mu), repl);
  }
  return out;
}

}  // namespace fieldlab
