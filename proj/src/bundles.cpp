#include "fieldlab/bundles.hpp"

#include "fieldlab/errors.hpp"

namespace fieldlab {

LagrangianTheory make_theory(ChartPtr chart, Expr L) {
  LagrangianTheory th;
  th.chart = std::move(chart);
  for (const auto& c : coords_of(L)) {
    if (c.space != Space::Base && c.space != Space::Fiber && c.space != Space::Jet)
      fail(ErrorKind::BadInput,
           "the Lagrangian may depend only on velocity-layer coordinates");
  }
  th.L = std::move(L);
  int n = th.chart->n(), m = th.chart->m();
  th.dLdz.resize(m * n);
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      th.dLdz[i * n + mu] = diff(th.L, jet_coord(i, mu));
  th.dLdy.resize(m);
  for (int i = 0; i < m; ++i) th.dLdy[i] = diff(th.L, fiber_coord(i));
  return th;
}

std::vector<Expr> velocity_hessian(const LagrangianTheory& th) {
  int n = th.chart->n(), m = th.chart->m();
  int dim = m * n;
  std::vector<Expr> H(dim * dim);
  for (int a = 0; a < dim; ++a) {
    int i = a / n, mu = a % n;
    (void)i;
    (void)mu;
    for (int b = 0; b < dim; ++b) {
      int j = b / n, nu = b % n;
      H[a * dim + b] = diff(th.dLdz[a], jet_coord(j, nu));
    }
  }
  return H;
}

Eigen::MatrixXd velocity_hessian_at(const LagrangianTheory& th, const Valuation& at) {
  int dim = th.chart->n() * th.chart->m();
  std::vector<Expr> H = velocity_hessian(th);
  Eigen::MatrixXd M(dim, dim);
  EvalCache cache;
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) M(a, b) = cache.eval(H[a * dim + b], at);
  return M;
}

bool is_regular_at(const LagrangianTheory& th, const Valuation& at, double tol) {
  Eigen::MatrixXd M = velocity_hessian_at(th, at);
  if (M.rows() == 0) return true;
  RankInfo info = numerical_rank(M, tol);
  return info.rank == M.rows();
}

FormX theory_theta(const LagrangianTheory& th) {
  LayerPtr layer = th.chart->layer_velocity();
  FormX dL = d_of_function(th.L, layer);
  FormX theta = vertical_pairing(dL);
  return theta + scale(th.L, volume_form(layer));
}

FormX theory_omega(const LagrangianTheory& th) { return -exterior_d(theory_theta(th)); }

FormX dual_theta(const ChartPtr& chart) {
  LayerPtr layer = chart->layer_full_dual();
  int n = chart->n(), m = chart->m();
  FormX theta = scale(kcoord(momentum_p()), volume_form(layer));
  for (int i = 0; i < m; ++i) {
    FormX dy(layer, 1);
    dy.add_term({layer->position(fiber_coord(i))}, kconst(1.0));
    for (int mu = 0; mu < n; ++mu) {
      theta = theta + scale(kcoord(momentum_pmu(i, mu)),
                            wedge(dy, volume_contracted(layer, mu)));
    }
  }
  return theta;
}

FormX dual_omega(const ChartPtr& chart) { return -exterior_d(dual_theta(chart)); }

std::vector<Expr> full_legendre(const LagrangianTheory& th) {
  LayerPtr dual = th.chart->layer_full_dual();
  int n = th.chart->n(), m = th.chart->m();
  std::vector<Expr> images(dual->dim());
  for (int mu = 0; mu < n; ++mu)
    images[dual->position(base_coord(mu))] = kcoord(base_coord(mu));
  for (int i = 0; i < m; ++i)
    images[dual->position(fiber_coord(i))] = kcoord(fiber_coord(i));
  Expr zLz;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      zLz = zLz + kcoord(jet_coord(i, mu)) * th.dLdz[i * n + mu];
  images[dual->position(momentum_p())] = th.L - zLz;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      images[dual->position(momentum_pmu(i, mu))] = th.dLdz[i * n + mu];
  return images;
}

std::vector<Expr> reduced_legendre(const LagrangianTheory& th) {
  LayerPtr dual = th.chart->layer_reduced_dual();
  int n = th.chart->n(), m = th.chart->m();
  std::vector<Expr> images(dual->dim());
  for (int mu = 0; mu < n; ++mu)
    images[dual->position(base_coord(mu))] = kcoord(base_coord(mu));
  for (int i = 0; i < m; ++i)
    images[dual->position(fiber_coord(i))] = kcoord(fiber_coord(i));
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      images[dual->position(momentum_pmu(i, mu))] = th.dLdz[i * n + mu];
  return images;
}

Eigen::MatrixXd reduced_legendre_jacobian_at(const LagrangianTheory& th,
                                             const Valuation& at) {
  LayerPtr vel = th.chart->layer_velocity();
  std::vector<Expr> images = reduced_legendre(th);
  Eigen::MatrixXd J(images.size(), vel->dim());
  EvalCache cache;
  for (int r = 0; r < (int)images.size(); ++r)
    for (int c = 0; c < vel->dim(); ++c)
      J(r, c) = cache.eval(diff(images[r], vel->coords[c]), at);
  return J;
}

FormX hamiltonian_theta(const HamiltonianData& hd) {
  const LayerPtr& layer = hd.layer;
  FormX theta = scale(neg(hd.H), volume_form(layer));
  for (const auto& c : layer->coords) {
    if (c.space != Space::MomentumPmu) continue;
    int i = c.a, mu = c.b;
    FormX dy(layer, 1);
    dy.add_term({layer->position(fiber_coord(i))}, kconst(1.0));
    theta = theta +
            scale(kcoord(c), wedge(dy, volume_contracted(layer, mu)));
  }
  return theta;
}

FormX hamiltonian_omega(const HamiltonianData& hd) {
  return -exterior_d(hamiltonian_theta(hd));
}

Expr pairing_function(const ChartPtr& chart) {
  Expr phi = kcoord(momentum_p());
  int n = chart->n(), m = chart->m();
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      phi = phi + kcoord(momentum_pmu(i, mu)) * kcoord(jet_coord(i, mu));
  return phi;
}

Expr coupling_hamiltonian(const LagrangianTheory& th) {
  return pairing_function(th.chart) - th.L;
}

FormX pairing_theta(const ChartPtr& chart) {
  LayerPtr layer = chart->layer_pairing();
  int n = chart->n(), m = chart->m();
  FormX theta = scale(kcoord(momentum_p()), volume_form(layer));
  for (int i = 0; i < m; ++i) {
    FormX dy(layer, 1);
    dy.add_term({layer->position(fiber_coord(i))}, kconst(1.0));
    for (int mu = 0; mu < n; ++mu)
      theta = theta + scale(kcoord(momentum_pmu(i, mu)),
                            wedge(dy, volume_contracted(layer, mu)));
  }
  return theta;
}

FormX pairing_omega(const ChartPtr& chart) {
  return -exterior_d(pairing_theta(chart));
}

FormX coupling_omega(const LagrangianTheory& th) {
  LayerPtr layer = th.chart->layer_pairing();
  FormX omega = pairing_omega(th.chart);
  FormX dH0 = d_of_function(coupling_hamiltonian(th), layer);
  return omega + wedge(dH0, volume_form(layer));
}

std::vector<Expr> pairing_graph(const LagrangianTheory& th) {
  LayerPtr pair = th.chart->layer_pairing();
  int n = th.chart->n(), m = th.chart->m();
  std::vector<Expr> images(pair->dim());
  for (int mu = 0; mu < n; ++mu)
    images[pair->position(base_coord(mu))] = kcoord(base_coord(mu));
  for (int i = 0; i < m; ++i)
    images[pair->position(fiber_coord(i))] = kcoord(fiber_coord(i));
  Expr zLz;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      zLz = zLz + kcoord(jet_coord(i, mu)) * th.dLdz[i * n + mu];
  images[pair->position(momentum_p())] = th.L - zLz;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu) {
      images[pair->position(momentum_pmu(i, mu))] = th.dLdz[i * n + mu];
      images[pair->position(jet_coord(i, mu))] = kcoord(jet_coord(i, mu));
    }
  return images;
}

std::vector<Expr> momentum_residuals(const LagrangianTheory& th) {
  int n = th.chart->n(), m = th.chart->m();
  std::vector<Expr> out;
  out.reserve(m * n);
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      out.push_back(kcoord(momentum_pmu(i, mu)) - th.dLdz[i * n + mu]);
  return out;
}

Expr scalar_momentum_residual(const LagrangianTheory& th) {
  int n = th.chart->n(), m = th.chart->m();
  Expr zLz;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu)
      zLz = zLz + kcoord(jet_coord(i, mu)) * th.dLdz[i * n + mu];
  return kcoord(momentum_p()) - (th.L - zLz);
}

FormX restricted_coupling_omega(const LagrangianTheory& th) {
  return pullback(coupling_omega(th), th.chart->layer_velocity(),
                  pairing_graph(th));
}

std::optional<LegendreInverse> invert_quadratic_legendre(
    const LagrangianTheory& th, double tol) {
  int n = th.chart->n(), m = th.chart->m();
  int dim = m * n;
  std::vector<Expr> H = velocity_hessian(th);
  for (const auto& e : H)
    if (!e.is_const()) return std::nullopt;
  Eigen::MatrixXd Hm(dim, dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b) Hm(a, b) = H[a * dim + b].const_value();
  Eigen::FullPivLU<Eigen::MatrixXd> lu(Hm);
  lu.setThreshold(tol);
  if (!lu.isInvertible()) return std::nullopt;
  Eigen::MatrixXd Hinv = lu.inverse();
  // dL/dz at z = 0, an expression in (x, y)
  std::unordered_map<CoordId, Expr, CoordIdHash> zero_z;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu) zero_z[jet_coord(i, mu)] = Expr();
  std::vector<Expr> c(dim);
  for (int a = 0; a < dim; ++a) c[a] = substitute(th.dLdz[a], zero_z);
  LegendreInverse out;
  out.z_of_p.resize(dim);
  for (int a = 0; a < dim; ++a) {
    Expr z;
    for (int b = 0; b < dim; ++b) {
      int j = b / n, nu = b % n;
      Expr delta = kcoord(momentum_pmu(j, nu)) - c[b];
      z = z + kconst(Hinv(a, b)) * delta;
    }
    out.z_of_p[a] = z;
  }
  std::unordered_map<CoordId, Expr, CoordIdHash> z_sub;
  for (int a = 0; a < dim; ++a) {
    int i = a / n, mu = a % n;
    z_sub[jet_coord(i, mu)] = out.z_of_p[a];
  }
  Expr Pz;
  for (int a = 0; a < dim; ++a) {
    int i = a / n, mu = a % n;
    Pz = Pz + kcoord(momentum_pmu(i, mu)) * out.z_of_p[a];
  }
  out.H = Pz - substitute(th.L, z_sub);
  return out;
}

}  // namespace fieldlab
