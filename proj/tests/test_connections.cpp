#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fieldlab/connections.hpp"
#include "fieldlab/parse.hpp"

using namespace fieldlab;

namespace {

ChartPtr scalar_chart(int n, int m) {
  FiberGroup y;
  y.name = "y";
  y.count = m;
  return BundleChart::create(n, {y});
}

ChartPtr sheet_chart() {
  FiberGroup y;
  y.name = "y";
  y.count = 1;
  FiberGroup h;
  h.name = "h";
  h.sym2 = true;
  h.momentum = "q";
  return BundleChart::create(2, {y, h});
}

Valuation rand_point(std::mt19937_64& rng, const Layer& layer) {
  std::uniform_real_distribution<double> dist(-1.5, 1.5);
  Valuation at;
  for (const auto& c : layer.coords) at[c] = dist(rng);
  return at;
}

}  // namespace

TEST_CASE("trivial and semiholonomic lifts") {
  auto chart = scalar_chart(2, 1);
  auto layer = chart->layer_velocity();
  ConnectionCoeffs zero(Formalism::LagrangianZ, layer);
  auto h = projector_from_coeffs(zero);
  // only the base diagonal survives
  for (int a = 0; a < layer->dim(); ++a) {
    for (const auto& [b, v] : h.rows[a]) {
      CHECK(a == b);
      CHECK(a < 2);
      CHECK(v.const_value() == doctest::Approx(1.0));
    }
  }

  std::mt19937_64 rng(11);
  Valuation at = rand_point(rng, *layer);
  Eigen::MatrixXd M = lift_matrix_at(zero, at);
  CHECK(M.topRows(2).isApprox(Eigen::MatrixXd::Identity(2, 2)));
  CHECK(M.bottomRows(layer->dim() - 2).norm() == 0.0);

  // Gamma = z: zero defect; Gamma = z + 1: all ones
  ConnectionCoeffs holo(Formalism::LagrangianZ, layer);
  ConnectionCoeffs off(Formalism::LagrangianZ, layer);
  for (int mu = 0; mu < 2; ++mu) {
    holo.set(fiber_coord(0), mu, kcoord(jet_coord(0, mu)));
    off.set(fiber_coord(0), mu, kcoord(jet_coord(0, mu)) + 1.0);
  }
  for (double d : semiholonomic_defect(holo, at)) CHECK(d == 0.0);
  for (double d : semiholonomic_defect(off, at)) CHECK(d == doctest::Approx(1.0));
  for (double d : semiholonomic_defect_via_pairing(holo, at))
    CHECK(std::abs(d) <= 1e-12);
}

TEST_CASE("pairing tensor reproduces the direct defect") {
  auto chart = scalar_chart(2, 2);
  auto layer = chart->layer_velocity();
  ChartPtr cc = chart;
  std::mt19937_64 rng(13);
  for (int trial = 0; trial < 5; ++trial) {
    ConnectionCoeffs c(Formalism::LagrangianZ, layer);
    std::uniform_real_distribution<double> coeff(-2.0, 2.0);
    for (int i = 0; i < 2; ++i)
      for (int mu = 0; mu < 2; ++mu) {
        Expr g = kconst(coeff(rng)) + kconst(coeff(rng)) * kcoord(fiber_coord(i)) +
                 kconst(coeff(rng)) * kcoord(jet_coord(1 - i, mu));
        c.set(fiber_coord(i), mu, g);
        // jet rows should not influence the defect
        c.set(jet_coord(i, mu), mu, kconst(coeff(rng)));
      }
    Valuation at = rand_point(rng, *layer);
    auto direct = semiholonomic_defect(c, at);
    auto paired = semiholonomic_defect_via_pairing(c, at);
    REQUIRE(direct.size() == paired.size());
    for (std::size_t k = 0; k < direct.size(); ++k)
      CHECK(paired[k] == doctest::Approx(direct[k]).epsilon(1e-10));
  }
}

TEST_CASE("projectors are idempotent for random coefficients") {
  auto chart = scalar_chart(2, 1);
  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  for (auto layer : {chart->layer_velocity(), chart->layer_pairing()}) {
    ConnectionCoeffs c(Formalism::UnifiedW0, layer);
    for (int t = 2; t < layer->dim(); ++t)
      for (int mu = 0; mu < 2; ++mu)
        c.at(t, mu) = kconst(coeff(rng)) +
                      kconst(coeff(rng)) * kcoord(layer->coords[t]) *
                          kcoord(base_coord(mu));
    CHECK(is_idempotent(projector_from_coeffs(c)));
  }
}

TEST_CASE("worldsheet momentum-space coefficients solve the field equation") {
  auto chart = sheet_chart();
  ChartPtr cc = chart;
  // image of the fiber derivative: no metric momenta, energy coordinate fixed
  std::vector<CoordId> coords = {base_coord(0), base_coord(1)};
  for (int i = 0; i < 4; ++i) coords.push_back(fiber_coord(i));
  coords.push_back(momentum_pmu(0, 0));
  coords.push_back(momentum_pmu(0, 1));
  auto layer = chart->make_layer("momentum_image", coords);

  Expr ptilde = parse_expr(
      "(1/(2*sqrt(-det2(h))))*sum(e,0,1,sum(f,0,1,h[e,f]*py[0,e]*py[0,f]))",
      cc);
  HamiltonianData hd{cc, layer, neg(ptilde)};
  FormX omega = hamiltonian_omega(hd);

  ConnectionCoeffs c(Formalism::HamiltonianZstar, layer);
  for (int mu = 0; mu < 2; ++mu)
    c.set(fiber_coord(0), mu,
          parse_expr("-(1/sqrt(-det2(h)))*sum(e,0,1,h[e," + std::to_string(mu) +
                         "]*py[0,e])",
                     cc));

  FormX diffm = contract_operator(omega, projector_from_coeffs(c)) - omega;
  EquivOptions o;
  o.tol = 1e-9;
  int metric_rows = 0;
  for (const auto& [idx, coeffv] : diffm.terms()) {
    bool metric_row = false;
    for (int pos : idx) {
      const CoordId& id = layer->coords[pos];
      if (id.space == Space::Fiber && layer->position(id) >= 3) metric_row = true;
    }
    if (!metric_row) {
      CHECK(equiv_zero(coeffv, o));
    } else {
      ++metric_rows;
      // unknown-free rows: the residual is minus the metric gradient of the
      // energy function, the step-two constraint functions
      int flat = 0;
      for (int pos : idx)
        if (layer->coords[pos].space == Space::Fiber) flat = layer->coords[pos].a;
      CHECK(equiv_probabilistic(coeffv, neg(diff(ptilde, fiber_coord(flat))), o));
    }
  }
  CHECK(metric_rows == 3);
}

TEST_CASE("projectability along fibers") {
  auto chart = scalar_chart(2, 1);
  auto layer = chart->layer_velocity();
  ChartPtr cc = chart;
  ConnectionCoeffs flat(Formalism::LagrangianZ, layer);
  ConnectionCoeffs steep(Formalism::LagrangianZ, layer);
  for (int mu = 0; mu < 2; ++mu) {
    flat.set(fiber_coord(0), mu, parse_expr("x[0]*y[0] + 2", cc));
    steep.set(fiber_coord(0), mu, kcoord(jet_coord(0, mu)));
  }

  std::vector<CoordId> varying = {jet_coord(0, 0), jet_coord(0, 1)};
  std::mt19937_64 rng(19);
  Valuation base = rand_point(rng, *layer);
  std::vector<Valuation> samples;
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int k = 0; k < 6; ++k) {
    Valuation s = base;
    for (const auto& id : varying) s[id] = dist(rng);
    samples.push_back(std::move(s));
  }
  CHECK(projectability_defect(flat, samples, varying) == 0.0);
  CHECK(projectability_defect(steep, samples, varying) > 0.1);
  CHECK(projectable_symbolic(flat, varying));
  CHECK_FALSE(projectable_symbolic(steep, varying));

  // disagreeing on a projected coordinate is an input error
  std::vector<Valuation> bad = samples;
  bad.back()[fiber_coord(0)] += 0.5;
  CHECK_THROWS_AS(projectability_defect(flat, bad, varying), Error);
}

TEST_CASE("beta section") {
  auto chart = scalar_chart(2, 2);
  auto layer = chart->layer_velocity();
  ConnectionCoeffs c(Formalism::LagrangianZ, layer);
  for (int i = 0; i < 2; ++i)
    for (int mu = 0; mu < 2; ++mu) c.set(fiber_coord(i), mu, kconst(3.0));

  std::mt19937_64 rng(23);
  Valuation z0 = rand_point(rng, *layer);
  z0[jet_coord(1, 1)] = 7.0;
  Valuation b = beta_point(c, z0);
  CHECK(b.at(jet_coord(1, 1)) == doctest::Approx(3.0));
  for (int i = 0; i < 2; ++i)
    for (int mu = 0; mu < 2; ++mu)
      CHECK(b.at(jet_coord(i, mu)) == doctest::Approx(3.0));
  CHECK(b.at(fiber_coord(0)) == doctest::Approx(z0.at(fiber_coord(0))));
  CHECK(b.at(base_coord(1)) == doctest::Approx(z0.at(base_coord(1))));

  // idempotent, and semiholonomic at the output
  Valuation b2 = beta_point(c, b);
  for (const auto& [id, v] : b) CHECK(b2.at(id) == doctest::Approx(v));
  for (double d : semiholonomic_defect(c, b)) CHECK(std::abs(d) <= 1e-12);

  // fiber-varying coefficients are rejected
  ConnectionCoeffs steep(Formalism::LagrangianZ, layer);
  for (int i = 0; i < 2; ++i)
    for (int mu = 0; mu < 2; ++mu)
      steep.set(fiber_coord(i), mu, kcoord(jet_coord(i, mu)) + 1.0);
  CHECK_THROWS_AS(beta_point(steep, z0), Error);

  // with a point fiber the check is skipped and substitution is direct
  Valuation ident = beta_point(steep, z0, {});
  for (int i = 0; i < 2; ++i)
    for (int mu = 0; mu < 2; ++mu)
      CHECK(ident.at(jet_coord(i, mu)) ==
            doctest::Approx(z0.at(jet_coord(i, mu)) + 1.0));
}

TEST_CASE("vertical flow limit agrees with direct substitution") {
  auto chart = scalar_chart(2, 1);
  auto layer = chart->layer_velocity();
  std::mt19937_64 rng(29);
  std::uniform_real_distribution<double> coeff(-1.5, 1.5);
  for (int trial = 0; trial < 20; ++trial) {
    ConnectionCoeffs c(Formalism::LagrangianZ, layer);
    for (int mu = 0; mu < 2; ++mu)
      c.set(fiber_coord(0), mu,
            kconst(coeff(rng)) + kconst(coeff(rng)) * kcoord(base_coord(0)) +
                kconst(coeff(rng)) * ipow(kcoord(fiber_coord(0)), 2));
    Valuation z0 = rand_point(rng, *layer);
    Valuation direct = beta_point(c, z0);
    Valuation limit = beta_alpha_limit(c, z0);
    for (int mu = 0; mu < 2; ++mu)
      CHECK(std::abs(limit.at(jet_coord(0, mu)) -
                     direct.at(jet_coord(0, mu))) <= 1e-9);
  }
}

TEST_CASE("tangency along constraint sets") {
  auto chart = scalar_chart(2, 1);
  ChartPtr cc = chart;
  auto pairing = chart->layer_pairing();
  Expr L = parse_expr("(1/2)*sum(u,0,1,y[0,u]^2)", cc);
  auto th = make_theory(cc, L);
  Expr H0 = coupling_hamiltonian(th);

  ConstraintSet cs;
  cs.layer = pairing;
  cs.add(H0, Provenance::PrimarySymbolic);

  // empty set: defect vanishes regardless of coefficients
  ConstraintSet none;
  none.layer = pairing;
  ConnectionCoeffs any(Formalism::UnifiedW0, pairing);
  std::mt19937_64 rng(31);
  Valuation pt = rand_point(rng, *pairing);
  CHECK(submanifold_tangency_defect(any, none, pt) == 0.0);

  // coefficients: A = z, D = 0, random C, B chosen so the lift kills H0
  ConnectionCoeffs c(Formalism::UnifiedW0, pairing);
  std::uniform_real_distribution<double> coeff(-1.5, 1.5);
  std::vector<std::vector<Expr>> C(2, std::vector<Expr>(2));
  for (int mu = 0; mu < 2; ++mu) {
    c.set(fiber_coord(0), mu, kcoord(jet_coord(0, mu)));
    for (int nu = 0; nu < 2; ++nu) {
      C[mu][nu] = kconst(coeff(rng));
      c.set(momentum_pmu(0, nu), mu, C[mu][nu]);
    }
  }
  for (int mu = 0; mu < 2; ++mu) {
    Expr b = diff(L, base_coord(mu)) +
             kcoord(jet_coord(0, mu)) * diff(L, fiber_coord(0));
    for (int nu = 0; nu < 2; ++nu)
      b = b - C[mu][nu] * kcoord(jet_coord(0, nu));
    c.set(momentum_p(), mu, b);
  }

  // a point with H0 = 0
  Valuation on = rand_point(rng, *pairing);
  EvalCache cache;
  double pz = 0.0;
  for (int nu = 0; nu < 2; ++nu)
    pz += on.at(momentum_pmu(0, nu)) * on.at(jet_coord(0, nu));
  on[momentum_p()] = cache.eval(L, on) - pz;
  CHECK(submanifold_tangency_defect(c, cs, on) <= 1e-12);

  // violating the energy balance produces a positive defect
  ConnectionCoeffs wrong = c;
  wrong.set(momentum_p(), 0, wrong.of(momentum_p(), 0) + 1.0);
  CHECK(submanifold_tangency_defect(wrong, cs, on) >= 0.5);

  // off-constraint points are refused
  Valuation offpt = on;
  offpt[momentum_p()] += 1.0;
  CHECK_THROWS_AS(submanifold_tangency_defect(c, cs, offpt), Error);

  // momentum constraints with the compatibility choice for C and D
  ConstraintSet wset;
  wset.layer = pairing;
  for (int nu = 0; nu < 2; ++nu)
    wset.add(kcoord(momentum_pmu(0, nu)) - diff(L, jet_coord(0, nu)),
             Provenance::PrimarySymbolic);
  wset.add(H0, Provenance::PrimarySymbolic);
  // free field: momentum rows need C^k_mu = D^k_mu; take both random equal
  ConnectionCoeffs cd(Formalism::UnifiedW0, pairing);
  std::vector<std::vector<Expr>> D(2, std::vector<Expr>(2));
  for (int mu = 0; mu < 2; ++mu) {
    cd.set(fiber_coord(0), mu, kcoord(jet_coord(0, mu)));
    for (int nu = 0; nu < 2; ++nu) {
      D[mu][nu] = kconst(coeff(rng));
      cd.set(jet_coord(0, nu), mu, D[mu][nu]);
      cd.set(momentum_pmu(0, nu), mu, D[mu][nu]);
    }
  }
  for (int mu = 0; mu < 2; ++mu) {
    Expr b = kcoord(jet_coord(0, mu)) * diff(L, fiber_coord(0));
    for (int nu = 0; nu < 2; ++nu)
      b = b - D[mu][nu] * kcoord(jet_coord(0, nu));
    cd.set(momentum_p(), mu, b);
  }
  Valuation w1 = rand_point(rng, *pairing);
  for (int nu = 0; nu < 2; ++nu)
    w1[momentum_pmu(0, nu)] = w1.at(jet_coord(0, nu));
  pz = 0.0;
  for (int nu = 0; nu < 2; ++nu)
    pz += w1.at(momentum_pmu(0, nu)) * w1.at(jet_coord(0, nu));
  w1[momentum_p()] = eval(L, w1) - pz;
  CHECK(submanifold_tangency_defect(cd, wset, w1) <= 1e-12);
}

TEST_CASE("base projection composed with the lift is the identity") {
  auto chart = scalar_chart(2, 2);
  auto layer = chart->layer_velocity();
  std::mt19937_64 rng(37);
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  for (int trial = 0; trial < 10; ++trial) {
    ConnectionCoeffs c(Formalism::LagrangianZ, layer);
    for (int t = 2; t < layer->dim(); ++t)
      for (int mu = 0; mu < 2; ++mu)
        c.at(t, mu) = kconst(coeff(rng)) * kcoord(layer->coords[t]);
    Valuation at = rand_point(rng, *layer);
    Eigen::MatrixXd M = lift_matrix_at(c, at);
    CHECK((M.topRows(2) - Eigen::MatrixXd::Identity(2, 2)).norm() == 0.0);
  }
}

TEST_CASE("momentum-space coefficients transported to the velocity layer") {
  auto chart = sheet_chart();
  ChartPtr cc = chart;
  Expr L = parse_expr(
      "-(1/2)*sqrt(-det2(h))*sum(e,0,1,sum(f,0,1,hinv[e,f]*y[0,e]*y[0,f]))",
      cc);
  auto th = make_theory(cc, L);

  auto reduced = chart->layer_reduced_dual();
  ConnectionCoeffs ham(Formalism::HamiltonianZstar, reduced);
  for (int mu = 0; mu < 2; ++mu)
    ham.set(fiber_coord(0), mu,
            parse_expr("-(1/sqrt(-det2(h)))*sum(e,0,1,h[e," + std::to_string(mu) +
                           "]*py[0,e])",
                       cc));

  ConnectionCoeffs lag = transport_reduced_to_velocity(ham, th);

  // the composed Christoffel symbols are the field velocities themselves
  EquivOptions o;
  o.tol = 1e-9;
  int yrow = lag.layer->position(fiber_coord(0));
  for (int mu = 0; mu < 2; ++mu)
    CHECK(equiv_probabilistic(lag.at(yrow, mu), kcoord(jet_coord(0, mu)), o));

  // constant along the fiber-derivative fibers (the metric velocities)
  std::vector<CoordId> fiber;
  for (int flat = 1; flat <= 3; ++flat)
    for (int mu = 0; mu < 2; ++mu) fiber.push_back(jet_coord(flat, mu));
  CHECK(projectable_symbolic(lag, fiber));

  std::mt19937_64 rng(41);
  Valuation base = rand_point(rng, *lag.layer);
  base[fiber_coord(1)] = -1.2;
  base[fiber_coord(2)] = 0.2;
  base[fiber_coord(3)] = 0.9;
  std::vector<Valuation> samples;
  std::uniform_real_distribution<double> dist(-2.0, 2.0);
  for (int k = 0; k < 6; ++k) {
    Valuation s = base;
    for (const auto& id : fiber) s[id] = dist(rng);
    samples.push_back(std::move(s));
  }
  CHECK(projectability_defect(lag, samples, fiber) <= 1e-12);

  // the transported connection is semiholonomic in the field directions
  auto d = semiholonomic_defect(lag, base);
  CHECK(std::abs(d[0]) <= 1e-12);
  CHECK(std::abs(d[1]) <= 1e-12);
}
