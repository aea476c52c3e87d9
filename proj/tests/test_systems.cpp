#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "fieldlab/parse.hpp"
#include "fieldlab/systems.hpp"

using namespace fieldlab;

namespace {

ChartPtr scalar_chart(int n, int m) {
  FiberGroup y;
  y.name = "y";
  y.count = m;
  return BundleChart::create(n, {y});
}

LagrangianTheory free_field(int n = 2, int m = 1) {
  auto chart = scalar_chart(n, m);
  std::string src = "(1/2)*sum(i,0," + std::to_string(m - 1) + ",sum(u,0," +
                    std::to_string(n - 1) + ",y[i,u]^2))";
  return make_theory(chart, parse_expr(src, chart));
}

LagrangianTheory sheet_theory() {
  FiberGroup y;
  y.name = "y";
  y.count = 1;
  FiberGroup h;
  h.name = "h";
  h.sym2 = true;
  h.momentum = "q";
  auto chart = BundleChart::create(2, {y, h});
  std::string src =
      "-(1/2)*sqrt(-det2(h))*sum(e,0,1,sum(f,0,1,hinv[e,f]*y[0,e]*y[0,f]))";
  return make_theory(chart, parse_expr(src, chart));
}

Valuation rand_point(std::mt19937_64& rng, const Layer& layer, double lo = -1.5,
                     double hi = 1.5) {
  std::uniform_real_distribution<double> dist(lo, hi);
  Valuation at;
  for (const auto& c : layer.coords) at[c] = dist(rng);
  return at;
}

void clamp_sheet_point(Valuation& at) {
  at[fiber_coord(1)] = -1.0 - 0.3 * std::abs(at[fiber_coord(1)]);  // h00
  at[fiber_coord(2)] = 0.3 * at[fiber_coord(2)];                   // h01
  at[fiber_coord(3)] = 1.0 + 0.3 * std::abs(at[fiber_coord(3)]);   // h11
}

LagrangianTheory random_quadratic(std::mt19937_64& rng, int n, int m) {
  auto chart = scalar_chart(n, m);
  std::uniform_real_distribution<double> coeff(-1.5, 1.5);
  std::uniform_int_distribution<int> flip(0, 3);
  int dim = n * m;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(dim, dim);
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b <= a; ++b) A(a, b) = A(b, a) = coeff(rng);
  if (flip(rng) == 0) {
    A.row(dim - 1) = 0.5 * A.row(0);
    A.col(dim - 1) = 0.5 * A.col(0);
    A(dim - 1, dim - 1) = 0.25 * A(0, 0);
  }
  Expr L;
  for (int a = 0; a < dim; ++a)
    for (int b = 0; b < dim; ++b)
      L = L + kconst(0.5 * A(a, b)) * kcoord(jet_coord(a / n, a % n)) *
                  kcoord(jet_coord(b / n, b % n));
  for (int a = 0; a < dim; ++a)
    L = L + kconst(coeff(rng)) * kcoord(fiber_coord(a % m)) *
                kcoord(jet_coord(a / n, a % n));
  for (int i = 0; i < m; ++i)
    L = L + kconst(coeff(rng)) * ipow(kcoord(fiber_coord(i)), 2);
  return make_theory(chart, L);
}

// extends a velocity-layer point to the graph of the fiber derivative
Valuation graph_point(const LagrangianTheory& th, const Valuation& vel) {
  int n = th.chart->n(), m = th.chart->m();
  Valuation at = vel;
  EvalCache cache;
  double zLz = 0.0;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu) {
      double p = cache.eval(th.dLdz[i * n + mu], vel);
      at[momentum_pmu(i, mu)] = p;
      zLz += vel.at(jet_coord(i, mu)) * p;
    }
  at[momentum_p()] = cache.eval(th.L, vel) - zLz;
  return at;
}

double max_form_value(const FormX& w, const Valuation& at) {
  FormD num = evaluate_form(w, at);
  double worst = 0.0;
  for (const auto& [idx, c] : num.terms()) {
    (void)idx;
    worst = std::max(worst, std::abs(c));
  }
  return worst;
}

}  // namespace

TEST_CASE("velocity system of the free field pins holonomic lifts") {
  auto th = free_field();
  auto layer = th.chart->layer_velocity();
  auto tpl = lagrangian_system(th);
  CHECK(tpl.formalism() == Formalism::LagrangianZ);

  // every live row is a (fiber differential) ^ dx0 ^ dx1 coefficient
  for (const auto& r : tpl.rows()) {
    REQUIRE(r.tuple.size() == 3);
    CHECK(r.tuple[0] == 0);
    CHECK(r.tuple[1] == 1);
  }
  CHECK(tpl.rows().size() == 3);  // one velocity pair and one fiber

  for (const auto& r : tpl.rows()) {
    CoordId w = layer->coords[r.tuple[2]];
    if (w.space == Space::Jet) {
      // velocity rows force the lift of y to equal the jet coordinate
      CHECK(equiv_probabilistic(r.constant, kcoord(jet_coord(0, w.b))));
      REQUIRE(r.coeffs.size() == 1);
      const auto& [u, c] = *r.coeffs.begin();
      CHECK(tpl.columns()[u].target == fiber_coord(0));
      CHECK(tpl.columns()[u].mu == w.b);
      CHECK(equiv_probabilistic(c, kconst(-1.0)));
    } else {
      // the fiber row carries the divergence of the velocity lifts
      REQUIRE(w.space == Space::Fiber);
      CHECK(r.constant.is_zero());
      REQUIRE(r.coeffs.size() == 2);
      for (const auto& [u, c] : r.coeffs) {
        CHECK(tpl.columns()[u].target ==
              jet_coord(0, tpl.columns()[u].mu));
        CHECK(equiv_probabilistic(c, kconst(1.0)));
      }
    }
  }

  std::mt19937_64 rng(71);
  for (int trial = 0; trial < 5; ++trial) {
    auto pt = rand_point(rng, *layer);
    auto sys = tpl.assemble_at(pt);
    auto sol = solve_pointwise(sys);
    CHECK(sol.solvable);
    CHECK(sol.free_parameters == 3);
    for (int mu = 0; mu < 2; ++mu)
      CHECK(sol.solution[tpl.column_of(fiber_coord(0), mu)] ==
            doctest::Approx(pt.at(jet_coord(0, mu))).epsilon(1e-9));
    double trace = 0.0;
    for (int mu = 0; mu < 2; ++mu)
      trace += sol.solution[tpl.column_of(jet_coord(0, mu), mu)];
    CHECK(std::abs(trace) < 1e-9);
  }
}

TEST_CASE("one dimensional base reduces to the contact equation") {
  auto chart = scalar_chart(1, 1);
  auto th = make_theory(
      chart, parse_expr("(1/2)*y[0,0]^2 - (1/2)*y[0]^2", chart));
  auto layer = chart->layer_velocity();
  auto tpl = lagrangian_system(th);

  // two live rows: dt^dq and dt^dv coefficients of the contracted form
  REQUIRE(tpl.rows().size() == 2);
  for (const auto& r : tpl.rows()) {
    REQUIRE(r.tuple.size() == 2);
    CHECK(r.tuple[0] == 0);
  }

  std::mt19937_64 rng(72);
  for (int trial = 0; trial < 5; ++trial) {
    auto pt = rand_point(rng, *layer);
    auto sol = solve_pointwise(tpl.assemble_at(pt));
    CHECK(sol.solvable);
    CHECK(sol.free_parameters == 0);
    double a = sol.solution[tpl.column_of(fiber_coord(0), 0)];
    double c = sol.solution[tpl.column_of(jet_coord(0, 0), 0)];
    CHECK(a == doctest::Approx(pt.at(jet_coord(0, 0))).epsilon(1e-9));
    CHECK(c == doctest::Approx(-pt.at(fiber_coord(0))).epsilon(1e-9));

    // the solved lift is the kernel direction of the two-form with dt
    // component one, including the dt row the system leaves implicit
    VectorField<Expr> xi{layer, {}};
    xi.set(0, kconst(1.0));
    xi.set(layer->position(fiber_coord(0)), kconst(a));
    xi.set(layer->position(jet_coord(0, 0)), kconst(c));
    CHECK(max_form_value(contract_vector(theory_omega(th), xi), pt) < 1e-9);
  }
}

TEST_CASE("unified expansion reproduces the canonical momentum rows") {
  std::mt19937_64 rng(73);
  for (int rep = 0; rep < 3; ++rep) {
    LagrangianTheory th = rep == 0 ? free_field() : random_quadratic(rng, 2, 2);
    int n = th.chart->n(), m = th.chart->m();
    auto layer = th.chart->layer_pairing();
    auto tpl = unified_system(th);

    int zrows = 0, yrows = 0, prows = 0;
    for (const auto& r : tpl.rows()) {
      REQUIRE(r.tuple.size() == 3);
      CHECK(r.tuple[0] == 0);
      CHECK(r.tuple[1] == 1);
      CoordId w = layer->coords[r.tuple[2]];
      if (w.space == Space::Jet) {
        ++zrows;
        // unknown-free rows: the fiber derivative residuals
        CHECK(r.coeffs.empty());
        CHECK(equiv_probabilistic(
            r.constant,
            kcoord(momentum_pmu(w.a, w.b)) - th.dLdz[w.a * n + w.b]));
      } else if (w.space == Space::Fiber) {
        ++yrows;
        CHECK(equiv_probabilistic(r.constant, neg(th.dLdy[w.a])));
        REQUIRE((int)r.coeffs.size() == n);
        for (const auto& [u, c] : r.coeffs) {
          CHECK(tpl.columns()[u].target ==
                momentum_pmu(w.a, tpl.columns()[u].mu));
          CHECK(equiv_probabilistic(c, kconst(1.0)));
        }
      } else {
        REQUIRE(w.space == Space::MomentumPmu);
        ++prows;
        CHECK(equiv_probabilistic(r.constant, kcoord(jet_coord(w.a, w.b))));
        REQUIRE(r.coeffs.size() == 1);
        const auto& [u, c] = *r.coeffs.begin();
        CHECK(tpl.columns()[u].target == fiber_coord(w.a));
        CHECK(tpl.columns()[u].mu == w.b);
        CHECK(equiv_probabilistic(c, kconst(-1.0)));
      }
    }
    CHECK(zrows == n * m);
    CHECK(yrows == m);
    CHECK(prows == n * m);

    auto free_rows = tpl.unknown_free_rows();
    auto residuals = momentum_residuals(th);
    REQUIRE(free_rows.size() == residuals.size());
    // same set of functions, independent of row ordering
    for (const auto& f : free_rows) {
      bool matched = false;
      for (const auto& r : residuals)
        if (equiv_probabilistic(f, r)) {
          matched = true;
          break;
        }
      CHECK(matched);
    }
  }
}

TEST_CASE("solvability cuts out the fiber derivative graph") {
  auto th = free_field();
  auto tpl = unified_system(th);
  auto pair_layer = th.chart->layer_pairing();
  auto vel_layer = th.chart->layer_velocity();
  std::mt19937_64 rng(74);

  // generic momenta violate the unknown-free rows
  auto off = rand_point(rng, *pair_layer);
  off[momentum_pmu(0, 0)] = off.at(jet_coord(0, 0)) + 1.0;
  CHECK_FALSE(solve_pointwise(tpl.assemble_at(off)).solvable);

  ConstraintSet w1;
  w1.layer = pair_layer;
  for (Expr& r : momentum_residuals(th))
    w1.add(std::move(r), Provenance::PrimarySymbolic);
  ConstraintSet wbar1 = primary_constraints_unified(th);
  CHECK(wbar1.size() == 3);  // two momenta and the coupling function

  for (int trial = 0; trial < 5; ++trial) {
    auto vel = rand_point(rng, *vel_layer);
    auto pt = graph_point(th, vel);
    CHECK(wbar1.satisfied(pt));

    auto plain = solve_pointwise(tpl.assemble_at(pt));
    CHECK(plain.solvable);
    CHECK(plain.free_parameters == 9);

    // directions tangent to the graph couple velocity and momentum lifts
    auto sys = tpl.assemble_at(pt, wbar1);
    auto sol = solve_pointwise(sys);
    CHECK(sol.solvable);
    CHECK(sol.free_parameters == 3);
    for (int mu = 0; mu < 2; ++mu) {
      CHECK(sol.solution[tpl.column_of(fiber_coord(0), mu)] ==
            doctest::Approx(pt.at(jet_coord(0, mu))).epsilon(1e-9));
      // the energy lift balances the momentum lifts along the velocities
      double brow = sol.solution[tpl.column_of(momentum_p(), mu)];
      for (int nu = 0; nu < 2; ++nu)
        brow += pt.at(jet_coord(0, nu)) *
                sol.solution[tpl.column_of(momentum_pmu(0, nu), mu)];
      CHECK(std::abs(brow) < 1e-9);
    }
  }

  // tangency demands membership and a matching layer
  auto bad = rand_point(rng, *pair_layer);
  bad[momentum_pmu(0, 1)] = bad.at(jet_coord(0, 1)) + 2.0;
  CHECK_THROWS_AS((void)tpl.assemble_at(bad, wbar1), Error);
  ConstraintSet wrong;
  wrong.layer = vel_layer;
  wrong.add(kcoord(fiber_coord(0)), Provenance::PrimarySymbolic);
  auto on = graph_point(th, rand_point(rng, *vel_layer));
  CHECK_THROWS_AS((void)tpl.assemble_at(on, wrong), Error);
}

TEST_CASE("worldsheet spot check rejects the unified equation") {
  auto th = sheet_theory();
  auto vel_layer = th.chart->layer_velocity();
  auto tpl = unified_system(th);
  auto primaries = primary_constraints_unified(th);

  Valuation vel;
  for (int mu = 0; mu < 2; ++mu) vel[base_coord(mu)] = 0.0;
  for (int i = 0; i < 4; ++i) vel[fiber_coord(i)] = 0.0;
  vel[fiber_coord(1)] = -1.0;  // h00
  vel[fiber_coord(3)] = 1.0;   // h11
  for (int i = 0; i < 4; ++i)
    for (int mu = 0; mu < 2; ++mu) vel[jet_coord(i, mu)] = 0.3;
  vel[jet_coord(0, 0)] = 1.0;
  vel[jet_coord(0, 1)] = 2.0;

  auto pt = graph_point(th, vel);
  REQUIRE(primaries.satisfied(pt));
  auto sol = solve_pointwise(tpl.assemble_at(pt, primaries));
  CHECK_FALSE(sol.solvable);
  CHECK(sol.residual > 1e-6);

  // the velocity-layer system rejects the same jet point
  auto lag = lagrangian_system(th);
  auto lsol = solve_pointwise(lag.assemble_at(vel));
  CHECK_FALSE(lsol.solvable);
  CHECK(lsol.residual > 1e-6);

  // with the field velocities switched off both equations become solvable
  Valuation rest = vel;
  rest[jet_coord(0, 0)] = 0.0;
  rest[jet_coord(0, 1)] = 0.0;
  auto rpt = graph_point(th, rest);
  CHECK(solve_pointwise(tpl.assemble_at(rpt, primaries)).solvable);
  CHECK(solve_pointwise(lag.assemble_at(rest)).solvable);
}

TEST_CASE("tangency rows are directional derivatives") {
  auto th = free_field();
  auto layer = th.chart->layer_velocity();
  auto tpl = lagrangian_system(th);

  // x0 * y + z00^2, zero at the chosen point
  Expr phi = kcoord(base_coord(0)) * kcoord(fiber_coord(0)) +
             ipow(kcoord(jet_coord(0, 0)), 2);
  ConstraintSet cs;
  cs.layer = layer;
  cs.add(phi, Provenance::SecondarySymbolic);

  Valuation pt;
  pt[base_coord(0)] = 2.0;
  pt[base_coord(1)] = -0.7;
  pt[fiber_coord(0)] = -0.125;
  pt[jet_coord(0, 0)] = 0.5;
  pt[jet_coord(0, 1)] = 1.25;
  REQUIRE(cs.satisfied(pt));

  auto plain = tpl.assemble_at(pt);
  auto sys = tpl.assemble_at(pt, cs);
  REQUIRE(sys.M.rows() == plain.M.rows() + 2);
  for (int mu = 0; mu < 2; ++mu) {
    int r = (int)plain.M.rows() + mu;
    // right-hand side carries the base derivative, mu = 0 direction only
    CHECK(sys.b(r) == doctest::Approx(mu == 0 ? 0.125 : 0.0));
    for (int u = 0; u < (int)sys.columns.size(); ++u) {
      double want = 0.0;
      if (sys.columns[u].mu == mu) {
        if (sys.columns[u].target == fiber_coord(0)) want = 2.0;       // x0
        if (sys.columns[u].target == jet_coord(0, 0)) want = 1.0;      // 2 z00
      }
      CHECK(sys.M(r, u) == doctest::Approx(want));
    }
    CHECK(sys.row_labels[r].find("tangency") != std::string::npos);
  }
}

TEST_CASE("restricted coupling system matches the velocity system") {
  std::mt19937_64 rng(75);

  auto ff = free_field();
  auto tpl_v = lagrangian_system(ff);
  auto tpl_r = restricted_unified_system(ff);
  REQUIRE(tpl_v.columns().size() == tpl_r.columns().size());
  for (int trial = 0; trial < 5; ++trial) {
    auto pt = rand_point(rng, *ff.chart->layer_velocity());
    auto sv = solve_pointwise(tpl_v.assemble_at(pt));
    auto sr = solve_pointwise(tpl_r.assemble_at(pt));
    REQUIRE(sv.solvable);
    REQUIRE(sr.solvable);
    CHECK((sv.solution - sr.solution).norm() <
          1e-6 * (1.0 + sv.solution.norm()));
  }

  auto sheet = sheet_theory();
  auto sh_v = lagrangian_system(sheet);
  auto sh_r = restricted_unified_system(sheet);
  for (int trial = 0; trial < 6; ++trial) {
    auto pt = rand_point(rng, *sheet.chart->layer_velocity());
    clamp_sheet_point(pt);
    if (trial >= 3) {
      pt[jet_coord(0, 0)] = 0.0;
      pt[jet_coord(0, 1)] = 0.0;
    }
    auto sv = solve_pointwise(sh_v.assemble_at(pt));
    auto sr = solve_pointwise(sh_r.assemble_at(pt));
    CHECK(sv.solvable == (trial >= 3));
    CHECK(sv.solvable == sr.solvable);
    if (sv.solvable && sr.solvable)
      CHECK((sv.solution - sr.solution).norm() <
            1e-6 * (1.0 + sv.solution.norm()));
  }
}

TEST_CASE("reduced momentum system emits the metric constraints") {
  auto th = sheet_theory();
  auto chart = th.chart;
  std::vector<CoordId> coords = {base_coord(0), base_coord(1)};
  for (int i = 0; i < 4; ++i) coords.push_back(fiber_coord(i));
  coords.push_back(momentum_pmu(0, 0));
  coords.push_back(momentum_pmu(0, 1));
  auto layer = chart->make_layer("momentum_image", coords);

  Expr ptilde = parse_expr(
      "(1/(2*sqrt(-det2(h))))*sum(e,0,1,sum(f,0,1,h[e,f]*py[0,e]*py[0,f]))",
      chart);
  HamiltonianData hd{chart, layer, neg(ptilde)};
  auto tpl = hamiltonian_system(hd);
  CHECK(tpl.formalism() == Formalism::HamiltonianZstar);

  EquivOptions o;
  o.tol = 1e-9;
  int metric_rows = 0, momentum_rows = 0, field_rows = 0;
  for (const auto& r : tpl.rows()) {
    REQUIRE(r.tuple.size() == 3);
    CoordId w = layer->coords[r.tuple[2]];
    if (w.space == Space::Fiber && w.a > 0) {
      ++metric_rows;
      // no unknown touches these rows: step-two constraint functions
      CHECK(r.coeffs.empty());
      CHECK(equiv_probabilistic(r.constant, neg(diff(ptilde, w)), o));
    } else if (w.space == Space::MomentumPmu) {
      ++momentum_rows;
      CHECK(equiv_probabilistic(r.constant, neg(diff(ptilde, w)), o));
      REQUIRE(r.coeffs.size() == 1);
      const auto& [u, c] = *r.coeffs.begin();
      CHECK(tpl.columns()[u].target == fiber_coord(0));
      CHECK(tpl.columns()[u].mu == w.b);
      CHECK(equiv_probabilistic(c, kconst(-1.0), o));
    } else if (w.space == Space::Fiber) {
      ++field_rows;
      for (const auto& [u, c] : r.coeffs) {
        CHECK(tpl.columns()[u].target ==
              momentum_pmu(0, tpl.columns()[u].mu));
        CHECK(equiv_probabilistic(c, kconst(1.0), o));
      }
    }
  }
  CHECK(metric_rows == 3);
  CHECK(momentum_rows == 2);
  CHECK(tpl.unknown_free_rows().size() == 3);

  // solvable exactly where the emitted constraints hold
  std::mt19937_64 rng(76);
  for (int trial = 0; trial < 4; ++trial) {
    auto pt = rand_point(rng, *layer);
    clamp_sheet_point(pt);
    pt[momentum_pmu(0, 0)] = 1.0 + 0.2 * trial;
    CHECK_FALSE(solve_pointwise(tpl.assemble_at(pt)).solvable);
    pt[momentum_pmu(0, 0)] = 0.0;
    pt[momentum_pmu(0, 1)] = 0.0;
    CHECK(solve_pointwise(tpl.assemble_at(pt)).solvable);
  }
}

TEST_CASE("solved coefficients satisfy the contraction identity") {
  std::mt19937_64 rng(77);
  int done = 0;
  while (done < 10) {
    int m = 1 + (int)(rng() % 2);
    auto th = random_quadratic(rng, 2, m);
    auto layer = th.chart->layer_velocity();
    auto pt = rand_point(rng, *layer);
    if (!is_regular_at(th, pt)) continue;
    ++done;

    auto tpl = lagrangian_system(th);
    auto sol = solve_pointwise(tpl.assemble_at(pt));
    REQUIRE(sol.solvable);
    CHECK(sol.free_parameters == m * 3);

    auto cc = tpl.coefficients_from(sol.solution);
    double worst = 0.0;
    for (double d : semiholonomic_defect(cc, pt))
      worst = std::max(worst, std::abs(d));
    CHECK(worst < 1e-9);

    FormX omega = theory_omega(th);
    FormX diffm =
        contract_operator(omega, projector_from_coeffs(cc)) - omega;
    CHECK(max_form_value(diffm, pt) < 1e-8);
  }
}

TEST_CASE("empty systems are trivially solvable") {
  auto chart = scalar_chart(2, 1);
  auto th = make_theory(chart, Expr());
  auto tpl = lagrangian_system(th);
  CHECK(tpl.rows().empty());
  Valuation pt;
  for (const auto& c : chart->layer_velocity()->coords) pt[c] = 0.5;
  auto sol = solve_pointwise(tpl.assemble_at(pt));
  CHECK(sol.solvable);
  CHECK(sol.residual == 0.0);
  CHECK(sol.free_parameters == (int)tpl.columns().size());
}
