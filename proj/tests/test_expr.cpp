#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "fieldlab/chart.hpp"
#include "fieldlab/equiv.hpp"
#include "fieldlab/errors.hpp"
#include "fieldlab/expr.hpp"
#include "fieldlab/parse.hpp"

using namespace fieldlab;

namespace {

ChartPtr scalar_field_chart(int n = 2, int m = 1) {
  FiberGroup g;
  g.name = "y";
  g.count = m;
  return BundleChart::create(n, {g});
}

ChartPtr string_like_chart() {
  FiberGroup y;
  y.name = "y";
  y.count = 1;
  FiberGroup h;
  h.name = "h";
  h.sym2 = true;
  h.momentum = "q";
  return BundleChart::create(2, {y, h});
}

double fd_partial(const Expr& e, const Valuation& at, CoordId var, double h) {
  Valuation plus = at, minus = at;
  plus[var] += h;
  minus[var] -= h;
  return (eval(e, plus) - eval(e, minus)) / (2.0 * h);
}

}  // namespace

TEST_CASE("constant folding and normal form") {
  Expr x = kcoord(base_coord(0));
  Expr y = kcoord(fiber_coord(0));

  CHECK(add({kconst(1), kconst(2)}).const_value() == doctest::Approx(3.0));
  CHECK((x + Expr()).raw() == x.raw());
  CHECK(mul({kconst(0), x}).is_zero());
  CHECK(mul({kconst(1), x}).raw() == x.raw());
  CHECK(neg(neg(x)).raw() == x.raw());
  CHECK(inv(inv(x)).raw() == x.raw());
  CHECK(ipow(x, 1).raw() == x.raw());
  CHECK(ipow(x, 0).is_one());
  CHECK(ipow(ipow(x, 2), 3).node().ipow == 6);
  CHECK(sqrt_of(kconst(4)).const_value() == doctest::Approx(2.0));

  // nested sums and products flatten
  Expr s = (x + y) + (x + kconst(2));
  CHECK(s.kind() == ExprKind::Sum);
  for (const auto& k : s.node().kids) CHECK(k.kind() != ExprKind::Sum);

  // products carry no Neg children and no negative constants
  Expr p = mul({kconst(-2), x, neg(y)});
  std::function<void(const Expr&)> scan = [&](const Expr& e) {
    if (e.kind() == ExprKind::Product) {
      for (const auto& k : e.node().kids) {
        CHECK(k.kind() != ExprKind::Neg);
        if (k.is_const()) CHECK(k.const_value() > 0.0);
        scan(k);
      }
    } else {
      for (const auto& k : e.node().kids) scan(k);
    }
  };
  scan(p);
  Valuation at{{base_coord(0), 1.5}, {fiber_coord(0), 0.5}};
  CHECK(eval(p, at) == doctest::Approx(1.5));
}

TEST_CASE("evaluation errors") {
  Expr x = kcoord(base_coord(0));
  Valuation at{{base_coord(0), 0.0}};
  CHECK_THROWS_AS(eval(kcoord(fiber_coord(3)), at), Error);
  CHECK_THROWS_AS(eval(inv(x), at), Error);
  CHECK_THROWS_AS(eval(sqrt_of(x - 1.0), at), Error);
  CHECK_THROWS_AS(eval(apply(Prim::Log, x), at), Error);
  CHECK_THROWS_AS(eval(ipow(x, -2), at), Error);
  // a zero factor does not mask a domain error elsewhere in the product
  Expr zeroish = x;  // evaluates to 0 at this point
  CHECK_THROWS_AS(eval(zeroish * inv(x), at), Error);
  try {
    eval(inv(x), at);
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::DomainError);
  }
}

TEST_CASE("derivatives match finite differences") {
  auto chart = scalar_field_chart(2, 2);
  Expr x0 = kcoord(base_coord(0));
  Expr y0 = kcoord(fiber_coord(0));
  Expr z00 = kcoord(jet_coord(0, 0));
  Expr z11 = kcoord(jet_coord(1, 1));

  std::vector<Expr> cases = {
      x0 * x0 * y0 + kconst(3),
      sqrt_of(1.0 + z00 * z00) * apply(Prim::Sin, x0 * y0),
      apply(Prim::Exp, y0) / (1.0 + ipow(z11, 2)) + apply(Prim::Log, 1.0 + y0 * y0),
      ipow(x0 + y0 * z00, 3) - inv(2.0 + apply(Prim::Cos, z11)),
  };
  std::vector<CoordId> vars = {base_coord(0), fiber_coord(0), jet_coord(0, 0),
                               jet_coord(1, 1)};
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> dist(0.3, 1.4);
  for (const auto& e : cases) {
    for (const auto& v : vars) {
      Expr de = diff(e, v);
      for (int rep = 0; rep < 5; ++rep) {
        Valuation at;
        for (const auto& c : {base_coord(0), base_coord(1), fiber_coord(0),
                              fiber_coord(1), jet_coord(0, 0), jet_coord(0, 1),
                              jet_coord(1, 0), jet_coord(1, 1)})
          at[c] = dist(rng);
        double sym = eval(de, at);
        double num = fd_partial(e, at, v, 1e-6);
        CHECK(sym == doctest::Approx(num).epsilon(1e-5));
      }
    }
  }
}

TEST_CASE("substitution composes with evaluation") {
  Expr y = kcoord(fiber_coord(0));
  Expr z = kcoord(jet_coord(0, 0));
  Expr e = y * z + ipow(z, 2);
  std::unordered_map<CoordId, Expr, CoordIdHash> repl;
  repl[jet_coord(0, 0)] = y * y;  // z -> y^2
  Expr s = substitute(e, repl);
  Valuation at{{fiber_coord(0), 1.5}};
  CHECK(eval(s, at) == doctest::Approx(1.5 * 2.25 + 2.25 * 2.25));
  CHECK(!depends_on(s, jet_coord(0, 0)));
}

TEST_CASE("print then parse round-trips") {
  auto chart = string_like_chart();
  std::vector<std::string> sources = {
      "-(1/2)*sqrt(-det2(h))*sum(e,0,1,sum(f,0,1,hinv[e,f]*y[0,e]*y[0,f]))",
      "x[0]^2*y[0] - 2.5e-3*h[0,1] + q[0,0,1]/(1 + y[0]^2)",
      "sin(x[1])*cos(y[0]) + exp(-x[0]) - log(2 + h[1,1]^2)",
      "h[0,0]*h[1,1] - h[0,1]^2",
      "-y[0,0]^-2 + sqrt(2)",
  };
  for (const auto& src : sources) {
    Expr e = parse_expr(src, chart);
    std::string printed = to_string(e, chart->namer());
    Expr back = parse_expr(printed, chart);
    EquivOptions o;
    o.trials = 30;
    o.tol = 1e-10;
    CHECK(equiv_probabilistic(e, back, o));
  }
}

TEST_CASE("parser resolves charts, tables, and macros") {
  auto chart = string_like_chart();

  // sym2 index normalization
  CHECK(same_structure(parse_expr("h[1,0]", chart), parse_expr("h[0,1]", chart)));
  // jet vs fiber arity
  Expr jet = parse_expr("y[0,1]", chart);
  CHECK(jet.node().coord.space == Space::Jet);
  Expr fib = parse_expr("y[0]", chart);
  CHECK(fib.node().coord.space == Space::Fiber);
  // momentum blocks
  Expr q = parse_expr("q[0,1,0]", chart);
  CHECK(q.node().coord.space == Space::MomentumPmu);
  CHECK(parse_expr("p", chart).node().coord.space == Space::MomentumP);

  // inclusive sum bounds
  Expr s = parse_expr("sum(i,0,2,i*i)", chart);
  CHECK(s.const_value() == doctest::Approx(5.0));

  // hinv really is the matrix inverse of h
  EquivOptions strict;
  strict.trials = 40;
  strict.tol = 1e-9;
  for (int a = 0; a < 2; ++a) {
    for (int b = 0; b < 2; ++b) {
      std::string lhs = "sum(k,0,1,h[" + std::to_string(a) + ",k]*hinv[k," +
                        std::to_string(b) + "])";
      Expr prod = parse_expr(lhs, chart);
      Expr want = kconst(a == b ? 1.0 : 0.0);
      CHECK(equiv_probabilistic(prod, want, strict));
    }
  }

  // tables
  auto mutable_chart = BundleChart::create(2, {FiberGroup{"y", 2, false, "", 0}});
  std::map<std::vector<int>, Expr> metric;
  metric[{0, 0}] = kconst(1.0);
  metric[{0, 1}] = kconst(0.0);
  metric[{1, 0}] = kconst(0.0);
  metric[{1, 1}] = kconst(2.0);
  mutable_chart->register_table("g", 2, metric);
  ChartPtr cc = mutable_chart;
  Expr quad = parse_expr("sum(i,0,1,sum(j,0,1,g[i,j]*y[i]*y[j]))", cc);
  Valuation at{{fiber_coord(0), 3.0}, {fiber_coord(1), 2.0}};
  CHECK(eval(quad, at) == doctest::Approx(9.0 + 8.0));

  CHECK_THROWS_AS(parse_expr("y[5]", chart), Error);
  CHECK_THROWS_AS(parse_expr("bogus[0]", chart), Error);
  CHECK_THROWS_AS(parse_expr("1 +", chart), Error);
  CHECK_THROWS_AS(parse_expr("sum(i,0,1,sum(i,0,1,1))", chart), Error);
  CHECK_THROWS_AS(parse_expr("y[0]^x[0]", chart), Error);
}

TEST_CASE("probabilistic equivalence") {
  auto chart = scalar_field_chart();
  Expr x = kcoord(base_coord(0));
  Expr a = ipow(apply(Prim::Sin, x), 2) + ipow(apply(Prim::Cos, x), 2);
  CHECK(equiv_probabilistic(a, kconst(1.0)));
  CHECK_FALSE(equiv_probabilistic(x * x, x));
  // every sample raises a domain error: sqrt(-(1 + x^2))
  Expr bad = sqrt_of(neg(1.0 + x * x));
  CHECK_THROWS_AS(equiv_probabilistic(bad, bad), Error);
}

TEST_CASE("chart layers") {
  auto chart = string_like_chart();
  CHECK(chart->n() == 2);
  CHECK(chart->m() == 4);
  auto vel = chart->layer_velocity();
  CHECK(vel->dim() == 2 + 4 + 8);
  auto dual = chart->layer_full_dual();
  CHECK(dual->dim() == 2 + 4 + 1 + 8);
  auto red = chart->layer_reduced_dual();
  CHECK(red->dim() == 2 + 4 + 8);
  auto pair = chart->layer_pairing();
  CHECK(pair->dim() == 2 + 4 + 1 + 8 + 8);
  CHECK(vel->position(base_coord(1)) == 1);
  CHECK_THROWS_AS(vel->position(momentum_p()), Error);
  CHECK(chart->coord_name(jet_coord(1, 0)) == "h[0,0,0]");
  CHECK(chart->coord_name(momentum_pmu(0, 1)) == "py[0,1]");
}

TEST_CASE("name round trip through resolve") {
  auto chart = string_like_chart();
  for (const auto& id :
       {base_coord(0), base_coord(1), fiber_coord(0), fiber_coord(2),
        jet_coord(3, 1), momentum_p(), momentum_pmu(1, 0)}) {
    std::string nm = chart->coord_name(id);
    Expr e = parse_expr(nm, chart);
    CHECK(e.node().coord == id);
  }
}
