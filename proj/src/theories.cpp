#include "fieldlab/theories.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "fieldlab/parse.hpp"

namespace fieldlab {
namespace {

using nlohmann::json;

// ---- builtins --------------------------------------------------------

TheoryBundle builtin_oscillator() {
  FiberGroup y;
  y.name = "y";
  auto chart = BundleChart::create(1, {y});
  TheoryBundle b;
  b.name = "oscillator";
  b.theory =
      make_theory(chart, parse_expr("(1/2)*y[0,0]^2 - (1/2)*y[0]^2", chart));
  auto inv = invert_quadratic_legendre(b.theory);
  b.hamiltonian = HamiltonianData{chart, chart->layer_reduced_dual(), inv->H};
  b.initial_state[base_coord(0)] = 0.0;
  b.initial_state[fiber_coord(0)] = 1.0;
  b.initial_state[jet_coord(0, 0)] = 0.0;
  return b;
}

TheoryBundle builtin_free_field() {
  FiberGroup y;
  y.name = "y";
  auto chart = BundleChart::create(2, {y});
  TheoryBundle b;
  b.name = "free_field";
  b.theory =
      make_theory(chart, parse_expr("(1/2)*sum(u,0,1,y[0,u]^2)", chart));
  auto inv = invert_quadratic_legendre(b.theory);
  b.hamiltonian = HamiltonianData{chart, chart->layer_reduced_dual(), inv->H};
  return b;
}

// worldsheet density over a Lorentzian metric block; the Hessian kills the
// metric velocities, so the cokernel is one weighted unit covector per
// metric row and the dual picture lives on the q = 0 sublayer
TheoryBundle builtin_bosonic_string() {
  FiberGroup y;
  y.name = "y";
  FiberGroup h;
  h.name = "h";
  h.sym2 = true;
  h.momentum = "q";
  auto chart = BundleChart::create(2, {y, h});

  TheoryBundle b;
  b.name = "bosonic_string";
  b.theory = make_theory(
      chart,
      parse_expr(
          "-(1/2)*sqrt(-det2(h))*sum(e,0,1,sum(f,0,1,hinv[e,f]*y[0,e]*y[0,f]))",
          chart));

  b.box.ranges[fiber_coord(1)] = {-2.0, -0.5};  // h00
  b.box.ranges[fiber_coord(2)] = {-0.5, 0.5};   // h01
  b.box.ranges[fiber_coord(3)] = {0.5, 2.0};    // h11
  b.box.guards.push_back({parse_expr("-det2(h)", chart), 0.1});

  Expr w = parse_expr("-2*sqrt(-det2(h))", chart);
  for (int a = 1; a <= 3; ++a) {
    std::vector<Expr> cov(4);
    cov[(std::size_t)a] = w;
    b.cokernel.covectors.push_back(std::move(cov));
  }

  auto image = chart->make_layer(
      "image",
      {base_coord(0), base_coord(1), fiber_coord(0), fiber_coord(1),
       fiber_coord(2), fiber_coord(3), momentum_pmu(0, 0), momentum_pmu(0, 1)});
  b.hamiltonian = HamiltonianData{
      chart, image,
      parse_expr("-(1/2)*sqrt(-det2(h))^-1"
                 "*sum(e,0,1,sum(f,0,1,h[e,f]*py[0,e]*py[0,f]))",
                 chart)};
  return b;
}

// time-gauge mechanics with a cyclic velocity; the second velocity only
// enters the chains through the registered third-step cut
TheoryBundle builtin_singular_mech() {
  FiberGroup y;
  y.name = "y";
  y.count = 2;
  auto chart = BundleChart::create(1, {y});

  TheoryBundle b;
  b.name = "singular_mech";
  b.theory =
      make_theory(chart, parse_expr("(1/2)*y[0,0]^2 + y[1]*y[0,0]", chart));

  std::vector<Expr> cov(2);
  cov[1] = kconst(1.0);
  b.cokernel.covectors.push_back(std::move(cov));

  b.registrations.push_back(
      {ChainKind::UnifiedPairing, 3, {kcoord(jet_coord(1, 0))}});

  auto image = chart->make_layer(
      "image",
      {base_coord(0), fiber_coord(0), fiber_coord(1), momentum_pmu(0, 0)});
  b.hamiltonian = HamiltonianData{
      chart, image, parse_expr("(1/2)*(py[0,0]-y[1])^2", chart)};

  b.initial_state[base_coord(0)] = 0.0;
  b.initial_state[fiber_coord(0)] = 0.5;
  b.initial_state[fiber_coord(1)] = -0.25;
  b.initial_state[jet_coord(0, 0)] = 0.0;
  b.initial_state[jet_coord(1, 0)] = 0.0;
  return b;
}

// ---- theory files ----------------------------------------------------

[[noreturn]] void bad(const std::string& origin, const std::string& msg) {
  throw Error(ErrorKind::BadInput, origin + ": " + msg);
}

const json& need(const json& j, const char* key, const std::string& origin) {
  auto it = j.find(key);
  if (it == j.end()) bad(origin, std::string("missing key '") + key + "'");
  return *it;
}

CoordId coord_key(const ChartPtr& chart, const std::string& key,
                  const std::string& origin) {
  std::string name = key;
  std::vector<int> idx;
  auto lb = key.find('[');
  if (lb != std::string::npos) {
    if (key.back() != ']') bad(origin, "bad coordinate key '" + key + "'");
    name = key.substr(0, lb);
    std::stringstream ss(key.substr(lb + 1, key.size() - lb - 2));
    std::string part;
    while (std::getline(ss, part, ',')) {
      try {
        idx.push_back(std::stoi(part));
      } catch (const std::exception&) {
        bad(origin, "bad coordinate key '" + key + "'");
      }
    }
  }
  auto id = chart->resolve_coord(name, idx);
  if (!id)
    throw Error(ErrorKind::UnknownCoordinate,
                origin + ": unknown coordinate '" + key + "'");
  return *id;
}

Expr parse_field(const std::string& text, const ChartPtr& chart,
                 const std::string& origin, const std::string& field) {
  try {
    return parse_expr(text, chart);
  } catch (const Error& e) {
    throw Error(e.kind(), origin + ": " + field + ": " + e.what());
  }
}

ChainKind chain_by_name(const std::string& s, const std::string& origin) {
  if (s == "lagrangian") return ChainKind::LagrangianZ;
  if (s == "hamiltonian") return ChainKind::HamiltonianZstar;
  if (s == "unified") return ChainKind::UnifiedPairing;
  if (s == "restricted") return ChainKind::UnifiedRestricted;
  bad(origin, "unknown chain '" + s + "'");
}

TheoryBundle from_json(const json& doc, const std::string& origin) {
  if (!doc.is_object()) bad(origin, "theory file must be a JSON object");

  TheoryBundle b;
  b.name = need(doc, "name", origin).get<std::string>();
  int n = need(doc, "n", origin).get<int>();

  std::vector<FiberGroup> groups;
  for (const auto& f : need(doc, "fibers", origin)) {
    FiberGroup g;
    g.name = need(f, "name", origin).get<std::string>();
    g.count = f.value("count", 1);
    g.sym2 = f.value("sym2", false);
    g.momentum = f.value("momentum", std::string());
    groups.push_back(std::move(g));
  }
  auto chart = BundleChart::create(n, std::move(groups));
  if (doc.contains("m") && doc["m"].get<int>() != chart->m())
    bad(origin, "declared m = " + doc["m"].dump() + " but the fibers carry " +
                    std::to_string(chart->m()) + " components");

  b.theory = make_theory(
      chart, parse_field(need(doc, "lagrangian", origin).get<std::string>(),
                         chart, origin, "lagrangian"));

  if (doc.contains("cokernel")) {
    for (const auto& cov : doc["cokernel"]) {
      if ((int)cov.size() != chart->m())
        bad(origin, "cokernel covectors need one entry per fiber row");
      std::vector<Expr> entries(cov.size());
      for (std::size_t a = 0; a < cov.size(); ++a) {
        if (cov[a].is_null()) continue;
        entries[a] = parse_field(cov[a].get<std::string>(), chart, origin,
                                 "cokernel");
      }
      b.cokernel.covectors.push_back(std::move(entries));
    }
  }

  const json regs = doc.value("registrations", json::array());
  for (const auto& r : regs) {
    StepRegistration reg;
    reg.kind =
        chain_by_name(need(r, "chain", origin).get<std::string>(), origin);
    reg.step = need(r, "step", origin).get<int>();
    for (const auto& fn : need(r, "functions", origin))
      reg.fns.push_back(
          parse_field(fn.get<std::string>(), chart, origin, "registration"));
    b.registrations.push_back(std::move(reg));
  }

  if (doc.contains("box")) {
    const json& box = doc["box"];
    const json ranges = box.value("ranges", json::object());
    for (const auto& [key, range] : ranges.items()) {
      if (!range.is_array() || range.size() != 2)
        bad(origin, "range for '" + key + "' must be [lo, hi]");
      b.box.ranges[coord_key(chart, key, origin)] = {range[0].get<double>(),
                                                     range[1].get<double>()};
    }
    if (box.contains("fallback"))
      b.box.fallback = {box["fallback"][0].get<double>(),
                        box["fallback"][1].get<double>()};
    const json guards = box.value("guards", json::array());
    for (const auto& g : guards)
      b.box.guards.push_back(
          {parse_field(need(g, "expr", origin).get<std::string>(), chart,
                       origin, "guard"),
           g.value("min", 0.0)});
  }

  if (doc.contains("hamiltonian")) {
    const json& hj = doc["hamiltonian"];
    LayerPtr layer = chart->layer_reduced_dual();
    if (hj.contains("coords")) {
      std::vector<CoordId> coords;
      for (const auto& key : hj["coords"])
        coords.push_back(coord_key(chart, key.get<std::string>(), origin));
      layer = chart->make_layer("image", std::move(coords));
    }
    b.hamiltonian = HamiltonianData{
        chart, layer,
        parse_field(need(hj, "h", origin).get<std::string>(), chart, origin,
                    "hamiltonian")};
  }

  const json state = doc.value("initial_state", json::object());
  for (const auto& [key, v] : state.items()) {
    if (!v.is_number()) bad(origin, "initial_state values must be numbers");
    b.initial_state[coord_key(chart, key, origin)] = v.get<double>();
  }
  return b;
}

}  // namespace

std::vector<std::string> builtin_theories() {
  return {"bosonic_string", "free_field", "oscillator", "singular_mech"};
}

bool is_builtin_theory(const std::string& name) {
  auto all = builtin_theories();
  return std::find(all.begin(), all.end(), name) != all.end();
}

TheoryBundle parse_theory_text(const std::string& text,
                               const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::SyntaxError, origin + ": " + e.what());
  }
  return from_json(doc, origin);
}

TheoryBundle load_theory(const std::string& name_or_path) {
  if (name_or_path == "bosonic_string") return builtin_bosonic_string();
  if (name_or_path == "free_field") return builtin_free_field();
  if (name_or_path == "oscillator") return builtin_oscillator();
  if (name_or_path == "singular_mech") return builtin_singular_mech();

  std::ifstream in(name_or_path);
  if (!in) {
    std::string names;
    for (const auto& s : builtin_theories()) names += " " + s;
    throw Error(ErrorKind::BadInput,
                "no theory file '" + name_or_path + "'; builtins:" + names);
  }
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_theory_text(ss.str(), name_or_path);
}

}  // namespace fieldlab
