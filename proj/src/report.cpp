#include "fieldlab/report.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <random>
#include <sstream>

#include "fieldlab/connections.hpp"
#include "fieldlab/linalg.hpp"
#include "fieldlab/mechanics.hpp"
#include "fieldlab/parse.hpp"
#include "fieldlab/systems.hpp"

namespace fieldlab {
namespace {

using nlohmann::json;

std::string fnv1a_hex(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << h;
  return os.str();
}

Report skeleton(const std::string& command, json inputs) {
  Report rep;
  rep.doc["command"] = command;
  rep.doc["tool"] = kToolVersion;
  rep.doc["digest"] = fnv1a_hex(inputs.dump());
  rep.doc["inputs"] = std::move(inputs);
  return rep;
}

bool form_equiv_zero(const FormX& w, double tol = 1e-9) {
  EquivOptions o;
  o.tol = tol;
  for (const auto& [idx, c] : w.terms()) {
    (void)idx;
    if (!equiv_zero(c, o)) return false;
  }
  return true;
}

Valuation state_valuation(const LayerPtr& layer, const Eigen::VectorXd& v) {
  Valuation at;
  for (int i = 0; i < layer->dim(); ++i) at[layer->coords[(std::size_t)i]] = v(i);
  return at;
}

}  // namespace

// ---------------------------------------------------------------------------
// analyze

Report cmd_analyze(const TheoryBundle& b, const AnalyzeOptions& opt) {
  const LagrangianTheory& th = b.theory;
  const ChartPtr& chart = th.chart;
  Report rep = skeleton("analyze", {{"theory", b.name},
                                    {"seed", opt.seed},
                                    {"samples", opt.samples},
                                    {"tol", opt.tol}});

  ChainOptions copt;
  copt.seed = opt.seed;
  auto vel = chart->layer_velocity();
  auto pts = sample_on_set(vel, b.box, {}, opt.samples, copt, 1);
  auto dual_pts = sample_on_set(chart->layer_full_dual(), b.box, {},
                                opt.samples, copt, 2);

  int zdim = chart->m() * chart->n();
  int regular = 0;
  int hess_min = zdim, hess_max = 0, leg_min = zdim, leg_max = 0;
  for (const auto& at : pts) {
    if (is_regular_at(th, at, opt.tol)) ++regular;
    int hr = numerical_rank(velocity_hessian_at(th, at), opt.tol).rank;
    int lr = numerical_rank(reduced_legendre_jacobian_at(th, at), opt.tol).rank;
    hess_min = std::min(hess_min, hr);
    hess_max = std::max(hess_max, hr);
    leg_min = std::min(leg_min, lr);
    leg_max = std::max(leg_max, lr);
  }
  bool all_regular = regular == (int)pts.size();

  bool ms_lagrangian = is_multisymplectic(theory_omega(th), pts, opt.tol);
  bool ms_dual = is_multisymplectic(dual_omega(chart), dual_pts, opt.tol);
  bool ms_restricted =
      is_multisymplectic(restricted_coupling_omega(th), pts, opt.tol);

  auto images = full_legendre(th);
  bool id_theta = form_equiv_zero(
      pullback(dual_theta(chart), vel, images) - theory_theta(th));
  bool id_omega = form_equiv_zero(
      pullback(dual_omega(chart), vel, images) - theory_omega(th));
  bool id_restricted =
      form_equiv_zero(restricted_coupling_omega(th) - theory_omega(th));

  bool consistent = ms_dual && id_theta && id_omega && id_restricted &&
                    ms_lagrangian == all_regular &&
                    ms_restricted == ms_lagrangian;

  rep.doc["results"] = {
      {"regularity",
       {{"samples", (int)pts.size()},
        {"regular_count", regular},
        {"all_regular", all_regular},
        {"hessian_rank", {{"min", hess_min}, {"max", hess_max}}},
        {"rank_deficiency", zdim - hess_max}}},
      {"multisymplectic",
       {{"lagrangian", ms_lagrangian},
        {"dual", ms_dual},
        {"restricted", ms_restricted}}},
      {"fiber_derivative",
       {{"rank", {{"min", leg_min}, {"max", leg_max}}},
        {"rank_deficiency", zdim - leg_max}}},
      {"pullback_identities",
       {{"theta", id_theta},
        {"omega", id_omega},
        {"restricted_omega", id_restricted}}},
      {"consistent", consistent}};
  rep.pass = consistent;
  return rep;
}

// ---------------------------------------------------------------------------
// constraints

namespace {

json trace_json(const AlgorithmTrace& trace) {
  json doc = json::parse(trace_to_json(trace));
  doc["stabilization_index"] = trace.stabilization_index;
  for (std::size_t s = 0; s < trace.steps.size(); ++s) {
    const StepTrace& st = trace.steps[s];
    doc["steps"][s]["emitted"] = st.emitted;
    doc["steps"][s]["sample_size"] = (int)st.sample.size();
  }
  return doc;
}

std::vector<StepRegistration> regs_for(const TheoryBundle& b, ChainKind kind) {
  std::vector<StepRegistration> out;
  for (const auto& r : b.registrations)
    if (r.kind == kind) out.push_back(r);
  return out;
}

}  // namespace

Report cmd_constraints(const TheoryBundle& b, const ConstraintsOptions& opt) {
  Report rep = skeleton("constraints", {{"theory", b.name},
                                        {"formalism", opt.formalism},
                                        {"max_steps", opt.chain.max_steps},
                                        {"samples", opt.chain.samples_per_step},
                                        {"tol", opt.chain.solve_tol},
                                        {"seed", opt.chain.seed}});

  bool all = opt.formalism == "all";
  std::vector<std::pair<std::string, ChainKind>> wanted;
  if (all || opt.formalism == "lagrangian")
    wanted.emplace_back("lagrangian", ChainKind::LagrangianZ);
  if (all || opt.formalism == "hamiltonian")
    wanted.emplace_back("hamiltonian", ChainKind::HamiltonianZstar);
  if (all || opt.formalism == "unified")
    wanted.emplace_back("unified", ChainKind::UnifiedPairing);
  if (all || opt.formalism == "restricted")
    wanted.emplace_back("restricted", ChainKind::UnifiedRestricted);
  if (wanted.empty())
    throw Error(ErrorKind::BadInput,
                "unknown formalism '" + opt.formalism +
                    "' (lagrangian|hamiltonian|unified|restricted|all)");

  std::map<std::string, AlgorithmTrace> traces;
  json chains = json::object();
  for (const auto& [name, kind] : wanted) {
    if (kind == ChainKind::HamiltonianZstar && !b.hamiltonian) {
      if (!all)
        throw Error(ErrorKind::BadInput,
                    "theory '" + b.name + "' carries no dual-side data");
      chains[name] = {{"skipped", "no dual-side data"}};
      continue;
    }
    auto build = [&](ChainKind k) -> ChainSetup {
      switch (k) {
        case ChainKind::HamiltonianZstar:
          return make_hamiltonian_chain(*b.hamiltonian, b.box,
                                        regs_for(b, k));
        case ChainKind::UnifiedPairing:
          return make_unified_chain(b.theory, b.box, b.cokernel,
                                    regs_for(b, k));
        case ChainKind::UnifiedRestricted:
          return make_restricted_chain(b.theory, b.box, b.cokernel,
                                       regs_for(b, k));
        case ChainKind::LagrangianZ:
        default:
          return make_lagrangian_chain(b.theory, b.box, b.cokernel,
                                       regs_for(b, k));
      }
    };
    AlgorithmTrace trace = run_algorithm(build(kind), opt.chain);
    chains[name] = trace_json(trace);
    rep.pass = rep.pass && trace.stabilized;
    traces.emplace(name, std::move(trace));
  }
  rep.doc["results"]["chains"] = std::move(chains);

  if (all && traces.count("lagrangian") && traces.count("hamiltonian") &&
      traces.count("restricted")) {
    TransportReport tr = transport_and_compare(
        b.theory, traces.at("restricted"), traces.at("lagrangian"),
        traces.at("hamiltonian"));
    json entries = json::array();
    for (const auto& e : tr.entries)
      entries.push_back({{"r", e.r},
                         {"direction", e.direction},
                         {"points", e.points},
                         {"max_violation", e.max_violation}});
    bool ok = tr.stabilization_agree && tr.max_violation <= 1e-8;
    rep.doc["results"]["transports"] = {
        {"entries", std::move(entries)},
        {"max_violation", tr.max_violation},
        {"stabilization_agree", tr.stabilization_agree},
        {"stabilization",
         {{"lagrangian", tr.stab_lagrangian},
          {"hamiltonian", tr.stab_hamiltonian},
          {"restricted", tr.stab_restricted}}},
        {"agree", ok}};
    rep.pass = rep.pass && ok;
  }
  return rep;
}

// ---------------------------------------------------------------------------
// integrate

namespace {

// completes a velocity-layer state with the fiber-derivative momenta
Valuation graph_complete(const LagrangianTheory& th, const Valuation& at) {
  const ChartPtr& chart = th.chart;
  int n = chart->n(), m = chart->m();
  Valuation out = at;
  EvalCache cache;
  double zdot = 0.0;
  for (int i = 0; i < m; ++i)
    for (int mu = 0; mu < n; ++mu) {
      double p = cache.eval(th.dLdz[(std::size_t)(i * n + mu)], at);
      out[momentum_pmu(i, mu)] = p;
      zdot += p * at.at(jet_coord(i, mu));
    }
  out[momentum_p()] = cache.eval(th.L, at) - zdot;
  return out;
}

Valuation velocity_part(const LagrangianTheory& th, const Valuation& at) {
  auto vel = th.chart->layer_velocity();
  Valuation out;
  for (const auto& c : vel->coords) {
    auto it = at.find(c);
    if (it == at.end())
      throw Error(ErrorKind::MissingCoordinate,
                  "initial state lacks " + th.chart->coord_name(c));
    out[c] = it->second;
  }
  return out;
}

}  // namespace

Report cmd_integrate(const TheoryBundle& b, const IntegrateOptions& opt) {
  const LagrangianTheory& th = b.theory;
  const ChartPtr& chart = th.chart;
  if (chart->n() != 1)
    throw Error(ErrorKind::BadInput,
                "integration needs a 1-dimensional base; '" + b.name +
                    "' has n = " + std::to_string(chart->n()));

  Report rep = skeleton("integrate", {{"theory", b.name},
                                      {"horizon", opt.horizon},
                                      {"step", opt.step}});

  const Valuation& given = opt.state.empty() ? b.initial_state : opt.state;
  if (given.empty())
    throw Error(ErrorKind::BadInput,
                "theory '" + b.name +
                    "' ships no default initial state; pass one with --ic");
  Valuation state = velocity_part(th, given);

  bool regular = is_regular_at(th, state);
  bool beta_applied = false;
  ConstraintSet final_set;
  json chain_doc;
  if (regular) {
    final_set = primary_constraints_unified(th);
  } else {
    if (b.cokernel.empty())
      throw Error(ErrorKind::DegenerateStructure,
                  "theory '" + b.name +
                      "' is singular and registers no cokernel; the flow "
                      "needs the stabilized chain to restrict to");
    auto setup = make_unified_chain(th, b.box, b.cokernel,
                                    regs_for(b, ChainKind::UnifiedPairing));
    AlgorithmTrace trace = run_algorithm(setup, ChainOptions{});
    chain_doc = trace_json(trace);
    if (!trace.stabilized)
      throw Error(ErrorKind::DegenerateStructure,
                  "constraint chain did not stabilize; no final set to "
                  "restrict the flow to");
    final_set = trace.steps.back().set;

    // realign the gauge jets through the beta section of the pointwise
    // field-equation solution before entering the dual coordinates
    SystemTemplate ltpl = lagrangian_system(th);
    ProjectorSystem lsys = ltpl.assemble_at(state);
    LeastSquares lsol = solve_min_norm(lsys.M, lsys.b);
    if (lsol.rel_residual > 1e-6)
      throw Error(ErrorKind::DegenerateStructure,
                  "field equation is unsolvable at the initial state; start "
                  "on the final constraint set");
    state = beta_point(ltpl.coefficients_from(lsol.x), state);
    beta_applied = true;
  }

  Valuation start = graph_complete(th, state);
  if (!final_set.satisfied(start))
    throw Error(ErrorKind::PointOffConstraint,
                "initial state is off the final constraint set");

  // the flow solve enforces tangency at each evaluation point; membership
  // there only needs to hold to the integrator's local accuracy
  ConstraintSet flow_set = final_set;
  flow_set.tol = std::max(final_set.tol, 100.0 * opt.step * opt.step + 1e-6);
  SystemTemplate utpl = unified_system(th);
  auto layer = chart->layer_pairing();
  FlowField flow = [utpl, flow_set](const Valuation& pt) {
    ProjectorSystem sys = utpl.assemble_at(pt, flow_set);
    LeastSquares sol = solve_min_norm(sys.M, sys.b);
    if (sol.rel_residual > 1e-6)
      throw Error(ErrorKind::DegenerateStructure,
                  "transversal flow is inconsistent along the trajectory");
    return Eigen::VectorXd(
        lift_matrix_at(utpl.coefficients_from(sol.x), pt).col(0));
  };

  Trajectory traj = integrate(layer, flow, start, opt.horizon, opt.step);
  int N = (int)traj.states.size();
  int m = chart->m();

  Expr h0 = coupling_hamiltonian(th);
  EvalCache cache;
  double h0_start = cache.eval(h0, start);
  double drift = 0.0;
  for (const auto& s : traj.states)
    drift = std::max(
        std::abs(cache.eval(h0, state_valuation(layer, s)) - h0_start), drift);

  // field-equation residual dP/dt - dL/dy along the trajectory, momentum
  // derivative by central difference
  double residual = 0.0;
  for (int k = 1; k + 1 < N; ++k) {
    Valuation at = state_valuation(layer, traj.states[(std::size_t)k]);
    for (int i = 0; i < m; ++i) {
      int pos = layer->position(momentum_pmu(i, 0));
      double dp = (traj.states[(std::size_t)(k + 1)](pos) -
                   traj.states[(std::size_t)(k - 1)](pos)) /
                  (2.0 * traj.step);
      residual =
          std::max(std::abs(dp - cache.eval(th.dLdy[(std::size_t)i], at)),
                   residual);
    }
  }

  int stride = std::max(1, (N + opt.table_rows - 1) / opt.table_rows);
  double sode = 0.0;
  for (int k = 0; k < N; k += stride) {
    Valuation at = state_valuation(layer, traj.states[(std::size_t)k]);
    sode = std::max(sode_defect(flow(at), layer, at), sode);
  }

  json coords = json::array();
  auto namer = chart->namer();
  for (const auto& c : layer->coords) coords.push_back(namer(c));
  json rows = json::array();
  for (int k = 0; k < N; k += stride) {
    json row = json::array();
    row.push_back(traj.times[(std::size_t)k]);
    for (int i = 0; i < layer->dim(); ++i)
      row.push_back(traj.states[(std::size_t)k](i));
    rows.push_back(std::move(row));
  }
  json endpoint = json::object();
  for (int i = 0; i < layer->dim(); ++i)
    endpoint[namer(layer->coords[(std::size_t)i])] = traj.states.back()(i);

  json constraints = json::array();
  for (const auto& e : final_set.entries)
    constraints.push_back(to_string(e.fn, namer));

  rep.doc["results"] = {
      {"regular", regular},
      {"beta_applied", beta_applied},
      {"final_constraints", std::move(constraints)},
      {"steps", N - 1},
      {"step", traj.step},
      {"coupling_drift", drift},
      {"field_residual", residual},
      {"holonomy_defect", sode},
      {"endpoint", std::move(endpoint)},
      {"trajectory",
       {{"coords", std::move(coords)},
        {"stride", stride},
        {"rows", std::move(rows)}}}};
  if (!chain_doc.is_null()) rep.doc["results"]["chain"] = std::move(chain_doc);
  rep.pass = drift <= opt.drift_tol && residual <= opt.residual_tol;
  return rep;
}

// ---------------------------------------------------------------------------
// check-exterior

namespace {

Expr rand_poly(std::mt19937_64& rng, const Layer& layer) {
  std::uniform_real_distribution<double> coeff(-2.0, 2.0);
  std::uniform_int_distribution<int> pick(0, layer.dim() - 1);
  std::uniform_int_distribution<int> nmono(1, 3);
  std::uniform_int_distribution<int> degree(0, 2);
  std::vector<Expr> terms;
  int k = nmono(rng);
  for (int t = 0; t < k; ++t) {
    Expr m = kconst(coeff(rng));
    int d = degree(rng);
    for (int f = 0; f < d; ++f) m = m * kcoord(layer.coords[(std::size_t)pick(rng)]);
    terms.push_back(m);
  }
  return add(std::move(terms));
}

FormX rand_form(std::mt19937_64& rng, const LayerPtr& layer, int degree,
                int nterms = 4) {
  FormX w(layer, degree);
  std::uniform_int_distribution<int> pick(0, layer->dim() - 1);
  for (int t = 0; t < nterms; ++t) {
    FormX::Index idx((std::size_t)degree);
    for (int r = 0; r < degree; ++r) idx[(std::size_t)r] = pick(rng);
    w.add_term(idx, rand_poly(rng, *layer));
  }
  return w;
}

double perm_eval(const FormD& w, const Eigen::MatrixXd& vecs) {
  double total = 0.0;
  int k = w.degree();
  std::vector<int> perm((std::size_t)k);
  for (const auto& [idx, c] : w.terms()) {
    for (int i = 0; i < k; ++i) perm[(std::size_t)i] = i;
    do {
      int sign = 1;
      for (int a = 0; a < k; ++a)
        for (int bb = a + 1; bb < k; ++bb)
          if (perm[(std::size_t)a] > perm[(std::size_t)bb]) sign = -sign;
      double prod = 1.0;
      for (int r = 0; r < k; ++r)
        prod *= vecs(idx[(std::size_t)r], perm[(std::size_t)r]);
      total += c * sign * prod;
    } while (std::next_permutation(perm.begin(), perm.end()));
  }
  return total;
}

}  // namespace

Report cmd_check_exterior(const ExteriorOptions& opt) {
  Report rep = skeleton("check-exterior",
                        {{"trials", opt.trials}, {"seed", opt.seed}});
  if (opt.trials < 1)
    throw Error(ErrorKind::BadInput, "trials must be positive");

  std::map<std::string, int> failures;
  for (const char* p : {"d_squared", "graded_anticommutativity", "leibniz",
                        "contraction_antisymmetry", "slot_sum"})
    failures[p] = 0;

  for (int trial = 0; trial < opt.trials; ++trial) {
    std::mt19937_64 rng(opt.seed + 0x9e3779b97f4a7c15ULL * (std::uint64_t)trial);
    FiberGroup y;
    y.name = "y";
    y.count = 1 + (trial / 2) % 2;
    auto chart = BundleChart::create(1 + trial % 2, {y});
    auto layer = chart->layer_velocity();
    std::uniform_int_distribution<int> degdist(0, 2);
    std::uniform_int_distribution<int> pick(0, layer->dim() - 1);

    int k = degdist(rng), l = degdist(rng);
    FormX a = rand_form(rng, layer, k);
    FormX bf = rand_form(rng, layer, l);

    if (!form_equiv_zero(exterior_d(exterior_d(a)))) ++failures["d_squared"];

    FormX comm = wedge(a, bf);
    FormX flip = wedge(bf, a);
    if ((k * l) % 2) flip = -flip;
    if (!form_equiv_zero(comm - flip)) ++failures["graded_anticommutativity"];

    FormX rhs2 = wedge(a, exterior_d(bf));
    if (k % 2) rhs2 = -rhs2;
    if (!form_equiv_zero(exterior_d(wedge(a, bf)) -
                         (wedge(exterior_d(a), bf) + rhs2)))
      ++failures["leibniz"];

    int kc = 2 + trial % 2;
    FormX w = rand_form(rng, layer, kc);
    VectorField<Expr> X{layer, {}};
    VectorField<Expr> Y{layer, {}};
    for (int t = 0; t < 3; ++t) {
      X.set(pick(rng), rand_poly(rng, *layer));
      Y.set(pick(rng), rand_poly(rng, *layer));
    }
    FormX xy = contract_vector(contract_vector(w, X), Y);
    FormX yx = contract_vector(contract_vector(w, Y), X);
    if (!form_equiv_zero(xy + yx)) ++failures["contraction_antisymmetry"];

    // operator insertion against the numeric sum over slots
    LinearOperator<Expr> T(layer);
    for (int t = 0; t < 6; ++t)
      T.add_entry(pick(rng), pick(rng), rand_poly(rng, *layer));
    FormX tw = contract_operator(w, T);
    Valuation at;
    std::uniform_real_distribution<double> box(-1.5, 1.5);
    for (const auto& c : layer->coords) at[c] = box(rng);
    std::uniform_real_distribution<double> unit(-1.0, 1.0);
    Eigen::MatrixXd vecs(layer->dim(), kc);
    for (int i = 0; i < layer->dim(); ++i)
      for (int j = 0; j < kc; ++j) vecs(i, j) = unit(rng);
    Eigen::MatrixXd Tm = Eigen::MatrixXd::Zero(layer->dim(), layer->dim());
    EvalCache cache;
    for (int r = 0; r < layer->dim(); ++r)
      for (const auto& [cpos, v] : T.rows[(std::size_t)r])
        Tm(r, cpos) += cache.eval(v, at);
    FormD wnum = evaluate_form(w, at);
    double want = 0.0;
    for (int r = 0; r < kc; ++r) {
      Eigen::MatrixXd replaced = vecs;
      replaced.col(r) = Tm * vecs.col(r);
      want += perm_eval(wnum, replaced);
    }
    double got = perm_eval(evaluate_form(tw, at), vecs);
    if (std::abs(got - want) > 1e-9 * (1.0 + std::abs(want)))
      ++failures["slot_sum"];
  }

  json props = json::object();
  int total = 0;
  for (const auto& [name, count] : failures) {
    props[name] = {{"instances", opt.trials}, {"failures", count}};
    total += count;
  }
  rep.doc["results"] = {{"properties", std::move(props)},
                        {"failures", total}};
  rep.pass = total == 0;
  return rep;
}

}  // namespace fieldlab
