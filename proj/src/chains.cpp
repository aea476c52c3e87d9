#include "fieldlab/chains.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "fieldlab/equiv.hpp"
#include "fieldlab/errors.hpp"
#include "fieldlab/linalg.hpp"

namespace fieldlab {

const char* chain_kind_name(ChainKind k) {
  switch (k) {
    case ChainKind::LagrangianZ: return "lagrangian";
    case ChainKind::HamiltonianZstar: return "hamiltonian";
    case ChainKind::UnifiedPairing: return "unified";
    case ChainKind::UnifiedRestricted: return "unified_restricted";
  }
  return "?";
}

Formalism chain_formalism(ChainKind k) {
  switch (k) {
    case ChainKind::LagrangianZ: return Formalism::LagrangianZ;
    case ChainKind::HamiltonianZstar: return Formalism::HamiltonianZstar;
    default: return Formalism::UnifiedW0;
  }
}

std::pair<double, double> SampleBox::range(const CoordId& id) const {
  auto it = ranges.find(id);
  return it == ranges.end() ? fallback : it->second;
}

bool SampleBox::guards_ok(const Valuation& at) const {
  EvalCache cache;
  for (const auto& g : guards) {
    double v;
    try {
      v = cache.eval(g.fn, at);
    } catch (const Error&) {
      return false;
    }
    if (!(v >= g.min)) return false;
  }
  return true;
}

std::vector<Valuation> StepTrace::accepted_points() const {
  std::vector<Valuation> out;
  for (std::size_t i = 0; i < sample.size(); ++i)
    if (accepted[i]) out.push_back(sample[i]);
  return out;
}

const ConstraintSet& AlgorithmTrace::set_at(int r) const {
  int idx = std::clamp(r, 1, (int)steps.size()) - 1;
  return steps[idx].set;
}

// ---------------------------------------------------------------------------
// construction

namespace {

// Fiber-differential rows of the velocity-layer system evaluated on the
// holonomic lift (first-order coefficients set to the jets, second-order
// ones to zero). These are the terms a cokernel covector is paired with.
std::vector<Expr> make_force_rows(const LagrangianTheory& th,
                                  const SystemTemplate& vel) {
  const auto& layer = vel.layer();
  int n = th.chart->n();
  int m = th.chart->m();
  std::vector<Expr> out((std::size_t)m);
  for (const auto& row : vel.rows()) {
    if ((int)row.tuple.size() != n + 1) continue;
    bool base_prefix = true;
    for (int mu = 0; mu < n; ++mu) base_prefix &= row.tuple[mu] == mu;
    if (!base_prefix) continue;
    CoordId last = layer->coords[row.tuple[n]];
    if (last.space != Space::Fiber) continue;
    std::vector<Expr> terms{row.constant};
    for (const auto& [u, coeff] : row.coeffs) {
      const SystemColumn& col = vel.columns()[u];
      if (col.target.space != Space::Fiber) continue;  // second-order: zero
      terms.push_back(mul({coeff, kcoord(jet_coord(col.target.a, col.mu))}));
    }
    out[(std::size_t)last.a] = add(std::move(terms));
  }
  return out;
}

void validate_cokernel(const LagrangianTheory& th, const CokernelBasis& basis) {
  int n = th.chart->n();
  int m = th.chart->m();
  std::vector<Expr> hess = velocity_hessian(th);
  for (const auto& cov : basis.covectors) {
    if ((int)cov.size() != m)
      fail(ErrorKind::InvalidCokernel,
           "covector has " + std::to_string(cov.size()) + " weights, chart has " +
               std::to_string(m) + " fiber coordinates");
    for (int mu = 0; mu < n; ++mu)
      for (int b = 0; b < n * m; ++b) {
        std::vector<Expr> terms;
        for (int i = 0; i < m; ++i)
          terms.push_back(
              mul({cov[(std::size_t)i],
                   hess[(std::size_t)(i * n + mu) * (std::size_t)(n * m) + (std::size_t)b]}));
        if (!equiv_zero(add(std::move(terms))))
          fail(ErrorKind::InvalidCokernel,
               "covector does not annihilate the velocity Hessian");
      }
  }
}

ConstraintSet make_seed(LayerPtr layer) {
  ConstraintSet s;
  s.layer = std::move(layer);
  return s;
}

}  // namespace

ChainSetup make_lagrangian_chain(const LagrangianTheory& th, SampleBox box,
                                 CokernelBasis cokernel,
                                 std::vector<StepRegistration> regs) {
  if (!cokernel.empty()) validate_cokernel(th, cokernel);
  SystemTemplate tpl = lagrangian_system(th);
  std::vector<Expr> force = make_force_rows(th, tpl);
  LayerPtr layer = tpl.layer();
  return ChainSetup{ChainKind::LagrangianZ,     layer,
                    std::move(tpl),             make_seed(layer),
                    std::move(box),             std::move(cokernel),
                    std::move(regs),            std::move(force)};
}

ChainSetup make_unified_chain(const LagrangianTheory& th, SampleBox box,
                              CokernelBasis cokernel,
                              std::vector<StepRegistration> regs) {
  if (!cokernel.empty()) validate_cokernel(th, cokernel);
  SystemTemplate vel = lagrangian_system(th);
  std::vector<Expr> force = make_force_rows(th, vel);
  SystemTemplate tpl = unified_system(th);
  LayerPtr layer = tpl.layer();
  ConstraintSet seed = primary_constraints_unified(th);
  return ChainSetup{ChainKind::UnifiedPairing,  layer,
                    std::move(tpl),             std::move(seed),
                    std::move(box),             std::move(cokernel),
                    std::move(regs),            std::move(force)};
}

ChainSetup make_restricted_chain(const LagrangianTheory& th, SampleBox box,
                                 CokernelBasis cokernel,
                                 std::vector<StepRegistration> regs) {
  if (!cokernel.empty()) validate_cokernel(th, cokernel);
  SystemTemplate tpl = restricted_unified_system(th);
  std::vector<Expr> force = make_force_rows(th, lagrangian_system(th));
  LayerPtr layer = tpl.layer();
  return ChainSetup{ChainKind::UnifiedRestricted, layer,
                    std::move(tpl),               make_seed(layer),
                    std::move(box),               std::move(cokernel),
                    std::move(regs),              std::move(force)};
}

ChainSetup make_hamiltonian_chain(const HamiltonianData& hd, SampleBox box,
                                  std::vector<StepRegistration> regs) {
  SystemTemplate tpl = hamiltonian_system(hd);
  LayerPtr layer = tpl.layer();
  return ChainSetup{ChainKind::HamiltonianZstar, layer,
                    std::move(tpl),              make_seed(layer),
                    std::move(box),              CokernelBasis{},
                    std::move(regs),             {}};
}

// ---------------------------------------------------------------------------
// symbolic secondary constraints

namespace {

bool matches_existing(const Expr& fn, const ConstraintSet& set,
                      const std::vector<Expr>& batch) {
  auto same = [&](const Expr& other) {
    return equiv_probabilistic(fn, other) || equiv_probabilistic(fn, neg(other));
  };
  for (const auto& e : set.entries)
    if (same(e.fn)) return true;
  for (const auto& b : batch)
    if (same(b)) return true;
  return false;
}

std::vector<Expr> emit_step_two(const ChainSetup& setup,
                                const ConstraintSet& seed) {
  std::vector<Expr> out;
  for (const Expr& row : setup.tpl.unknown_free_rows()) {
    if (equiv_zero(row) || matches_existing(row, seed, out)) continue;
    out.push_back(row);
  }
  for (const auto& cov : setup.cokernel.covectors) {
    std::vector<Expr> terms;
    for (std::size_t i = 0; i < cov.size(); ++i)
      terms.push_back(mul({cov[i], setup.force_rows[i]}));
    Expr psi = add(std::move(terms));
    if (equiv_zero(psi) || matches_existing(psi, seed, out)) continue;
    out.push_back(psi);
  }
  return out;
}

}  // namespace

std::vector<Expr> secondary_constraints(const ChainSetup& setup,
                                        const LagrangianTheory& th,
                                        bool require_cokernel) {
  if (require_cokernel && setup.cokernel.empty())
    fail(ErrorKind::NoCokernelRegistered,
         "symbolic secondary constraints need a registered Hessian cokernel");
  if (!setup.cokernel.empty()) validate_cokernel(th, setup.cokernel);
  return emit_step_two(setup, setup.seed);
}

// ---------------------------------------------------------------------------
// sampling

namespace {

std::optional<Valuation> project_onto(const LayerPtr& layer,
                                      const ConstraintSet& set, Valuation pt,
                                      const ChainOptions& opt) {
  if (set.empty()) return pt;
  const auto& grads = set.gradients();
  int k = set.size();
  int dim = layer->dim();
  for (int iter = 0; iter <= opt.project_iters; ++iter) {
    EvalCache cache;
    Eigen::VectorXd r(k);
    double worst = 0.0;
    try {
      for (int e = 0; e < k; ++e) {
        r(e) = cache.eval(set.entries[(std::size_t)e].fn, pt);
        worst = std::max(worst, std::abs(r(e)));
      }
      if (worst <= opt.project_tol) return pt;
      if (iter == opt.project_iters) return std::nullopt;
      Eigen::MatrixXd J(k, dim);
      for (int e = 0; e < k; ++e)
        for (int c = 0; c < dim; ++c)
          J(e, c) = cache.eval(grads[(std::size_t)e][(std::size_t)c], pt);
      LeastSquares step = solve_min_norm(J, -r);
      for (int c = 0; c < dim; ++c) pt[layer->coords[(std::size_t)c]] += step.x(c);
    } catch (const Error&) {
      return std::nullopt;
    }
  }
  return std::nullopt;
}

Valuation draw_point(const LayerPtr& layer, const SampleBox& box,
                     std::mt19937_64& rng) {
  Valuation pt;
  for (const CoordId& c : layer->coords) {
    auto [lo, hi] = box.range(c);
    pt[c] = std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return pt;
}

}  // namespace

std::vector<Valuation> sample_on_set(const LayerPtr& layer,
                                     const SampleBox& box,
                                     const ConstraintSet& set, int count,
                                     const ChainOptions& opt,
                                     std::uint64_t seed_offset) {
  std::mt19937_64 rng(opt.seed + 0x9e3779b97f4a7c15ULL * seed_offset);
  std::vector<Valuation> out;
  long budget = (long)count * opt.draw_attempts;
  while ((int)out.size() < count && budget-- > 0) {
    Valuation pt = draw_point(layer, box, rng);
    if (!box.guards_ok(pt)) continue;
    auto proj = project_onto(layer, set, std::move(pt), opt);
    if (!proj || !box.guards_ok(*proj) || !set.satisfied(*proj)) continue;
    out.push_back(std::move(*proj));
  }
  return out;
}

// ---------------------------------------------------------------------------
// the chain

namespace {

struct Classification {
  std::vector<char> accepted;
  int count = 0;
  double max_residual = 0.0;
};

Classification classify(const SystemTemplate& tpl, const ConstraintSet& set,
                        const std::vector<Valuation>& sample,
                        const ChainOptions& opt) {
  Classification cl;
  cl.accepted.assign(sample.size(), 0);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    SolveResult sr;
    try {
      sr = solve_pointwise(tpl.assemble_at(sample[i], set), opt.solve_tol);
    } catch (const Error&) {
      continue;
    }
    if (sr.solvable) {
      cl.accepted[i] = 1;
      ++cl.count;
      cl.max_residual = std::max(cl.max_residual, sr.residual);
    }
  }
  return cl;
}

std::vector<std::string> printed(const std::vector<Expr>& fns,
                                 const CoordNamer& namer) {
  std::vector<std::string> out;
  out.reserve(fns.size());
  for (const auto& f : fns) out.push_back(to_string(f, namer));
  return out;
}

}  // namespace

bool chain_member(const ChainSetup& setup, const AlgorithmTrace& trace, int r,
                  const Valuation& pt, double solve_tol) {
  const ConstraintSet& prev = trace.set_at(std::max(r - 1, 1));
  if (!prev.satisfied(pt)) return false;
  if (r <= 1) return true;
  try {
    return solve_pointwise(setup.tpl.assemble_at(pt, prev), solve_tol).solvable;
  } catch (const Error&) {
    return false;
  }
}

AlgorithmTrace run_algorithm(const ChainSetup& setup, const ChainOptions& opt) {
  AlgorithmTrace trace;
  trace.kind = setup.kind;
  trace.formalism = chain_formalism(setup.kind);
  trace.layer = setup.layer;
  CoordNamer namer = setup.layer->chart->namer();

  ConstraintSet current = setup.seed;
  current.layer = setup.layer;

  StepTrace first;
  first.r = 1;
  first.set = current;
  for (const auto& e : current.entries)
    first.emitted.push_back(to_string(e.fn, namer));
  first.sample = sample_on_set(setup.layer, setup.box, current,
                               opt.samples_per_step, opt, 1);
  first.accepted.assign(first.sample.size(), 1);
  first.accepted_fraction = 1.0;
  for (const auto& pt : first.sample)
    first.max_residual = std::max(first.max_residual, current.scaled_residual(pt));
  trace.steps.push_back(std::move(first));

  bool fresh_symbols = !current.empty();  // step-1 set is symbolic by definition
  for (int r = 2; r <= opt.max_steps; ++r) {
    const StepTrace& prev = trace.steps.back();
    std::vector<Valuation> sample =
        (r == 2 || fresh_symbols)
            ? sample_on_set(setup.layer, setup.box, current,
                            opt.samples_per_step, opt, (std::uint64_t)r)
            : prev.accepted_points();
    if (sample.empty()) break;  // nothing left to certify against

    Classification cl = classify(setup.tpl, current, sample, opt);

    std::vector<Expr> fresh;
    if (r == 2) fresh = emit_step_two(setup, current);
    for (const auto& reg : setup.registrations) {
      if (reg.kind != setup.kind || reg.step != r) continue;
      for (const auto& fn : reg.fns) {
        if (equiv_zero(fn) || matches_existing(fn, current, fresh)) continue;
        fresh.push_back(fn);
      }
    }
    // emitted functions must hold on the accepted points
    for (const auto& fn : fresh) {
      ConstraintSet probe;
      probe.layer = setup.layer;
      probe.add(fn, Provenance::SecondarySymbolic);
      for (std::size_t i = 0; i < sample.size(); ++i)
        if (cl.accepted[i] && probe.scaled_residual(sample[i]) > opt.membership_tol)
          fail(ErrorKind::InvalidCokernel,
               "emitted constraint " + to_string(fn, namer) +
                   " is violated on an accepted point");
    }

    StepTrace st;
    st.r = r;
    st.sample = std::move(sample);
    st.accepted = std::move(cl.accepted);
    st.accepted_fraction = (double)cl.count / (double)st.sample.size();
    st.max_residual = cl.max_residual;
    for (const auto& fn : fresh) current.add(fn, Provenance::SecondarySymbolic);
    st.emitted = printed(fresh, namer);
    st.set = current;
    bool settled = fresh.empty() && cl.count == (int)st.sample.size();
    trace.steps.push_back(std::move(st));
    if (settled) {
      trace.stabilized = true;
      trace.stabilization_index = r - 1;
      break;
    }
    fresh_symbols = !trace.steps.back().emitted.empty();
  }
  return trace;
}

// ---------------------------------------------------------------------------
// transports

namespace {

Valuation to_reduced(const LagrangianTheory& th, const LayerPtr& target,
                     const Valuation& src) {
  int n = th.chart->n();
  Valuation out;
  EvalCache cache;
  for (const CoordId& c : target->coords) {
    switch (c.space) {
      case Space::Base:
      case Space::Fiber:
        out[c] = src.at(c);
        break;
      case Space::MomentumPmu:
        out[c] = cache.eval(th.dLdz[(std::size_t)(c.a * n + c.b)], src);
        break;
      default:
        fail(ErrorKind::LayerMismatch,
             "cannot transport onto coordinate space of the target layer");
    }
  }
  return out;
}

Valuation to_velocity(const LayerPtr& target, const Valuation& src) {
  Valuation out;
  for (const CoordId& c : target->coords) out[c] = src.at(c);
  return out;
}

int last_step(const AlgorithmTrace& t) {
  return t.steps.empty() ? 0 : t.steps.back().r;
}

}  // namespace

TransportReport transport_and_compare(const LagrangianTheory& th,
                                      const AlgorithmTrace& restricted,
                                      const AlgorithmTrace& lagrangian,
                                      const AlgorithmTrace& hamiltonian,
                                      int max_points) {
  TransportReport rep;
  rep.stab_lagrangian = lagrangian.stabilization_index;
  rep.stab_hamiltonian = hamiltonian.stabilization_index;
  rep.stab_restricted = restricted.stabilization_index;
  rep.stabilization_agree =
      lagrangian.stabilized && hamiltonian.stabilized && restricted.stabilized &&
      lagrangian.stabilization_index == hamiltonian.stabilization_index &&
      lagrangian.stabilization_index == restricted.stabilization_index;

  int top = std::max({last_step(lagrangian), last_step(hamiltonian),
                      last_step(restricted)});
  auto source_points = [&](const AlgorithmTrace& t, int r) {
    int idx = std::clamp(r, 1, last_step(t)) - 1;
    auto pts = t.steps[(std::size_t)idx].accepted_points();
    if ((int)pts.size() > max_points) pts.resize((std::size_t)max_points);
    return pts;
  };
  auto run = [&](const AlgorithmTrace& src, const AlgorithmTrace& dst,
                 const std::string& name, int r, bool reduced) {
    TransportEntry entry{r, name, 0.0, 0};
    const ConstraintSet& target = dst.set_at(r);
    for (const auto& pt : source_points(src, r)) {
      Valuation image = reduced ? to_reduced(th, dst.layer, pt)
                                : to_velocity(dst.layer, pt);
      entry.max_violation =
          std::max(entry.max_violation, target.scaled_residual(image));
      ++entry.points;
    }
    rep.max_violation = std::max(rep.max_violation, entry.max_violation);
    rep.entries.push_back(std::move(entry));
  };
  for (int r = 2; r <= top; ++r) {
    run(lagrangian, hamiltonian, "Leg1(Z_r) -> Ztilde_r", r, true);
    run(restricted, hamiltonian, "pr1(What_r) -> Ztilde_r", r, true);
    run(restricted, lagrangian, "pr2(What_r) -> Z_r", r, false);
  }
  return rep;
}

std::string trace_to_json(const AlgorithmTrace& trace) {
  nlohmann::json j;
  j["formalism"] = chain_kind_name(trace.kind);
  j["stabilized"] = trace.stabilized;
  j["steps"] = nlohmann::json::array();
  CoordNamer namer = trace.layer->chart->namer();
  for (const auto& st : trace.steps) {
    nlohmann::json s;
    s["r"] = st.r;
    auto cs = nlohmann::json::array();
    for (const auto& e : st.set.entries) cs.push_back(to_string(e.fn, namer));
    s["constraints"] = std::move(cs);
    s["accepted_fraction"] = st.accepted_fraction;
    s["max_residual"] = st.max_residual;
    j["steps"].push_back(std::move(s));
  }
  return j.dump(2);
}

}  // namespace fieldlab
