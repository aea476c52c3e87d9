#include "fieldlab/mechanics.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include <json.hpp>

#include "fieldlab/bundles.hpp"
#include "fieldlab/equiv.hpp"
#include "fieldlab/forms.hpp"
#include "fieldlab/linalg.hpp"

namespace fieldlab {

namespace {

double fd_h(double x) { return 1e-6 * std::max(1.0, std::abs(x)); }

Eigen::MatrixXd two_form_matrix(const FormD& w) {
  int dim = w.layer()->dim();
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(dim, dim);
  for (const auto& [idx, c] : w.terms()) {
    W(idx[0], idx[1]) += c;
    W(idx[1], idx[0]) -= c;
  }
  return W;
}

void require_closed(const FormX& w, const char* what) {
  for (const auto& [idx, c] : exterior_d(w).terms())
    if (!equiv_zero(c))
      fail(ErrorKind::NotClosed, std::string(what) + " is not closed");
}

}  // namespace

// ---------------------------------------------------------------------------
// Reeb problems

ReebProblem make_reeb_problem(LayerPtr layer, FormX omega, FormX eta) {
  if (!layer) fail(ErrorKind::BadInput, "reeb problem needs a layer");
  if (omega.layer() != layer || eta.layer() != layer)
    fail(ErrorKind::LayerMismatch, "forms live on a different layer");
  if (omega.degree() != 2 || eta.degree() != 1)
    fail(ErrorKind::DegreeMismatch,
         "reeb problem pairs a two-form with a one-form");
  if (layer->dim() < 3 || layer->dim() % 2 == 0)
    fail(ErrorKind::BadInput, "layer dimension must be odd and at least 3");
  require_closed(omega, "the two-form");
  require_closed(eta, "the one-form");
  return ReebProblem{std::move(layer), std::move(omega), std::move(eta)};
}

Eigen::VectorXd reeb_components(const ReebProblem& rp, const Valuation& pt,
                                double tol) {
  int dim = rp.layer->dim();
  Eigen::MatrixXd W = two_form_matrix(evaluate_form(rp.omega, pt));
  FormD e = evaluate_form(rp.eta, pt);
  Eigen::MatrixXd M(dim + 1, dim);
  M.topRows(dim) = W.transpose();
  M.row(dim).setZero();
  for (const auto& [idx, c] : e.terms()) M(dim, idx[0]) = c;
  Eigen::VectorXd b = Eigen::VectorXd::Zero(dim + 1);
  b(dim) = 1.0;
  LeastSquares ls = solve_min_norm(M, b);
  if (ls.rank < dim)
    fail(ErrorKind::DegenerateStructure,
         "pointwise direction system is rank deficient");
  if (ls.rel_residual > tol)
    fail(ErrorKind::DegenerateStructure,
         "transversality row is inconsistent with the kernel");
  return ls.x;
}

FlowField reeb_flow(const ReebProblem& rp, double tol) {
  return [rp, tol](const Valuation& pt) { return reeb_components(rp, pt, tol); };
}

double sode_defect(const Eigen::VectorXd& xi, const LayerPtr& layer,
                   const Valuation& pt) {
  if (!layer) fail(ErrorKind::BadInput, "second-order defect needs a layer");
  if (layer->chart->n() != 1)
    fail(ErrorKind::BadInput,
         "second-order defect is defined over a one-dimensional base");
  if ((int)xi.size() != layer->dim())
    fail(ErrorKind::BadInput, "direction size does not match the layer");
  double worst = 0.0;
  for (int i = 0; i < layer->chart->m(); ++i) {
    CoordId y = fiber_coord(i);
    CoordId z = jet_coord(i, 0);
    if (!layer->contains(y) || !layer->contains(z))
      fail(ErrorKind::UnknownCoordinate,
           "layer carries no fiber and first-order pair");
    auto it = pt.find(z);
    if (it == pt.end())
      fail(ErrorKind::MissingCoordinate,
           "point carries no first-order coordinates");
    worst = std::max(worst, std::abs(xi(layer->position(y)) - it->second));
  }
  return worst;
}

// ---------------------------------------------------------------------------
// integration

Valuation Trajectory::state_at(std::size_t k) const {
  if (k >= states.size()) fail(ErrorKind::BadInput, "trajectory index out of range");
  Valuation out;
  for (int c = 0; c < layer->dim(); ++c)
    out[layer->coords[(std::size_t)c]] = states[k](c);
  return out;
}

Trajectory integrate(const LayerPtr& layer, const FlowField& f,
                     const Valuation& start, double horizon, double step) {
  if (!layer) fail(ErrorKind::BadInput, "integration needs a layer");
  if (!(step > 0.0) || !std::isfinite(step))
    fail(ErrorKind::BadInput, "step must be positive and finite");
  if (!(horizon > 0.0) || !std::isfinite(horizon))
    fail(ErrorKind::BadInput, "horizon must be positive and finite");
  int dim = layer->dim();
  long long nsteps = std::max(1LL, std::llround(horizon / step));
  double h = horizon / (double)nsteps;

  Eigen::VectorXd y(dim);
  for (int c = 0; c < dim; ++c) {
    auto it = start.find(layer->coords[(std::size_t)c]);
    if (it == start.end())
      fail(ErrorKind::MissingCoordinate,
           "initial state misses " + layer->chart->namer()(layer->coords[(std::size_t)c]));
    y(c) = it->second;
  }

  auto deriv = [&](const Eigen::VectorXd& s) {
    Valuation v;
    for (int c = 0; c < dim; ++c) v[layer->coords[(std::size_t)c]] = s(c);
    Eigen::VectorXd d = f(v);
    if ((int)d.size() != dim)
      fail(ErrorKind::BadInput, "flow field size does not match the layer");
    return d;
  };

  Trajectory tr;
  tr.layer = layer;
  tr.step = h;
  tr.times.reserve((std::size_t)nsteps + 1);
  tr.states.reserve((std::size_t)nsteps + 1);
  tr.times.push_back(0.0);
  tr.states.push_back(y);
  for (long long k = 0; k < nsteps; ++k) {
    Eigen::VectorXd k1 = deriv(y);
    Eigen::VectorXd k2 = deriv(y + (0.5 * h) * k1);
    Eigen::VectorXd k3 = deriv(y + (0.5 * h) * k2);
    Eigen::VectorXd k4 = deriv(y + h * k3);
    y += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    if (!y.allFinite())
      fail(ErrorKind::NonFiniteState,
           "state left the finite range at t = " +
               std::to_string((double)(k + 1) * h));
    tr.times.push_back((double)(k + 1) * h);
    tr.states.push_back(y);
  }
  return tr;
}

std::string trajectory_to_json(const Trajectory& tr) {
  nlohmann::json j;
  j["method"] = tr.method;
  j["step"] = tr.step;
  CoordNamer namer = tr.layer->chart->namer();
  auto coords = nlohmann::json::array();
  for (const CoordId& c : tr.layer->coords) coords.push_back(namer(c));
  j["coords"] = std::move(coords);
  j["times"] = tr.times;
  auto states = nlohmann::json::array();
  for (const auto& s : tr.states) {
    auto row = nlohmann::json::array();
    for (int c = 0; c < (int)s.size(); ++c) row.push_back(s(c));
    states.push_back(std::move(row));
  }
  j["states"] = std::move(states);
  return j.dump(2);
}

std::vector<Valuation> initial_conditions_from_json(const std::string& text,
                                                    const LayerPtr& layer) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& ex) {
    fail(ErrorKind::SyntaxError, std::string("initial conditions: ") + ex.what());
  }
  if (!doc.is_array())
    fail(ErrorKind::BadInput, "initial conditions must be a JSON array");
  CoordNamer namer = layer->chart->namer();
  std::map<std::string, CoordId> byname;
  for (const CoordId& c : layer->coords) byname[namer(c)] = c;
  std::vector<Valuation> out;
  for (const auto& item : doc) {
    if (!item.is_object())
      fail(ErrorKind::BadInput, "each initial condition must be an object");
    Valuation pt;
    for (const auto& [key, val] : item.items()) {
      auto it = byname.find(key);
      if (it == byname.end())
        fail(ErrorKind::UnknownCoordinate,
             "unknown coordinate '" + key + "' in initial condition");
      if (!val.is_number())
        fail(ErrorKind::BadInput, "coordinate '" + key + "' must be a number");
      pt[it->second] = val.get<double>();
    }
    for (const CoordId& c : layer->coords)
      if (!pt.count(c))
        fail(ErrorKind::MissingCoordinate,
             "initial condition misses " + namer(c));
    out.push_back(std::move(pt));
  }
  return out;
}


// ---------------------------------------------------------------------------
// the verification chain
//
// Everything below works with plain numbers: the pairing-space two-form is
// rebuilt at each point from finite differences of the Lagrangian, and the
// only symbolic inputs are the seed functions themselves. Deeper steps cut
// with the signed solvability functionals phi(x) = u^T (b(x) - M(x) xi*),
// where u is a left-null covector and xi* the minimum-norm direction, both
// frozen at the anchor point. (The unsigned membership residual has a
// vanishing gradient on the set, so the signed form is the one that yields
// usable tangency rows.)

namespace {

// Relative singular-value floor for every solve against finite-difference
// matrices: central differences carry ~1e-10 relative noise, so anything
// below this is rank noise, not structure. Without the floor the noise
// directions swallow the solvability obstructions.
constexpr double kOracleFloor = 1e-7;

// Differentiating a value that is itself assembled from first-order
// differences amplifies their ~1e-10 roundoff, so second-order stencils are
// much wider and the resulting tangency rows are good to ~5e-7 only. The
// acceptance floor keeps honest points from being rejected over that noise;
// genuine obstructions sit orders of magnitude above it.
constexpr double kSolveNoise = 1e-5;

double fd_h2(double x) { return 5e-4 * std::max(1.0, std::abs(x)); }

struct Sys {
  Eigen::MatrixXd M;
  Eigen::VectorXd b;
};

// One frozen block per level: the left-null covectors (columns of U) and the
// minimum-norm direction of that level's system at the anchor point.
struct Frozen {
  int level = 2;
  Eigen::MatrixXd U;
  Eigen::VectorXd xi;
};

struct OracleCtx {
  const LagrangianTheory* th = nullptr;
  LayerPtr layer;
  const ConstraintSet* seed = nullptr;
};

// Evaluated pairing-space two-form over a one-dimensional base:
//   -dP_i ^ dy^i + z^i dP_i ^ dt + (P_i - L_{z^i}) dz^i ^ dt - L_{y^i} dy^i ^ dt
Eigen::MatrixXd ctx_omega(const OracleCtx& c, const Valuation& pt) {
  int m = c.th->chart->m();
  int dim = c.layer->dim();
  int pt_t = c.layer->position(base_coord(0));
  auto dL = [&](const CoordId& id) {
    double h = fd_h(pt.at(id));
    Valuation up = pt, dn = pt;
    up[id] += h;
    dn[id] -= h;
    return (eval(c.th->L, up) - eval(c.th->L, dn)) / (2.0 * h);
  };
  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(dim, dim);
  for (int i = 0; i < m; ++i) {
    int py = c.layer->position(fiber_coord(i));
    int pz = c.layer->position(jet_coord(i, 0));
    int pp = c.layer->position(momentum_pmu(i, 0));
    W(pp, py) += -1.0;
    W(py, pp) += 1.0;
    double zi = pt.at(jet_coord(i, 0));
    W(pp, pt_t) += zi;
    W(pt_t, pp) += -zi;
    double ci = pt.at(momentum_pmu(i, 0)) - dL(jet_coord(i, 0));
    W(pz, pt_t) += ci;
    W(pt_t, pz) += -ci;
    double gi = -dL(fiber_coord(i));
    W(py, pt_t) += gi;
    W(pt_t, py) += -gi;
  }
  return W;
}

// contraction rows, the unit-time row, finite-difference seed tangency rows
Sys base_system(const OracleCtx& c, const Valuation& pt) {
  int dim = c.layer->dim();
  int k = c.seed->size();
  Sys s;
  s.M = Eigen::MatrixXd::Zero(dim + 1 + k, dim);
  s.b = Eigen::VectorXd::Zero(dim + 1 + k);
  s.M.topRows(dim) = ctx_omega(c, pt).transpose();
  s.M(dim, c.layer->position(base_coord(0))) = 1.0;
  s.b(dim) = 1.0;
  for (int e = 0; e < k; ++e) {
    const Expr& fn = c.seed->entries[(std::size_t)e].fn;
    for (int a = 0; a < dim; ++a) {
      CoordId id = c.layer->coords[(std::size_t)a];
      double h = fd_h(pt.at(id));
      Valuation up = pt, dn = pt;
      up[id] += h;
      dn[id] -= h;
      s.M(dim + 1 + e, a) = (eval(fn, up) - eval(fn, dn)) / (2.0 * h);
    }
  }
  return s;
}

Sys level_system(const OracleCtx& c, const Valuation& pt,
                 const std::vector<Frozen>& funcs, int upto);

// signed obstruction values of a frozen block, all covectors at once
Eigen::VectorXd functional_values(const OracleCtx& c, const Valuation& pt,
                                  const std::vector<Frozen>& funcs,
                                  const Frozen& f) {
  Sys s = level_system(c, pt, funcs, f.level);
  return f.U.transpose() * (s.b - s.M * f.xi);
}

Sys level_system(const OracleCtx& c, const Valuation& pt,
                 const std::vector<Frozen>& funcs, int upto) {
  Sys s = base_system(c, pt);
  int dim = c.layer->dim();
  std::vector<Eigen::MatrixXd> blocks;
  for (const Frozen& f : funcs) {
    if (f.level >= upto) continue;
    Eigen::MatrixXd G((Eigen::Index)f.U.cols(), dim);
    for (int a = 0; a < dim; ++a) {
      CoordId id = c.layer->coords[(std::size_t)a];
      double h = fd_h2(pt.at(id));
      Valuation up = pt, dn = pt;
      up[id] += h;
      dn[id] -= h;
      G.col(a) = (functional_values(c, up, funcs, f) -
                  functional_values(c, dn, funcs, f)) /
                 (2.0 * h);
    }
    blocks.push_back(std::move(G));
  }
  if (!blocks.empty()) {
    Eigen::Index extra = 0;
    for (const auto& g : blocks) extra += g.rows();
    Sys wide;
    wide.M.resize(s.M.rows() + extra, dim);
    wide.b = Eigen::VectorXd::Zero(s.b.size() + extra);
    wide.M.topRows(s.M.rows()) = s.M;
    wide.b.head(s.b.size()) = s.b;
    Eigen::Index at = s.M.rows();
    for (const auto& g : blocks) {
      wide.M.middleRows(at, g.rows()) = g;
      at += g.rows();
    }
    s = std::move(wide);
  }
  return s;
}

// left-null covectors of each level's system at the anchor point, levels
// strictly below the requested step
std::vector<Frozen> freeze_functionals(const OracleCtx& c, const Valuation& pt,
                                       int step) {
  std::vector<Frozen> funcs;
  for (int j = 2; j < step; ++j) {
    Sys s = level_system(c, pt, funcs, j);
    LeastSquares ls = solve_min_norm(s.M, s.b, kOracleFloor);
    if (ls.left_null.cols() > 0)
      funcs.push_back(Frozen{j, ls.left_null, ls.x});
  }
  return funcs;
}

// Gauss-Newton projection onto the numeric level set: seed values plus the
// signed functionals, re-frozen at every iterate.
bool project_level(const OracleCtx& c, const ChainOptions& opt, int level,
                   Valuation& pt) {
  int dim = c.layer->dim();
  double tol = std::max(opt.project_tol, 1e-9);
  try {
    for (int iter = 0; iter <= opt.project_iters; ++iter) {
      std::vector<Frozen> funcs = freeze_functionals(c, pt, level + 1);
      int k = c.seed->size();
      for (const Frozen& f : funcs) k += (int)f.U.cols();
      Eigen::VectorXd r(k);
      EvalCache cache;
      int e = 0;
      for (const auto& en : c.seed->entries) r(e++) = cache.eval(en.fn, pt);
      for (const Frozen& f : funcs) {
        Eigen::VectorXd v = functional_values(c, pt, funcs, f);
        r.segment(e, v.size()) = v;
        e += (int)v.size();
      }
      if (k == 0 || r.cwiseAbs().maxCoeff() <= tol) return true;
      if (iter == opt.project_iters) return false;
      Eigen::MatrixXd J(k, dim);
      for (int a = 0; a < dim; ++a) {
        CoordId id = c.layer->coords[(std::size_t)a];
        Valuation up = pt, dn = pt;
        double h = fd_h(pt.at(id));
        up[id] += h;
        dn[id] -= h;
        EvalCache cu, cd;
        int e2 = 0;
        for (const auto& en : c.seed->entries) {
          J(e2, a) = (cu.eval(en.fn, up) - cd.eval(en.fn, dn)) / (2.0 * h);
          ++e2;
        }
        double h2 = fd_h2(pt.at(id));
        Valuation up2 = pt, dn2 = pt;
        up2[id] += h2;
        dn2[id] -= h2;
        for (const Frozen& f : funcs) {
          Eigen::VectorXd gv = (functional_values(c, up2, funcs, f) -
                                functional_values(c, dn2, funcs, f)) /
                               (2.0 * h2);
          J.block(e2, a, gv.size(), 1) = gv;
          e2 += (int)gv.size();
        }
      }
      LeastSquares step = solve_min_norm(J, -r, kOracleFloor);
      for (int a = 0; a < dim; ++a)
        pt[c.layer->coords[(std::size_t)a]] += step.x(a);
    }
  } catch (const Error&) {
    return false;
  }
  return false;
}

Valuation draw_box_point(const LayerPtr& layer, const SampleBox& box,
                         std::mt19937_64& rng) {
  Valuation pt;
  for (const CoordId& c : layer->coords) {
    auto [lo, hi] = box.range(c);
    pt[c] = std::uniform_real_distribution<double>(lo, hi)(rng);
  }
  return pt;
}

}  // namespace

PresymplecticOracle::PresymplecticOracle(LagrangianTheory th, SampleBox box,
                                         ChainOptions opt)
    : th_(std::move(th)), box_(std::move(box)), opt_(opt) {
  if (th_.chart->n() != 1)
    fail(ErrorKind::BadInput,
         "the verification chain covers one-dimensional bases only");
  layer_ = th_.chart->layer_pairing();
  seed_.layer = layer_;
  seed_.tol = opt_.membership_tol;
  for (const Expr& r : momentum_residuals(th_))
    seed_.add(r, Provenance::PrimarySymbolic);
  seed_.add(scalar_momentum_residual(th_), Provenance::PrimarySymbolic);
  trace_.kind = ChainKind::UnifiedPairing;
  trace_.formalism = Formalism::UnifiedW0;
  trace_.layer = layer_;
}

bool PresymplecticOracle::solvable(const Valuation& pt, int step) const {
  try {
    System s = assemble_for_step(pt, step);
    return solve_min_norm(s.M, s.b, kOracleFloor).rel_residual <=
           std::max(opt_.solve_tol, kSolveNoise);
  } catch (const Error&) {
    return false;
  }
}

bool PresymplecticOracle::member(int r, const Valuation& pt) const {
  try {
    if (!seed_.satisfied(pt)) return false;
  } catch (const Error&) {
    return false;
  }
  for (int k = 2; k <= r; ++k)
    if (!solvable(pt, k)) return false;
  return true;
}

Eigen::VectorXd PresymplecticOracle::direction(const Valuation& pt,
                                               int step) const {
  System s = assemble_for_step(pt, step);
  return solve_min_norm(s.M, s.b, kOracleFloor).x;
}

PresymplecticOracle::System PresymplecticOracle::assemble_for_step(
    const Valuation& pt, int step) const {
  OracleCtx c{&th_, layer_, &seed_};
  std::vector<Frozen> funcs = freeze_functionals(c, pt, step);
  Sys s = level_system(c, pt, funcs, step);
  return System{std::move(s.M), std::move(s.b)};
}

std::vector<Valuation> PresymplecticOracle::draw_level(
    int level, int count, std::uint64_t salt) const {
  OracleCtx c{&th_, layer_, &seed_};
  std::mt19937_64 rng(opt_.seed + 0x9e3779b97f4a7c15ULL * salt);
  std::vector<Valuation> out;
  long budget = (long)count * opt_.draw_attempts;
  while ((int)out.size() < count && budget-- > 0) {
    Valuation pt = draw_box_point(layer_, box_, rng);
    if (!box_.guards_ok(pt)) continue;
    if (!project_level(c, opt_, level, pt)) continue;
    if (!box_.guards_ok(pt)) continue;
    if (!member(level, pt)) continue;
    out.push_back(std::move(pt));
  }
  return out;
}

const AlgorithmTrace& PresymplecticOracle::run() {
  if (ran_) return trace_;
  ran_ = true;

  StepTrace first;
  first.r = 1;
  first.set = seed_;
  CoordNamer namer = layer_->chart->namer();
  for (const auto& e : seed_.entries)
    first.emitted.push_back(to_string(e.fn, namer));
  first.sample = draw_level(1, opt_.samples_per_step, 1);
  first.accepted.assign(first.sample.size(), 1);
  first.accepted_fraction = 1.0;
  for (const auto& pt : first.sample)
    first.max_residual = std::max(first.max_residual, seed_.scaled_residual(pt));
  accepted_.assign(1, first.sample);
  trace_.steps.push_back(std::move(first));

  for (int r = 2; r <= opt_.max_steps; ++r) {
    std::vector<Valuation> sample =
        draw_level(r - 1, opt_.samples_per_step, (std::uint64_t)r);
    if (sample.empty()) break;  // nothing left to certify against

    StepTrace st;
    st.r = r;
    st.set = seed_;
    st.accepted.assign(sample.size(), 0);
    int count = 0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      try {
        System s = assemble_for_step(sample[i], r);
        LeastSquares ls = solve_min_norm(s.M, s.b, kOracleFloor);
        if (ls.rel_residual <= std::max(opt_.solve_tol, kSolveNoise)) {
          st.accepted[i] = 1;
          ++count;
          st.max_residual = std::max(st.max_residual, ls.rel_residual);
        }
      } catch (const Error&) {
      }
    }
    st.sample = std::move(sample);
    st.accepted_fraction = (double)count / (double)st.sample.size();
    if (count < (int)st.sample.size())
      st.emitted.push_back("solvability cut (numeric)");
    accepted_.push_back(st.accepted_points());
    bool settled = count == (int)st.sample.size();
    trace_.steps.push_back(std::move(st));
    if (settled) {
      trace_.stabilized = true;
      trace_.stabilization_index = r - 1;
      break;
    }
  }
  return trace_;
}

AlgorithmTrace presymplectic_chain_oracle(const LagrangianTheory& th,
                                          const SampleBox& box,
                                          const ChainOptions& opt) {
  PresymplecticOracle oracle(th, box, opt);
  oracle.run();
  return oracle.trace();
}

}  // namespace fieldlab
