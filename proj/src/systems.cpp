#include "fieldlab/systems.hpp"

#include <sstream>

#include "fieldlab/bundles.hpp"

namespace fieldlab {

namespace {

std::string tuple_label(const Layer& layer, const std::vector<int>& tuple) {
  const BundleChart& chart = *layer.chart;
  std::string out;
  for (std::size_t i = 0; i < tuple.size(); ++i) {
    if (i) out += " ^ ";
    out += "d" + chart.coord_name(layer.coords[tuple[i]]);
  }
  return out;
}

}  // namespace

SystemTemplate::SystemTemplate(Formalism f, LayerPtr layer, const FormX& omega)
    : formalism_(f), layer_(std::move(layer)) {
  if (omega.layer() != layer_)
    fail(ErrorKind::LayerMismatch, "form does not live on the system layer");
  int n = layer_->chart->n();
  int dim = layer_->dim();
  for (int t = n; t < dim; ++t)
    for (int mu = 0; mu < n; ++mu) columns_.push_back({layer_->coords[t], mu});

  LinearOperator<Expr> h0(layer_);
  for (int mu = 0; mu < n; ++mu) h0.add_entry(mu, mu, kconst(1.0));
  FormX base =
      contract_operator(omega, h0) - scale(kconst((double)(n - 1)), omega);

  std::map<std::vector<int>, Row> rows;
  auto row_for = [&](const std::vector<int>& tuple) -> Row& {
    auto it = rows.find(tuple);
    if (it == rows.end()) {
      Row r;
      r.tuple = tuple;
      it = rows.emplace(tuple, std::move(r)).first;
    }
    return it->second;
  };
  for (const auto& [idx, c] : base.terms()) row_for(idx).constant = c;
  for (int u = 0; u < (int)columns_.size(); ++u) {
    LinearOperator<Expr> eu(layer_);
    eu.add_entry(layer_->position(columns_[u].target), columns_[u].mu,
                 kconst(1.0));
    FormX cu = contract_operator(omega, eu);
    for (const auto& [idx, c] : cu.terms()) row_for(idx).coeffs[u] = c;
  }
  rows_.reserve(rows.size());
  for (auto& [idx, row] : rows) {
    // slot pushes that cancel against the (n-1) copies leave identically
    // zero rows behind; drop them so the system only carries live equations
    bool live = !equiv_zero(row.constant);
    for (auto it = row.coeffs.begin(); !live && it != row.coeffs.end(); ++it)
      live = !equiv_zero(it->second);
    if (!live) continue;
    row.label = tuple_label(*layer_, idx);
    rows_.push_back(std::move(row));
  }
}

int SystemTemplate::column_of(const CoordId& target, int mu) const {
  for (int u = 0; u < (int)columns_.size(); ++u)
    if (columns_[u].target == target && columns_[u].mu == mu) return u;
  fail(ErrorKind::BadInput, "no unknown for that coordinate and direction");
}

std::vector<Expr> SystemTemplate::unknown_free_rows() const {
  std::vector<Expr> out;
  for (const Row& r : rows_)
    if (r.coeffs.empty()) out.push_back(r.constant);
  return out;
}

ProjectorSystem SystemTemplate::assemble_at(const Valuation& pt) const {
  ProjectorSystem sys;
  sys.formalism = formalism_;
  sys.layer = layer_;
  sys.columns = columns_;
  sys.M = Eigen::MatrixXd::Zero((int)rows_.size(), (int)columns_.size());
  sys.b = Eigen::VectorXd::Zero((int)rows_.size());
  EvalCache cache;
  for (int r = 0; r < (int)rows_.size(); ++r) {
    sys.b(r) = -cache.eval(rows_[r].constant, pt);
    for (const auto& [u, c] : rows_[r].coeffs) sys.M(r, u) = cache.eval(c, pt);
    sys.row_labels.push_back(rows_[r].label);
  }
  return sys;
}

ProjectorSystem SystemTemplate::assemble_at(const Valuation& pt,
                                            const ConstraintSet& tangency) const {
  if (!tangency.empty() && tangency.layer != layer_)
    fail(ErrorKind::LayerMismatch, "constraints live on a different layer");
  if (!tangency.satisfied(pt))
    fail(ErrorKind::PointOffConstraint,
         "cannot impose tangency at a point off the constraint set");
  ProjectorSystem sys = assemble_at(pt);
  if (tangency.empty()) return sys;

  int n = layer_->chart->n();
  int extra = tangency.size() * n;
  int base_rows = (int)sys.M.rows();
  sys.M.conservativeResize(base_rows + extra, Eigen::NoChange);
  sys.M.bottomRows(extra).setZero();
  sys.b.conservativeResize(base_rows + extra);
  const auto& grads = tangency.gradients();
  EvalCache cache;
  int r = base_rows;
  for (int k = 0; k < tangency.size(); ++k) {
    for (int mu = 0; mu < n; ++mu, ++r) {
      sys.b(r) = -cache.eval(grads[k][mu], pt);
      for (int u = 0; u < (int)columns_.size(); ++u) {
        if (columns_[u].mu != mu) continue;
        int pos = layer_->position(columns_[u].target);
        double g = cache.eval(grads[k][pos], pt);
        if (g != 0.0) sys.M(r, u) = g;
      }
      std::ostringstream label;
      label << "tangency[" << k << "] along dx" << mu;
      sys.row_labels.push_back(label.str());
    }
  }
  return sys;
}

ConnectionCoeffs SystemTemplate::coefficients_from(
    const Eigen::VectorXd& x) const {
  if (x.size() != (int)columns_.size())
    fail(ErrorKind::BadInput, "solution size does not match the unknowns");
  ConnectionCoeffs cc(formalism_, layer_);
  for (int u = 0; u < (int)columns_.size(); ++u)
    cc.set(columns_[u].target, columns_[u].mu, kconst(x[u]));
  return cc;
}

SystemTemplate lagrangian_system(const LagrangianTheory& th) {
  return SystemTemplate(Formalism::LagrangianZ, th.chart->layer_velocity(),
                        theory_omega(th));
}

SystemTemplate unified_system(const LagrangianTheory& th) {
  return SystemTemplate(Formalism::UnifiedW0, th.chart->layer_pairing(),
                        coupling_omega(th));
}

SystemTemplate hamiltonian_system(const HamiltonianData& hd) {
  return SystemTemplate(Formalism::HamiltonianZstar, hd.layer,
                        hamiltonian_omega(hd));
}

SystemTemplate restricted_unified_system(const LagrangianTheory& th) {
  return SystemTemplate(Formalism::UnifiedW0, th.chart->layer_velocity(),
                        restricted_coupling_omega(th));
}

ConstraintSet primary_constraints_unified(const LagrangianTheory& th) {
  ConstraintSet cs;
  cs.layer = th.chart->layer_pairing();
  for (Expr& r : momentum_residuals(th))
    cs.add(std::move(r), Provenance::PrimarySymbolic);
  cs.add(coupling_hamiltonian(th), Provenance::PrimarySymbolic);
  return cs;
}

SolveResult solve_pointwise(const ProjectorSystem& sys, double tol) {
  SolveResult out;
  LeastSquares ls = solve_min_norm(sys.M, sys.b);
  out.solution = ls.x;
  out.residual = ls.rel_residual;
  out.solvable = ls.rel_residual <= tol;
  out.free_parameters = (int)sys.M.cols() - ls.rank;
  return out;
}

}  // namespace fieldlab
