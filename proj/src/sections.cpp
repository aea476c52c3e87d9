#include "fieldlab/sections.hpp"

#include <fstream>

#include "fieldlab/errors.hpp"
#include "fieldlab/parse.hpp"

namespace fieldlab {

int SectionGrid::count() const {
  int c = 1;
  for (int s : shape) c *= s;
  return c;
}

int SectionGrid::flat_index(const std::vector<int>& node) const {
  int f = 0;
  for (std::size_t a = 0; a < shape.size(); ++a) f = f * shape[a] + node[a];
  return f;
}

std::vector<int> SectionGrid::node_of(int flat) const {
  std::vector<int> node(shape.size());
  for (int a = (int)shape.size() - 1; a >= 0; --a) {
    node[a] = flat % shape[a];
    flat /= shape[a];
  }
  return node;
}

double SectionGrid::base_value(const std::vector<int>& node, int axis) const {
  return origin[axis] + spacing[axis] * node[axis];
}

Valuation SectionGrid::at(const std::vector<int>& node) const {
  Valuation v;
  for (std::size_t a = 0; a < shape.size(); ++a)
    v[base_coord((int)a)] = base_value(node, (int)a);
  int f = flat_index(node);
  for (const auto& [c, series] : values) v[c] = series[f];
  return v;
}

SectionGrid section_from_json(const nlohmann::json& j, const ChartPtr& chart) {
  SectionGrid g;
  g.chart = chart;
  const auto& grid = j.at("grid");
  g.shape = grid.at("shape").get<std::vector<int>>();
  g.origin = grid.at("origin").get<std::vector<double>>();
  g.spacing = grid.at("spacing").get<std::vector<double>>();
  if ((int)g.shape.size() != chart->n() || g.origin.size() != g.shape.size() ||
      g.spacing.size() != g.shape.size())
    fail(ErrorKind::BadInput, "grid arrays must have one entry per base axis");
  for (double s : g.spacing)
    if (!(s > 0)) fail(ErrorKind::BadInput, "grid spacing must be positive");
  int total = g.count();
  for (const auto& [name, arr] : j.at("values").items()) {
    Expr e = parse_expr(name, chart);
    if (e.kind() != ExprKind::Coord)
      fail(ErrorKind::BadInput, "values key '" + name + "' is not a coordinate");
    CoordId id = e.node().coord;
    auto series = arr.get<std::vector<double>>();
    if ((int)series.size() != total)
      fail(ErrorKind::BadInput, "value array for " + name + " has wrong length");
    g.values[id] = std::move(series);
  }
  return g;
}

nlohmann::json section_to_json(const SectionGrid& g) {
  nlohmann::json j;
  j["grid"]["shape"] = g.shape;
  j["grid"]["origin"] = g.origin;
  j["grid"]["spacing"] = g.spacing;
  nlohmann::json vals = nlohmann::json::object();
  for (const auto& [c, series] : g.values)
    vals[g.chart->coord_name(c)] = series;
  j["values"] = vals;
  return j;
}

SectionGrid load_section(const std::string& path, const ChartPtr& chart) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::BadInput, "cannot open " + path);
  nlohmann::json j;
  in >> j;
  return section_from_json(j, chart);
}

void save_section(const std::string& path, const SectionGrid& g) {
  std::ofstream out(path);
  if (!out) fail(ErrorKind::BadInput, "cannot open " + path);
  out << section_to_json(g).dump(2) << "\n";
}

std::vector<double> grid_derivative(const SectionGrid& g,
                                    const std::vector<double>& series, int axis) {
  for (int s : g.shape)
    if (s < 3)
      fail(ErrorKind::GridTooCoarse,
           "finite differences need at least 3 nodes per axis");
  double h = g.spacing[axis];
  int total = g.count();
  std::vector<double> out(total);
  for (int f = 0; f < total; ++f) {
    std::vector<int> node = g.node_of(f);
    int k = node[axis];
    int last = g.shape[axis] - 1;
    auto val = [&](int kk) {
      std::vector<int> nn = node;
      nn[axis] = kk;
      return series[g.flat_index(nn)];
    };
    if (k == 0)
      out[f] = (-3.0 * val(0) + 4.0 * val(1) - val(2)) / (2.0 * h);
    else if (k == last)
      out[f] = (3.0 * val(last) - 4.0 * val(last - 1) + val(last - 2)) / (2.0 * h);
    else
      out[f] = (val(k + 1) - val(k - 1)) / (2.0 * h);
  }
  return out;
}

void prolong_section(SectionGrid& g) {
  int n = (int)g.shape.size();
  for (int i = 0; i < g.chart->m(); ++i) {
    auto yit = g.values.find(fiber_coord(i));
    if (yit == g.values.end())
      fail(ErrorKind::BadInput, "section lacks values for " +
                                    g.chart->coord_name(fiber_coord(i)));
    for (int mu = 0; mu < n; ++mu) {
      CoordId zc = jet_coord(i, mu);
      if (g.values.count(zc)) continue;
      g.values[zc] = grid_derivative(g, yit->second, mu);
    }
  }
}

ResidualField field_equation_residual(const LagrangianTheory& th, SectionGrid g) {
  prolong_section(g);
  int n = th.chart->n(), m = th.chart->m();
  int total = g.count();
  ResidualField out;
  out.shape = g.shape;
  out.max_abs.assign(total, 0.0);

  // momentum series dL/dz^i_mu along the section
  std::vector<std::vector<double>> lz(m * n, std::vector<double>(total));
  std::vector<std::vector<double>> ly(m, std::vector<double>(total));
  for (int f = 0; f < total; ++f) {
    Valuation at = g.at(g.node_of(f));
    EvalCache cache;
    for (int i = 0; i < m; ++i) {
      ly[i][f] = cache.eval(th.dLdy[i], at);
      for (int mu = 0; mu < n; ++mu)
        lz[i * n + mu][f] = cache.eval(th.dLdz[i * n + mu], at);
    }
  }
  for (int i = 0; i < m; ++i) {
    std::vector<double> res = ly[i];
    for (int mu = 0; mu < n; ++mu) {
      std::vector<double> dv = grid_derivative(g, lz[i * n + mu], mu);
      for (int f = 0; f < total; ++f) res[f] -= dv[f];
    }
    for (int f = 0; f < total; ++f)
      out.max_abs[f] = std::max(out.max_abs[f], std::abs(res[f]));
    out.comps.emplace_back(th.chart->coord_name(fiber_coord(i)), std::move(res));
  }
  return out;
}

ResidualField canonical_equation_residual(const HamiltonianData& hd, SectionGrid g) {
  const LayerPtr& layer = hd.layer;
  int total = g.count();
  ResidualField out;
  out.shape = g.shape;
  out.max_abs.assign(total, 0.0);

  std::vector<CoordId> momenta;
  for (const auto& c : layer->coords)
    if (c.space == Space::MomentumPmu) momenta.push_back(c);

  // dH evaluated along the section
  std::map<CoordId, std::vector<double>> dH;
  for (const auto& c : layer->coords) {
    if (c.space == Space::Base) continue;
    dH[c] = std::vector<double>(total);
  }
  for (int f = 0; f < total; ++f) {
    Valuation at = g.at(g.node_of(f));
    EvalCache cache;
    for (auto& [c, series] : dH) series[f] = cache.eval(diff(hd.H, c), at);
  }

  // dy^i/dx^mu = dH/dP^mu_i for every momentum in the layer
  for (const auto& c : momenta) {
    int i = c.a, mu = c.b;
    auto yit = g.values.find(fiber_coord(i));
    if (yit == g.values.end())
      fail(ErrorKind::BadInput, "section lacks values for " +
                                    g.chart->coord_name(fiber_coord(i)));
    std::vector<double> res = grid_derivative(g, yit->second, mu);
    const auto& rhs = dH[c];
    for (int f = 0; f < total; ++f) res[f] -= rhs[f];
    for (int f = 0; f < total; ++f)
      out.max_abs[f] = std::max(out.max_abs[f], std::abs(res[f]));
    out.comps.emplace_back("d" + g.chart->coord_name(fiber_coord(i)) + "/dx[" +
                               std::to_string(mu) + "]",
                           std::move(res));
  }
  // sum_mu dP^mu_i/dx^mu = -dH/dy^i per fiber coordinate with momenta present
  for (int i = 0; i < hd.chart->m(); ++i) {
    bool any = false;
    std::vector<double> res(total, 0.0);
    for (const auto& c : momenta) {
      if (c.a != i) continue;
      any = true;
      auto pit = g.values.find(c);
      if (pit == g.values.end())
        fail(ErrorKind::BadInput,
             "section lacks values for " + g.chart->coord_name(c));
      std::vector<double> dv = grid_derivative(g, pit->second, c.b);
      for (int f = 0; f < total; ++f) res[f] += dv[f];
    }
    if (!any) continue;
    auto hit = dH.find(fiber_coord(i));
    if (hit != dH.end())
      for (int f = 0; f < total; ++f) res[f] += hit->second[f];
    for (int f = 0; f < total; ++f)
      out.max_abs[f] = std::max(out.max_abs[f], std::abs(res[f]));
    out.comps.emplace_back("div " + g.chart->coord_name(fiber_coord(i)) + "-momenta",
                           std::move(res));
  }
  return out;
}

ResidualField contraction_residual(const LagrangianTheory& th, SectionGrid g) {
  prolong_section(g);
  LayerPtr layer = th.chart->layer_velocity();
  int n = th.chart->n();
  int total = g.count();
  ResidualField out;
  out.shape = g.shape;
  out.max_abs.assign(total, 0.0);
  FormX omega = theory_omega(th);

  // finite-difference gradients of every layer coordinate along the section
  std::map<CoordId, std::vector<std::vector<double>>> grad;
  for (const auto& c : layer->coords) {
    std::vector<std::vector<double>> dall;
    if (c.space == Space::Base) {
      for (int a = 0; a < n; ++a)
        dall.push_back(std::vector<double>(total, c.a == a ? 1.0 : 0.0));
    } else {
      const auto& series = g.values.at(c);
      for (int a = 0; a < n; ++a) dall.push_back(grid_derivative(g, series, a));
    }
    grad[c] = std::move(dall);
  }

  for (int xi = 0; xi < layer->dim(); ++xi) {
    VectorField<Expr> X{layer, {}};
    X.set(xi, kconst(1.0));
    FormX contracted = contract_vector(omega, X);
    std::vector<double> res(total, 0.0);
    for (int f = 0; f < total; ++f) {
      Valuation at = g.at(g.node_of(f));
      EvalCache cache;
      double value = 0.0;
      for (const auto& [idx, coeff] : contracted.terms()) {
        // pullback coefficient: det over base axes of the index gradients
        double c = cache.eval(coeff, at);
        if ((int)idx.size() != n) fail(ErrorKind::DegreeMismatch, "bad degree");
        if (n == 1) {
          value += c * grad[layer->coords[idx[0]]][0][f];
        } else if (n == 2) {
          const auto& u = grad[layer->coords[idx[0]]];
          const auto& v = grad[layer->coords[idx[1]]];
          value += c * (u[0][f] * v[1][f] - u[1][f] * v[0][f]);
        } else {
          fail(ErrorKind::BadInput, "contraction residuals support n <= 2");
        }
      }
      res[f] = value;
      out.max_abs[f] = std::max(out.max_abs[f], std::abs(value));
    }
    out.comps.emplace_back("i_" + th.chart->coord_name(layer->coords[xi]),
                           std::move(res));
  }
  return out;
}

}  // namespace fieldlab
