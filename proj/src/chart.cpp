#include "fieldlab/chart.hpp"

#include <algorithm>

#include "fieldlab/errors.hpp"

namespace fieldlab {

int Layer::position(CoordId id) const {
  auto it = pos.find(id);
  if (it == pos.end())
    fail(ErrorKind::UnknownCoordinate,
         "coordinate " + (chart ? chart->coord_name(id) : default_coord_name(id)) +
             " is not part of layer '" + name + "'");
  return it->second;
}

bool is_reserved_word(const std::string& s) {
  static const char* words[] = {"sum", "det2", "sqrt", "sin", "cos",
                                "exp", "log",  "x",    "p"};
  for (const char* w : words)
    if (s == w) return true;
  return false;
}

std::shared_ptr<BundleChart> BundleChart::create(int n, std::vector<FiberGroup> groups) {
  if (n < 1) fail(ErrorKind::BadInput, "base dimension must be at least 1");
  auto chart = std::shared_ptr<BundleChart>(new BundleChart());
  chart->n_ = n;
  int off = 0;
  for (auto& g : groups) {
    if (g.name.empty() || is_reserved_word(g.name))
      fail(ErrorKind::BadInput, "bad fiber group name '" + g.name + "'");
    if (g.sym2 && n != 2)
      fail(ErrorKind::BadInput, "sym2 groups require a 2-dimensional base");
    if (!g.sym2 && g.count < 1)
      fail(ErrorKind::BadInput, "fiber group '" + g.name + "' must have components");
    if (g.momentum.empty()) g.momentum = "p" + g.name;
    if (is_reserved_word(g.momentum))
      fail(ErrorKind::BadInput, "bad momentum name '" + g.momentum + "'");
    g.offset = off;
    off += g.size();
  }
  chart->m_ = off;
  chart->groups_ = std::move(groups);
  for (int gi = 0; gi < (int)chart->groups_.size(); ++gi) {
    const auto& g = chart->groups_[gi];
    if (!chart->group_by_name_.emplace(g.name, gi).second)
      fail(ErrorKind::BadInput, "duplicate fiber group name '" + g.name + "'");
    if (chart->group_by_name_.count(g.momentum) ||
        !chart->group_by_momentum_.emplace(g.momentum, gi).second)
      fail(ErrorKind::BadInput, "momentum name '" + g.momentum + "' collides");
  }
  for (const auto& g : chart->groups_)
    if (chart->group_by_momentum_.count(g.name))
      fail(ErrorKind::BadInput, "group name '" + g.name + "' collides with a momentum");
  return chart;
}

const FiberGroup* BundleChart::find_group(const std::string& name) const {
  auto it = group_by_name_.find(name);
  return it == group_by_name_.end() ? nullptr : &groups_[it->second];
}

const FiberGroup* BundleChart::group_of_fiber_index(int flat) const {
  for (const auto& g : groups_)
    if (flat >= g.offset && flat < g.offset + g.size()) return &g;
  return nullptr;
}

const FiberGroup* BundleChart::momentum_group(const std::string& name) const {
  auto it = group_by_momentum_.find(name);
  return it == group_by_momentum_.end() ? nullptr : &groups_[it->second];
}

int BundleChart::fiber_index(const FiberGroup& g, const std::vector<int>& idx) const {
  if (g.sym2) {
    if (idx.size() != 2)
      fail(ErrorKind::UnknownCoordinate,
           "group '" + g.name + "' takes two indices");
    int a = idx[0], b = idx[1];
    if (a < 0 || a > 1 || b < 0 || b > 1)
      fail(ErrorKind::UnknownCoordinate,
           "index out of range for sym2 group '" + g.name + "'");
    if (a > b) std::swap(a, b);
    // (0,0) -> 0, (0,1) -> 1, (1,1) -> 2
    return g.offset + a + b;
  }
  if (idx.size() != 1)
    fail(ErrorKind::UnknownCoordinate, "group '" + g.name + "' takes one index");
  if (idx[0] < 0 || idx[0] >= g.count)
    fail(ErrorKind::UnknownCoordinate,
         "index out of range for group '" + g.name + "'");
  return g.offset + idx[0];
}

std::string BundleChart::coord_name(CoordId id) const {
  auto fiber_display = [&](int flat, std::string* group_name) -> std::string {
    const FiberGroup* g = group_of_fiber_index(flat);
    if (!g) return "?" + std::to_string(flat);
    *group_name = g->name;
    int local = flat - g->offset;
    if (g->sym2) {
      int a = local == 2 ? 1 : 0;
      int b = local == 0 ? 0 : (local == 1 ? 1 : 1);
      return std::to_string(a) + "," + std::to_string(b);
    }
    return std::to_string(local);
  };
  switch (id.space) {
    case Space::Base:
      return "x[" + std::to_string(id.a) + "]";
    case Space::Fiber: {
      std::string g;
      std::string ix = fiber_display(id.a, &g);
      return g + "[" + ix + "]";
    }
    case Space::Jet: {
      std::string g;
      std::string ix = fiber_display(id.a, &g);
      return g + "[" + ix + "," + std::to_string(id.b) + "]";
    }
    case Space::MomentumP:
      return "p";
    case Space::MomentumPmu: {
      std::string g;
      std::string ix = fiber_display(id.a, &g);
      const FiberGroup* grp = group_of_fiber_index(id.a);
      return (grp ? grp->momentum : "p?") + "[" + ix + "," + std::to_string(id.b) + "]";
    }
  }
  return "?";
}

std::optional<CoordId> BundleChart::resolve_coord(const std::string& name,
                                                  const std::vector<int>& idx) const {
  if (name == "x") {
    if (idx.size() != 1 || idx[0] < 0 || idx[0] >= n_) return std::nullopt;
    return base_coord(idx[0]);
  }
  if (name == "p") {
    if (!idx.empty()) return std::nullopt;
    return momentum_p();
  }
  if (const FiberGroup* g = find_group(name)) {
    int arity = g->sym2 ? 2 : 1;
    if ((int)idx.size() == arity) {
      return fiber_coord(fiber_index(*g, idx));
    }
    if ((int)idx.size() == arity + 1) {
      int mu = idx.back();
      if (mu < 0 || mu >= n_) return std::nullopt;
      std::vector<int> fid(idx.begin(), idx.end() - 1);
      return jet_coord(fiber_index(*g, fid), mu);
    }
    return std::nullopt;
  }
  if (const FiberGroup* g = momentum_group(name)) {
    int arity = g->sym2 ? 2 : 1;
    if ((int)idx.size() != arity + 1) return std::nullopt;
    int mu = idx.back();
    if (mu < 0 || mu >= n_) return std::nullopt;
    std::vector<int> fid(idx.begin(), idx.end() - 1);
    return momentum_pmu(fiber_index(*g, fid), mu);
  }
  return std::nullopt;
}

void BundleChart::register_table(const std::string& name, int arity,
                                 std::map<std::vector<int>, Expr> entries) {
  if (is_reserved_word(name) || group_by_name_.count(name) ||
      group_by_momentum_.count(name))
    fail(ErrorKind::BadInput, "table name '" + name + "' collides");
  for (const auto& [k, v] : entries)
    if ((int)k.size() != arity)
      fail(ErrorKind::BadInput, "table '" + name + "' has a mis-sized key");
  Table t;
  t.arity = arity;
  t.entries = std::move(entries);
  tables_[name] = std::move(t);
}

const BundleChart::Table* BundleChart::find_table(const std::string& name) const {
  auto it = tables_.find(name);
  return it == tables_.end() ? nullptr : &it->second;
}

LayerPtr BundleChart::build_layer(const std::string& name,
                                  std::vector<CoordId> coords) const {
  auto layer = std::make_shared<Layer>();
  layer->chart = shared_from_this();
  layer->name = name;
  layer->coords = std::move(coords);
  for (int i = 0; i < (int)layer->coords.size(); ++i) {
    if (!layer->pos.emplace(layer->coords[i], i).second)
      fail(ErrorKind::BadInput, "layer '" + name + "' repeats a coordinate");
  }
  for (int mu = 0; mu < n_; ++mu) {
    auto it = layer->pos.find(base_coord(mu));
    if (it == layer->pos.end() || it->second != mu)
      fail(ErrorKind::BadInput,
           "layer '" + name + "' must start with the base coordinates in order");
  }
  return layer;
}

LayerPtr BundleChart::layer_velocity() const {
  if (velocity_) return velocity_;
  std::vector<CoordId> c;
  for (int mu = 0; mu < n_; ++mu) c.push_back(base_coord(mu));
  for (int i = 0; i < m_; ++i) c.push_back(fiber_coord(i));
  for (int i = 0; i < m_; ++i)
    for (int mu = 0; mu < n_; ++mu) c.push_back(jet_coord(i, mu));
  velocity_ = build_layer("velocity", std::move(c));
  return velocity_;
}

LayerPtr BundleChart::layer_full_dual() const {
  if (full_dual_) return full_dual_;
  std::vector<CoordId> c;
  for (int mu = 0; mu < n_; ++mu) c.push_back(base_coord(mu));
  for (int i = 0; i < m_; ++i) c.push_back(fiber_coord(i));
  c.push_back(momentum_p());
  for (int i = 0; i < m_; ++i)
    for (int mu = 0; mu < n_; ++mu) c.push_back(momentum_pmu(i, mu));
  full_dual_ = build_layer("full_dual", std::move(c));
  return full_dual_;
}

LayerPtr BundleChart::layer_reduced_dual() const {
  if (reduced_dual_) return reduced_dual_;
  std::vector<CoordId> c;
  for (int mu = 0; mu < n_; ++mu) c.push_back(base_coord(mu));
  for (int i = 0; i < m_; ++i) c.push_back(fiber_coord(i));
  for (int i = 0; i < m_; ++i)
    for (int mu = 0; mu < n_; ++mu) c.push_back(momentum_pmu(i, mu));
  reduced_dual_ = build_layer("reduced_dual", std::move(c));
  return reduced_dual_;
}

LayerPtr BundleChart::layer_pairing() const {
  if (pairing_) return pairing_;
  std::vector<CoordId> c;
  for (int mu = 0; mu < n_; ++mu) c.push_back(base_coord(mu));
  for (int i = 0; i < m_; ++i) c.push_back(fiber_coord(i));
  c.push_back(momentum_p());
  for (int i = 0; i < m_; ++i)
    for (int mu = 0; mu < n_; ++mu) c.push_back(momentum_pmu(i, mu));
  for (int i = 0; i < m_; ++i)
    for (int mu = 0; mu < n_; ++mu) c.push_back(jet_coord(i, mu));
  pairing_ = build_layer("pairing", std::move(c));
  return pairing_;
}

LayerPtr BundleChart::make_layer(const std::string& name,
                                 std::vector<CoordId> coords) const {
  return build_layer(name, std::move(coords));
}

CoordNamer BundleChart::namer() const {
  auto self = shared_from_this();
  return [self](CoordId id) { return self->coord_name(id); };
}

double PointAssignment::get(CoordId id) const {
  auto it = values.find(id);
  if (it == values.end())
    fail(ErrorKind::MissingCoordinate,
         "no value for " + (chart ? chart->coord_name(id) : default_coord_name(id)));
  return it->second;
}

Eigen::VectorXd PointAssignment::to_vector(const Layer& layer) const {
  Eigen::VectorXd v(layer.dim());
  for (int i = 0; i < layer.dim(); ++i) v[i] = get(layer.coords[i]);
  return v;
}

PointAssignment PointAssignment::from_vector(const Layer& layer,
                                             const Eigen::VectorXd& v) {
  if (v.size() != layer.dim())
    fail(ErrorKind::BadInput, "vector size does not match layer dimension");
  PointAssignment p;
  p.chart = layer.chart;
  for (int i = 0; i < layer.dim(); ++i) p.values[layer.coords[i]] = v[i];
  return p;
}

PointAssignment PointAssignment::restricted_to(const Layer& layer) const {
  PointAssignment p;
  p.chart = chart;
  for (const auto& c : layer.coords) p.values[c] = get(c);
  return p;
}

}  // namespace fieldlab
