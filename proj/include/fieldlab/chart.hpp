#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "fieldlab/expr.hpp"

namespace fieldlab {

class BundleChart;
using ChartPtr = std::shared_ptr<const BundleChart>;

// A named block of fiber coordinates. Vector groups have `count` components
// indexed with one index; sym2 groups are symmetric 2x2 blocks stored as the
// three components (0,0), (0,1), (1,1) and indexed with two indices.
struct FiberGroup {
  std::string name;
  int count = 1;
  bool sym2 = false;
  std::string momentum;  // name of the conjugate momentum block
  int offset = 0;        // flat offset into the fiber, filled by the chart

  int size() const { return sym2 ? 3 : count; }
};

// An ordered coordinate slice of the total space: the n base coordinates
// first, then whatever non-base coordinates the slice carries.
struct Layer {
  ChartPtr chart;
  std::string name;
  std::vector<CoordId> coords;
  std::unordered_map<CoordId, int, CoordIdHash> pos;

  int dim() const { return (int)coords.size(); }
  int position(CoordId id) const;
  bool contains(CoordId id) const { return pos.count(id) != 0; }
};

using LayerPtr = std::shared_ptr<const Layer>;

class BundleChart : public std::enable_shared_from_this<BundleChart> {
 public:
  // Builds the chart for an n-dimensional base and the given fiber groups.
  // Group and momentum names must be distinct identifiers and must avoid the
  // reserved words of the expression language.
  static std::shared_ptr<BundleChart> create(int n, std::vector<FiberGroup> groups);

  int n() const { return n_; }
  int m() const { return m_; }
  const std::vector<FiberGroup>& groups() const { return groups_; }

  const FiberGroup* find_group(const std::string& name) const;
  const FiberGroup* group_of_fiber_index(int flat) const;
  const FiberGroup* momentum_group(const std::string& name) const;

  // Flat fiber index of a component; sym2 indices are order-normalized.
  int fiber_index(const FiberGroup& g, const std::vector<int>& idx) const;

  std::string coord_name(CoordId id) const;
  // Resolves an identifier plus bracket indices against the chart: fiber
  // coordinates by group arity, jet coordinates with one extra base index,
  // momentum blocks by momentum name, "x" for base coordinates, "p" for the
  // scalar momentum.
  std::optional<CoordId> resolve_coord(const std::string& name,
                                       const std::vector<int>& idx) const;

  // Parse-time tables: a named family of expressions keyed by an index tuple.
  void register_table(const std::string& name, int arity,
                      std::map<std::vector<int>, Expr> entries);
  struct Table {
    int arity = 0;
    std::map<std::vector<int>, Expr> entries;
  };
  const Table* find_table(const std::string& name) const;

  // Canonical layers.
  LayerPtr layer_velocity() const;   // x, y, z
  LayerPtr layer_full_dual() const;  // x, y, p, P
  LayerPtr layer_reduced_dual() const;  // x, y, P
  LayerPtr layer_pairing() const;    // x, y, p, P, z
  LayerPtr make_layer(const std::string& name, std::vector<CoordId> coords) const;

  CoordNamer namer() const;

 private:
  BundleChart() = default;
  LayerPtr build_layer(const std::string& name, std::vector<CoordId> coords) const;

  int n_ = 0;
  int m_ = 0;
  std::vector<FiberGroup> groups_;
  std::unordered_map<std::string, int> group_by_name_;
  std::unordered_map<std::string, int> group_by_momentum_;
  std::unordered_map<std::string, Table> tables_;
  mutable LayerPtr velocity_, full_dual_, reduced_dual_, pairing_;
};

// A full or partial assignment of coordinate values.
struct PointAssignment {
  ChartPtr chart;
  Valuation values;

  double get(CoordId id) const;
  void set(CoordId id, double v) { values[id] = v; }
  bool has(CoordId id) const { return values.count(id) != 0; }

  Eigen::VectorXd to_vector(const Layer& layer) const;
  static PointAssignment from_vector(const Layer& layer, const Eigen::VectorXd& v);
  // Copies the layer's coordinates out of this assignment.
  PointAssignment restricted_to(const Layer& layer) const;
};

bool is_reserved_word(const std::string& s);

}  // namespace fieldlab
