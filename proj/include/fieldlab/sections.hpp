#pragma once

#include <string>

#include <json.hpp>

#include "fieldlab/bundles.hpp"

namespace fieldlab {

// Sampled section over a regular axis-aligned grid on the base. Values hold
// one flat row-major array per non-base coordinate; jet values may be absent
// and filled in by finite differences.
struct SectionGrid {
  ChartPtr chart;
  std::vector<int> shape;       // nodes per base axis, length n
  std::vector<double> origin;
  std::vector<double> spacing;
  std::map<CoordId, std::vector<double>> values;

  int count() const;
  int flat_index(const std::vector<int>& node) const;
  std::vector<int> node_of(int flat) const;
  double base_value(const std::vector<int>& node, int axis) const;
  // Full valuation at a node (base coordinates included).
  Valuation at(const std::vector<int>& node) const;
};

SectionGrid section_from_json(const nlohmann::json& j, const ChartPtr& chart);
nlohmann::json section_to_json(const SectionGrid& g);
SectionGrid load_section(const std::string& path, const ChartPtr& chart);
void save_section(const std::string& path, const SectionGrid& g);

// Second-order finite-difference derivative of a nodal series along an axis
// (central in the interior, one-sided at the boundary). Grids need at least
// 3 nodes per axis; GridTooCoarse otherwise.
std::vector<double> grid_derivative(const SectionGrid& g,
                                    const std::vector<double>& series, int axis);

// Fills missing jet values from the fiber values.
void prolong_section(SectionGrid& g);

struct ResidualField {
  std::vector<int> shape;
  std::vector<std::pair<std::string, std::vector<double>>> comps;
  std::vector<double> max_abs;  // per node, over components
};

// dL/dy^i - d/dx^mu (dL/dz^i_mu) along the section, one component per fiber
// coordinate.
ResidualField field_equation_residual(const LagrangianTheory& th, SectionGrid g);

// dy^i/dx^mu - dH/dP^mu_i and sum_mu dP^mu_i/dx^mu + dH/dy^i along a section
// of the Hamiltonian layer.
ResidualField canonical_equation_residual(const HamiltonianData& hd, SectionGrid g);

// Pullback of i_X(theory_omega) along the section for every coordinate basis
// field X; one component per basis field, reported as the coefficient of the
// base volume form.
ResidualField contraction_residual(const LagrangianTheory& th, SectionGrid g);

}  // namespace fieldlab
