#pragma once

#include <string>
#include <utility>
#include <vector>

#include "fusemap/common.hpp"

namespace fusemap::graph {

/// Areal neighbourhood structure. Undirected, no self-loops, no duplicate
/// edges; disconnected graphs and isolated areas are allowed.
struct AdjacencyGraph {
  int n_areas = 0;
  std::vector<std::pair<int, int>> edges;  // each pair (a, b) with a < b
  std::vector<std::string> area_ids;       // external identifier per index

  std::vector<int> degrees() const;
};

struct Component {
  std::vector<int> areas;
  bool singleton = false;
};

struct ComponentLabeling {
  std::vector<int> component_id;  // per area
  std::vector<Component> components;

  int n_components() const { return static_cast<int>(components.size()); }
  int n_singletons() const;
  int n_connected() const { return n_components() - n_singletons(); }
};

/// Scaled intrinsic CAR structure over a possibly disconnected graph.
/// Each non-singleton component block is multiplied by its scale factor so
/// the geometric mean of the constrained generalized-inverse diagonal is 1;
/// singleton rows get a unit diagonal (standard Gaussian under the shared
/// precision).
struct ScaledIcar {
  SpMat structure;
  std::vector<double> scale_factors;    // per component, 1.0 for singletons
  Eigen::MatrixXd constraints;          // one sum-to-zero row per non-singleton component
  std::vector<int> singleton_rows;
  ComponentLabeling labeling;
};

/// Parse the plain-text graph format: first line `N`, then one line per
/// area `<index> <k> <n1> ... <nk>`, 0-based, mutually consistent.
AdjacencyGraph parse_graph(const std::string& text);

ComponentLabeling connected_components(const AdjacencyGraph& g);

/// iCAR structure matrix: diagonal = degree, off-diagonal = -1 for
/// neighbours. Singleton rows are all zero at this step.
SpMat icar_structure(const AdjacencyGraph& g);

ScaledIcar scale_icar(const SpMat& structure, const ComponentLabeling& labeling);

/// Constrained generalized inverse of a symmetric PSD matrix: eigendecompose,
/// invert eigenvalues above the relative cutoff, zero the rest. With the
/// sum-to-zero constraint spanning the null space this equals the covariance
/// of the constrained intrinsic field.
Eigen::MatrixXd constrained_ginverse(const Eigen::MatrixXd& m, double rel_cutoff = 1e-10,
                                     int expected_deficiency = -1);

}  // namespace fusemap::graph
