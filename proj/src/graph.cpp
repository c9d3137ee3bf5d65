#include "fusemap/graph.hpp"

#include <algorithm>
#include <deque>
#include <set>
#include <sstream>

namespace fusemap::graph {

std::vector<int> AdjacencyGraph::degrees() const {
  std::vector<int> deg(n_areas, 0);
  for (const auto& [a, b] : edges) {
    ++deg[a];
    ++deg[b];
  }
  return deg;
}

int ComponentLabeling::n_singletons() const {
  int n = 0;
  for (const auto& c : components) n += c.singleton ? 1 : 0;
  return n;
}

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream is(line);
  std::vector<std::string> out;
  std::string tok;
  while (is >> tok) out.push_back(tok);
  return out;
}

int parse_index(const std::string& tok, int line_no) {
  try {
    size_t pos = 0;
    int v = std::stoi(tok, &pos);
    if (pos != tok.size()) throw std::invalid_argument(tok);
    return v;
  } catch (const std::exception&) {
    throw ParseError("graph line " + std::to_string(line_no) + ": not an integer: '" + tok + "'");
  }
}

}  // namespace

AdjacencyGraph parse_graph(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  int line_no = 0;

  auto next_line = [&]() -> bool {
    while (std::getline(is, line)) {
      ++line_no;
      if (!line.empty() && line.back() == '\r') line.pop_back();
      auto first = line.find_first_not_of(" \t");
      if (first == std::string::npos) continue;  // blank
      if (line[first] == '#') continue;          // comment
      return true;
    }
    return false;
  };

  if (!next_line()) throw ParseError("graph file is empty");
  auto head = split_ws(line);
  if (head.size() != 1) throw ParseError("graph line " + std::to_string(line_no) + ": expected a single area count");
  const int n = parse_index(head[0], line_no);
  if (n <= 0) throw ParseError("graph line " + std::to_string(line_no) + ": area count must be positive");

  std::vector<std::set<int>> nbrs(n);
  std::vector<bool> seen(n, false);
  for (int k = 0; k < n; ++k) {
    if (!next_line()) throw ParseError("graph file: expected " + std::to_string(n) + " area lines, got " + std::to_string(k));
    auto toks = split_ws(line);
    if (toks.size() < 2) throw ParseError("graph line " + std::to_string(line_no) + ": expected '<index> <k> <neighbours...>'");
    const int idx = parse_index(toks[0], line_no);
    if (idx < 0 || idx >= n) throw ParseError("graph line " + std::to_string(line_no) + ": area index " + std::to_string(idx) + " out of range [0," + std::to_string(n - 1) + "]");
    if (seen[idx]) throw ParseError("graph line " + std::to_string(line_no) + ": duplicate area " + std::to_string(idx));
    seen[idx] = true;
    const int deg = parse_index(toks[1], line_no);
    if (deg < 0 || static_cast<size_t>(deg) + 2 != toks.size())
      throw ParseError("graph line " + std::to_string(line_no) + ": neighbour count " + std::to_string(deg) + " does not match " + std::to_string(toks.size() - 2) + " listed neighbours");
    for (int j = 0; j < deg; ++j) {
      const int nb = parse_index(toks[2 + j], line_no);
      if (nb < 0 || nb >= n) throw ParseError("graph line " + std::to_string(line_no) + ": neighbour index " + std::to_string(nb) + " out of range");
      if (nb == idx) throw ParseError("graph line " + std::to_string(line_no) + ": self-loop on area " + std::to_string(idx));
      if (!nbrs[idx].insert(nb).second)
        throw ParseError("graph line " + std::to_string(line_no) + ": duplicate neighbour " + std::to_string(nb) + " for area " + std::to_string(idx));
    }
  }

  for (int a = 0; a < n; ++a)
    for (int b : nbrs[a])
      if (nbrs[b].count(a) == 0)
        throw ParseError("graph: asymmetric neighbour listing, area " + std::to_string(a) + " lists " + std::to_string(b) + " but not vice versa");

  AdjacencyGraph g;
  g.n_areas = n;
  for (int a = 0; a < n; ++a)
    for (int b : nbrs[a])
      if (a < b) g.edges.emplace_back(a, b);
  g.area_ids.resize(n);
  for (int a = 0; a < n; ++a) g.area_ids[a] = std::to_string(a);
  return g;
}

ComponentLabeling connected_components(const AdjacencyGraph& g) {
  std::vector<std::vector<int>> adj(g.n_areas);
  for (const auto& [a, b] : g.edges) {
    adj[a].push_back(b);
    adj[b].push_back(a);
  }

  ComponentLabeling lab;
  lab.component_id.assign(g.n_areas, -1);
  for (int start = 0; start < g.n_areas; ++start) {
    if (lab.component_id[start] >= 0) continue;
    const int cid = lab.n_components();
    Component comp;
    std::deque<int> queue{start};
    lab.component_id[start] = cid;
    while (!queue.empty()) {
      int a = queue.front();
      queue.pop_front();
      comp.areas.push_back(a);
      for (int b : adj[a]) {
        if (lab.component_id[b] < 0) {
          lab.component_id[b] = cid;
          queue.push_back(b);
        }
      }
    }
    std::sort(comp.areas.begin(), comp.areas.end());
    comp.singleton = comp.areas.size() == 1 && adj[comp.areas[0]].empty();
    lab.components.push_back(std::move(comp));
  }
  return lab;
}

SpMat icar_structure(const AdjacencyGraph& g) {
  std::vector<Triplet> trips;
  trips.reserve(g.n_areas + 2 * g.edges.size());
  auto deg = g.degrees();
  for (int a = 0; a < g.n_areas; ++a)
    if (deg[a] > 0) trips.emplace_back(a, a, static_cast<double>(deg[a]));
  for (const auto& [a, b] : g.edges) {
    trips.emplace_back(a, b, -1.0);
    trips.emplace_back(b, a, -1.0);
  }
  SpMat r(g.n_areas, g.n_areas);
  r.setFromTriplets(trips.begin(), trips.end());
  return r;
}

Eigen::MatrixXd constrained_ginverse(const Eigen::MatrixXd& m, double rel_cutoff,
                                     int expected_deficiency) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m);
  if (es.info() != Eigen::Success) throw NumericalError("constrained_ginverse: eigendecomposition failed");
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double cutoff = rel_cutoff * std::max(ev.cwiseAbs().maxCoeff(), 1e-300);
  int n_zero = 0;
  Eigen::VectorXd inv(ev.size());
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    if (std::abs(ev[i]) <= cutoff) {
      inv[i] = 0.0;
      ++n_zero;
    } else if (ev[i] < 0.0) {
      throw NumericalError("constrained_ginverse: negative eigenvalue " + std::to_string(ev[i]));
    } else {
      inv[i] = 1.0 / ev[i];
    }
  }
  if (expected_deficiency >= 0 && n_zero != expected_deficiency)
    throw NumericalError("constrained_ginverse: rank deficiency " + std::to_string(n_zero) +
                         ", expected " + std::to_string(expected_deficiency));
  return es.eigenvectors() * inv.asDiagonal() * es.eigenvectors().transpose();
}

ScaledIcar scale_icar(const SpMat& structure, const ComponentLabeling& labeling) {
  const int n = static_cast<int>(structure.rows());
  Eigen::MatrixXd dense = Eigen::MatrixXd(structure);

  ScaledIcar out;
  out.labeling = labeling;
  out.scale_factors.assign(labeling.components.size(), 1.0);

  std::vector<Triplet> trips;
  std::vector<Eigen::VectorXd> constraint_rows;
  for (size_t ci = 0; ci < labeling.components.size(); ++ci) {
    const Component& comp = labeling.components[ci];
    if (comp.singleton) {
      out.singleton_rows.push_back(comp.areas[0]);
      trips.emplace_back(comp.areas[0], comp.areas[0], 1.0);
      continue;
    }
    const int m = static_cast<int>(comp.areas.size());
    Eigen::MatrixXd block(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j) block(i, j) = dense(comp.areas[i], comp.areas[j]);

    Eigen::MatrixXd ginv = constrained_ginverse(block, 1e-10, 1);
    const double factor = geometric_mean(ginv.diagonal());
    out.scale_factors[ci] = factor;

    for (int i = 0; i < m; ++i)
      for (int j = 0; j < m; ++j)
        if (block(i, j) != 0.0) trips.emplace_back(comp.areas[i], comp.areas[j], block(i, j) * factor);

    Eigen::VectorXd row = Eigen::VectorXd::Zero(n);
    for (int a : comp.areas) row[a] = 1.0;
    constraint_rows.push_back(std::move(row));
  }

  out.structure = SpMat(n, n);
  out.structure.setFromTriplets(trips.begin(), trips.end());
  out.constraints = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(constraint_rows.size()), n);
  for (size_t k = 0; k < constraint_rows.size(); ++k) out.constraints.row(static_cast<Eigen::Index>(k)) = constraint_rows[k];
  return out;
}

}  // namespace fusemap::graph
