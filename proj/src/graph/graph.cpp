#include "referee/graph/graph.hpp"

#include <algorithm>
#include <cmath>
#include <deque>

#include "referee/util/error.hpp"
#include "referee/util/rng.hpp"

namespace referee::graph {

void AttributedGraph::validate() const {
  if (num_nodes == 0) throw_validation("graph: no nodes");
  if (features.rows != num_nodes)
    throw_validation("graph: feature matrix has " + std::to_string(features.rows) +
                     " rows for " + std::to_string(num_nodes) + " nodes");
  if (sensitive.size() != num_nodes || labels.size() != num_nodes)
    throw_validation("graph: sensitive/label vectors do not cover all nodes");
  bool has0 = false, has1 = false;
  for (std::size_t i = 0; i < num_nodes; ++i) {
    if (sensitive[i] > 1)
      throw_validation("graph: non-binary sensitive value at node " + std::to_string(i));
    if (labels[i] > 1)
      throw_validation("graph: non-binary label at node " + std::to_string(i));
    (sensitive[i] ? has1 : has0) = true;
  }
  if (!has0 || !has1)
    throw_validation("graph: sensitive subgroup " + std::string(has0 ? "1" : "0") +
                     " is empty");
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const Edge& ed = edges[e];
    if (ed.u == ed.v)
      throw_validation("graph: self-loop at node " + std::to_string(ed.u));
    if (ed.v >= num_nodes)
      throw_validation("graph: dangling endpoint " + std::to_string(ed.v));
    if (e > 0 && !(edges[e - 1] < ed))
      throw_validation("graph: edges not sorted/unique at position " + std::to_string(e));
  }
  for (double x : features.data)
    if (!std::isfinite(x)) throw_validation("graph: non-finite feature value");
  if (!node_ids.empty() && node_ids.size() != num_nodes)
    throw_validation("graph: node id list does not cover all nodes");
}

std::vector<std::vector<NodeId>> AttributedGraph::adjacency() const {
  std::vector<std::vector<NodeId>> adj(num_nodes);
  for (const Edge& e : edges) {
    adj[e.u].push_back(e.v);
    adj[e.v].push_back(e.u);
  }
  return adj;
}

AttributedGraph normalize_features(const AttributedGraph& g) {
  if (g.num_nodes < 2)
    throw_validation("normalize_features: need at least 2 nodes");
  AttributedGraph out = g;
  const std::size_t n = g.num_nodes;
  const std::size_t d = g.feature_dim();
  for (std::size_t j = 0; j < d; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += g.features.at(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double c = g.features.at(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<double>(n);
    if (var == 0.0) {
      // Constant dimension carries no information; zero it out.
      for (std::size_t i = 0; i < n; ++i) out.features.at(i, j) = 0.0;
    } else {
      const double inv_sd = 1.0 / std::sqrt(var);
      for (std::size_t i = 0; i < n; ++i)
        out.features.at(i, j) = (g.features.at(i, j) - mean) * inv_sd;
    }
  }
  return out;
}

ComputationGraph extract_computation_graph(const AttributedGraph& g, NodeId v,
                                           unsigned hops) {
  if (v >= g.num_nodes)
    throw_validation("extract_computation_graph: node " + std::to_string(v) +
                     " out of range for " + std::to_string(g.num_nodes) + " nodes");
  if (hops < 1) throw_validation("extract_computation_graph: hop count must be >= 1");

  const auto adj = g.adjacency();
  std::vector<int> dist(g.num_nodes, -1);
  std::deque<NodeId> queue{v};
  dist[v] = 0;
  while (!queue.empty()) {
    const NodeId u = queue.front();
    queue.pop_front();
    if (static_cast<unsigned>(dist[u]) == hops) continue;
    for (const NodeId w : adj[u]) {
      if (dist[w] < 0) {
        dist[w] = dist[u] + 1;
        queue.push_back(w);
      }
    }
  }

  ComputationGraph cg;
  cg.center = v;
  for (NodeId u = 0; u < g.num_nodes; ++u)
    if (dist[u] >= 0) cg.nodes.push_back(u);
  // nodes is sorted by construction of the scan above
  for (std::size_t i = 0; i < cg.nodes.size(); ++i)
    cg.local_index_map[cg.nodes[i]] = static_cast<NodeId>(i);

  for (const Edge& e : g.edges) {
    const auto iu = cg.local_index_map.find(e.u);
    const auto iv = cg.local_index_map.find(e.v);
    if (iu != cg.local_index_map.end() && iv != cg.local_index_map.end())
      cg.local_edges.emplace_back(iu->second, iv->second);
  }
  std::sort(cg.local_edges.begin(), cg.local_edges.end());

  const std::size_t d = g.feature_dim();
  cg.local_features = num::Matrix(cg.nodes.size(), d);
  cg.local_sensitive.resize(cg.nodes.size());
  for (std::size_t i = 0; i < cg.nodes.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j)
      cg.local_features.at(i, j) = g.features.at(cg.nodes[i], j);
    cg.local_sensitive[i] = g.sensitive[cg.nodes[i]];
  }
  return cg;
}

void SbmParams::validate() const {
  if (n0 < 1 || n1 < 1) throw_validation("sbm: both block sizes must be >= 1");
  if (p_in < 0.0 || p_in > 1.0 || p_out < 0.0 || p_out > 1.0)
    throw_validation("sbm: edge probabilities must lie in [0, 1]");
  if (rho < 0.0 || rho > 1.0) throw_validation("sbm: rho must lie in [0, 1]");
  if (feature_dim < 1) throw_validation("sbm: feature dimension must be >= 1");
}

AttributedGraph generate_sbm(const SbmParams& p) {
  p.validate();
  const std::size_t n = p.n0 + p.n1;
  AttributedGraph g;
  g.num_nodes = n;
  g.sensitive.resize(n);
  g.labels.resize(n);
  g.features = num::Matrix(n, p.feature_dim);

  for (std::size_t i = 0; i < n; ++i) g.sensitive[i] = i >= p.n0 ? 1 : 0;

  Rng edge_rng(derive_seed(p.seed, 1));
  for (NodeId u = 0; u < n; ++u) {
    for (NodeId v = u + 1; v < n; ++v) {
      const double prob = g.sensitive[u] == g.sensitive[v] ? p.p_in : p.p_out;
      if (edge_rng.uniform() < prob) g.edges.emplace_back(u, v);
    }
  }

  Rng label_rng(derive_seed(p.seed, 2));
  for (std::size_t i = 0; i < n; ++i) {
    const bool agree = label_rng.uniform() < p.rho;
    g.labels[i] = agree ? g.sensitive[i] : 1 - g.sensitive[i];
  }

  Rng feat_rng(derive_seed(p.seed, 3));
  for (std::size_t i = 0; i < n; ++i) {
    const double center = g.sensitive[i] ? p.mu : -p.mu;
    for (std::size_t j = 0; j < p.feature_dim; ++j)
      g.features.at(i, j) = feat_rng.normal(center, 1.0);
  }

  g.validate();
  return g;
}

}  // namespace referee::graph
