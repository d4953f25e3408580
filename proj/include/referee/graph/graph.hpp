#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "referee/num/matrix.hpp"

namespace referee::graph {

using NodeId = std::uint32_t;

// Undirected edge, stored with u < v.
struct Edge {
  NodeId u = 0;
  NodeId v = 0;

  Edge() = default;
  Edge(NodeId a, NodeId b) : u(a < b ? a : b), v(a < b ? b : a) {}

  friend bool operator==(const Edge&, const Edge&) = default;
  friend auto operator<=>(const Edge&, const Edge&) = default;
};

struct EdgeHash {
  std::size_t operator()(const Edge& e) const {
    return std::hash<std::uint64_t>{}((std::uint64_t(e.u) << 32) | e.v);
  }
};

// Attributed graph with a binary sensitive feature and binary labels.
// Self-loops are never stored; the GCN adds them internally.
struct AttributedGraph {
  std::size_t num_nodes = 0;
  std::vector<Edge> edges;              // sorted, unique, endpoints < num_nodes
  num::Matrix features;                 // num_nodes x d
  std::vector<std::uint8_t> sensitive;  // in {0, 1}
  std::vector<std::uint8_t> labels;     // in {0, 1}
  std::vector<std::string> node_ids;    // optional external names

  std::size_t feature_dim() const { return features.cols; }

  // Checks every structural invariant; throws a validation error otherwise.
  void validate() const;

  std::vector<std::vector<NodeId>> adjacency() const;
};

// L-hop subgraph centered on one node, reindexed to local ids.
struct ComputationGraph {
  NodeId center = 0;                       // global id
  std::vector<NodeId> nodes;               // sorted global ids, includes center
  std::vector<Edge> local_edges;           // local ids
  num::Matrix local_features;
  std::vector<std::uint8_t> local_sensitive;
  std::unordered_map<NodeId, NodeId> local_index_map;  // global -> local

  NodeId local_center() const { return local_index_map.at(center); }
  std::size_t size() const { return nodes.size(); }

  // Maps a local edge back to global node ids.
  Edge to_global(const Edge& local) const {
    return Edge(nodes[local.u], nodes[local.v]);
  }
};

AttributedGraph normalize_features(const AttributedGraph& g);

ComputationGraph extract_computation_graph(const AttributedGraph& g, NodeId v,
                                           unsigned hops);

// Planted-bias stochastic block model: block membership doubles as the
// sensitive feature, labels agree with it with probability rho, and features
// are drawn around -mu (group 0) and +mu (group 1).
struct SbmParams {
  std::size_t n0 = 0;
  std::size_t n1 = 0;
  double p_in = 0.0;
  double p_out = 0.0;
  std::size_t feature_dim = 1;
  double mu = 0.0;
  double rho = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
};

AttributedGraph generate_sbm(const SbmParams& p);

}  // namespace referee::graph
