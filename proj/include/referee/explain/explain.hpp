#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "referee/gcn/gcn.hpp"
#include "referee/graph/graph.hpp"
#include "referee/metrics/bias.hpp"
#include "referee/num/tape.hpp"

namespace referee::explain {

enum class Role { bias, fairness };
enum class BudgetMode { l1, budget };

// Learnable state of one explainer: one logit per undirected edge of the
// computation graph; the mask value is sigmoid(logit), applied symmetrically
// to both adjacency entries of the edge.
struct ExplainerState {
  Role role = Role::bias;
  std::vector<double> edge_logits;
};

ExplainerState init_state(const graph::ComputationGraph& cg, Role role,
                          std::uint64_t seed);

struct ExplainConfig {
  double alpha = 1.0;
  double beta = 1e-4;
  double gamma = 1e-4;
  std::size_t budget_bias = 20;  // T
  std::size_t budget_fair = 20;  // T'
  double learning_rate = 1e-2;
  std::size_t epochs = 300;
  std::uint64_t seed = 0;
  double sinkhorn_eps = 0.01;
  int sinkhorn_iters = 200;
  BudgetMode budget_mode = BudgetMode::budget;
  unsigned hops = 2;  // matches the GCN layer count
  double init_noise = 0.1;

  void validate() const;
};

// Fixed population context a single explanation job optimizes against:
// vanilla outcomes of the full graph, the group split, and the explained node.
struct PopulationContext {
  const num::Matrix* vanilla = nullptr;           // N x C
  std::span<const std::uint8_t> groups;
  std::size_t node = 0;

  std::vector<std::size_t> group_members(std::uint8_t group) const;
};

// L1: Sinkhorn distance of the fairness-substituted population minus that of
// the bias-substituted population. Substitution replaces only the explained
// node's outcome row.
num::Var loss_explaining(num::Tape& tape, const PopulationContext& ctx,
                         num::Var bias_outcome, num::Var fair_outcome,
                         double eps, int iters);

// L2: negative Jensen-Shannon divergence between the two mask distributions
// (sigmoid masses normalized over the edge set, smoothed by 1e-12).
num::Var loss_contrastive(num::Tape& tape, num::Var bias_mask, num::Var fair_mask);

// L3: negative log-probability of the vanilla label under both soft-masked
// forwards at the explained node.
num::Var loss_fidelity(num::Tape& tape, num::Var bias_outcome,
                       num::Var fair_outcome, std::uint8_t vanilla_label);

// L4: l1 mode sums both masks; budget mode penalizes mask mass above T / T'.
num::Var loss_sparsity(num::Tape& tape, num::Var bias_mask, num::Var fair_mask,
                       const ExplainConfig& cfg);

num::Var total_loss(num::Tape& tape, num::Var l1, num::Var l2, num::Var l3,
                    num::Var l4, const ExplainConfig& cfg);

// The full per-epoch differentiable graph of one explanation job: soft masks,
// both masked forwards, and all loss terms combined per the unified objective.
struct LossGraph {
  num::Var mask_bias, mask_fair;
  num::Var bias_outcome, fair_outcome;  // 1 x C rows at the explained node
  num::Var l1, l2, l3, l4, total;
};

LossGraph build_loss(num::Tape& tape, const gcn::GcnModel& model,
                     const graph::ComputationGraph& cg,
                     const PopulationContext& ctx, const ExplainConfig& cfg,
                     num::Var bias_logits, num::Var fair_logits,
                     std::uint8_t vanilla_label);

// Top-`budget` edges by mask value; exact ties resolve in lexicographic
// (u, v) order. Returns indices into `edges`.
std::vector<std::size_t> select_edges(std::span<const graph::Edge> edges,
                                      std::span<const double> values,
                                      std::size_t budget);

struct ScoredEdge {
  graph::Edge edge;  // global node ids
  double score = 0.0;
};

struct LossTerms {
  double l1 = 0.0, l2 = 0.0, l3 = 0.0, l4 = 0.0, total = 0.0;
};

struct ExplanationPair {
  graph::NodeId node = 0;
  double b_vanilla = 0.0;
  std::vector<ScoredEdge> bias_edges;      // at most T
  std::vector<ScoredEdge> fairness_edges;  // at most T'
  double delta_b_promoted = 0.0;
  double delta_b_reduced = 0.0;
  bool fidelity_bias = false;
  bool fidelity_fair = false;
  LossTerms loss_terms;  // final epoch
};

// Runs the joint optimization of both explainers for one node and evaluates
// the hard-masked explanations. Deterministic given cfg.seed; the per-node
// seed is derived as hash(cfg.seed, v) so jobs are order independent.
// `vanilla` may carry a precomputed full-graph forward of `model` on `g`.
ExplanationPair explain_node(const gcn::GcnModel& model,
                             const graph::AttributedGraph& g, graph::NodeId v,
                             const ExplainConfig& cfg,
                             const num::Matrix* vanilla = nullptr);

}  // namespace referee::explain
