#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "referee/explain/explain.hpp"
#include "referee/gcn/gcn.hpp"
#include "referee/graph/graph.hpp"

namespace referee::debias {

// Union over explained nodes of "bias edges not in the fairness edges";
// these are the candidates for removal.
std::vector<graph::Edge> removal_set(
    std::span<const explain::ExplanationPair> pairs);

struct DebiasRow {
  double ratio = 0.0;
  std::vector<graph::NodeId> sampled;
  std::vector<graph::Edge> removed;
  double accuracy = 0.0;
  double delta_sp = 0.0;
  double delta_eo = 0.0;
};

struct DebiasReport {
  std::vector<DebiasRow> rows;  // ascending by ratio
  double vanilla_accuracy = 0.0;
  double vanilla_delta_sp = 0.0;
  double vanilla_delta_eo = 0.0;
  bool retrained = true;  // false when frozen-weights mode was used
};

struct DebiasConfig {
  std::vector<double> ratios{0.0, 0.05, 0.1, 0.15, 0.2};
  std::uint64_t sample_seed = 0;
  // Retraining after edge removal is the default; frozen mode re-evaluates
  // the original weights on the edited graph for comparison.
  bool frozen_weights = false;
  unsigned jobs = 1;

  void validate() const;
};

// For each ratio r: samples ceil(r * N) nodes as a prefix of one seeded
// permutation (so sampled sets nest across ratios), explains them against the
// original graph and model, removes the removal set, retrains with the same
// recipe and seed, and evaluates accuracy / delta-SP / delta-EO on the
// held-out test split. Deterministic given the seeds in the configs.
DebiasReport run_debias(const graph::AttributedGraph& g,
                        const gcn::TrainConfig& recipe,
                        const explain::ExplainConfig& explain_cfg,
                        const DebiasConfig& cfg);

}  // namespace referee::debias
