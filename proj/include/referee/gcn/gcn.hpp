#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <unordered_map>
#include <utility>
#include <vector>

#include "referee/graph/graph.hpp"
#include "referee/num/tape.hpp"

namespace referee::gcn {

// Two-layer GCN under explanation. Once trained the weights are fixed; all
// forward entry points are const.
struct GcnModel {
  num::Matrix w1;  // d x h
  num::Matrix w2;  // h x C
  std::size_t hidden = 0;
  std::size_t classes = 2;
  static constexpr unsigned kLayers = 2;

  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  double best_val_accuracy = 0.0;

  std::size_t feature_dim() const { return w1.rows; }
};

struct TrainConfig {
  double learning_rate = 1e-2;
  std::size_t epochs = 200;
  double train_fraction = 0.8;
  double val_fraction = 0.1;
  std::size_t hidden = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

// Train / validation / test node indices. The split is stratified jointly by
// (label, sensitive) so that every subgroup-label cell present in the data is
// represented in the test set; this keeps delta-EO well defined downstream.
struct Split {
  std::vector<graph::NodeId> train;
  std::vector<graph::NodeId> val;
  std::vector<graph::NodeId> test;
};

Split stratified_split(const graph::AttributedGraph& g, const TrainConfig& cfg);

using EdgeMask = std::unordered_map<graph::Edge, double, graph::EdgeHash>;

// Node set + edge set a forward pass runs on; adapts both full graphs and
// computation graphs.
struct DenseGraphView {
  std::size_t num_nodes = 0;
  const num::Matrix* features = nullptr;
  std::span<const graph::Edge> edges;
};

DenseGraphView view_of(const graph::AttributedGraph& g);
DenseGraphView view_of(const graph::ComputationGraph& cg);

// Forward pass: softmax(A_hat * relu(A_hat * X * W1) * W2) with
// A_hat = D^{-1/2} (A .* M + I) D^{-1/2}; degrees come from the masked
// adjacency plus the (never masked) self-loops, so A_hat stays well defined
// even under an all-zero mask. Mask absent means M = 1. Mask keys must cover
// exactly the view's edges with values in [0, 1].
num::Matrix forward(const GcnModel& model, const DenseGraphView& view,
                    const EdgeMask* mask = nullptr);

// Same forward on a tape with per-edge mask values aligned to `edges` order;
// gradients flow to the mask variable (and through weight constants).
num::Var forward_on_tape(num::Tape& tape, const GcnModel& model,
                         const DenseGraphView& view, num::Var edge_mask);

std::vector<std::uint8_t> predict_labels(const num::Matrix& outcomes);

double accuracy(std::span<const std::uint8_t> predicted,
                std::span<const std::uint8_t> truth,
                std::span<const graph::NodeId> on_nodes);

struct TrainLogRow {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

GcnModel train(const graph::AttributedGraph& g, const TrainConfig& cfg,
               std::vector<TrainLogRow>* log = nullptr);

void save_checkpoint(const GcnModel& model, const std::filesystem::path& path);
GcnModel load_checkpoint(const std::filesystem::path& path);
std::string checkpoint_to_json(const GcnModel& model);

}  // namespace referee::gcn
