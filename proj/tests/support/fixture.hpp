#pragma once

// Shared planted-bias fixtures for the explainer and debias tests.

#include "referee/gcn/gcn.hpp"
#include "referee/graph/graph.hpp"

namespace referee::testing {

struct Fixture {
  graph::AttributedGraph graph;
  gcn::GcnModel model;
  num::Matrix vanilla;  // full-graph forward of model
};

// Small planted-bias instance: blocks = sensitive groups, labels mostly agree
// with the block, informative features.
inline Fixture small_fixture(std::size_t per_group = 8, std::uint64_t seed = 1,
                             std::size_t train_epochs = 60) {
  graph::SbmParams p;
  p.n0 = per_group;
  p.n1 = per_group;
  p.p_in = 0.5;
  p.p_out = 0.15;
  p.feature_dim = 4;
  p.mu = 0.8;
  p.rho = 0.9;
  p.seed = seed;

  Fixture f;
  f.graph = graph::normalize_features(graph::generate_sbm(p));
  gcn::TrainConfig cfg;
  cfg.epochs = train_epochs;
  cfg.seed = seed;
  cfg.hidden = 8;
  cfg.learning_rate = 0.02;
  f.model = gcn::train(f.graph, cfg);
  f.vanilla = gcn::forward(f.model, gcn::view_of(f.graph));
  return f;
}

// The acceptance fixture from the planted-bias protocol: 50 + 50 nodes,
// p_in = 0.2, p_out = 0.05, rho = 0.9, mu = 0.5.
inline Fixture acceptance_fixture(std::uint64_t seed = 7,
                                  std::size_t train_epochs = 300) {
  graph::SbmParams p;
  p.n0 = 50;
  p.n1 = 50;
  p.p_in = 0.2;
  p.p_out = 0.05;
  p.feature_dim = 8;
  p.mu = 0.5;
  p.rho = 0.9;
  p.seed = seed;

  Fixture f;
  f.graph = graph::normalize_features(graph::generate_sbm(p));
  gcn::TrainConfig cfg;
  cfg.epochs = train_epochs;
  cfg.seed = seed;
  cfg.hidden = 16;
  cfg.learning_rate = 0.01;
  f.model = gcn::train(f.graph, cfg);
  f.vanilla = gcn::forward(f.model, gcn::view_of(f.graph));
  return f;
}

}  // namespace referee::testing
