#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <set>

#include "fixture.hpp"
#include "referee/debias/debias.hpp"
#include "referee/util/error.hpp"

using namespace referee;
using explain::ExplanationPair;
using explain::ScoredEdge;
using graph::Edge;

namespace {

ExplanationPair pair_with(std::vector<Edge> bias, std::vector<Edge> fair) {
  ExplanationPair p;
  for (const auto& e : bias) p.bias_edges.push_back(ScoredEdge{e, 1.0});
  for (const auto& e : fair) p.fairness_edges.push_back(ScoredEdge{e, 1.0});
  return p;
}

}  // namespace

TEST_CASE("removal_set difference semantics") {
  const Edge a(0, 1), b(1, 2), c(2, 3);

  // Bias edges covered by the fairness explanation: nothing to remove.
  const ExplanationPair covered = pair_with({b}, {a, b});
  CHECK(debias::removal_set(std::vector{covered}).empty());

  const ExplanationPair one = pair_with({a, b}, {b});
  const auto removed = debias::removal_set(std::vector{one});
  CHECK(removed == std::vector<Edge>{a});

  const ExplanationPair p1 = pair_with({a}, {});
  const ExplanationPair p2 = pair_with({a, c}, {});
  const auto unioned = debias::removal_set(std::vector{p1, p2});
  CHECK(unioned == std::vector<Edge>{a, c});

  // An edge kept by any sampled node's fairness explanation is never removed,
  // even when another node's bias explanation flags it.
  const ExplanationPair flags = pair_with({a}, {c});
  const ExplanationPair protects = pair_with({c}, {});
  const auto crossed = debias::removal_set(std::vector{flags, protects});
  CHECK(crossed == std::vector<Edge>{a});
}

TEST_CASE("run_debias report contract on a small fixture") {
  const auto f = testing::small_fixture(8, 5, 50);

  gcn::TrainConfig recipe;
  recipe.epochs = 50;
  recipe.seed = 5;
  recipe.hidden = 8;
  recipe.learning_rate = 0.02;

  explain::ExplainConfig ecfg;
  ecfg.epochs = 15;
  ecfg.sinkhorn_iters = 30;
  ecfg.sinkhorn_eps = 0.05;
  ecfg.budget_bias = 4;
  ecfg.budget_fair = 4;
  ecfg.learning_rate = 0.05;
  ecfg.seed = 5;

  debias::DebiasConfig dcfg;
  dcfg.ratios = {0.25, 0.0, 0.125};  // unsorted on purpose
  dcfg.sample_seed = 5;

  const auto report = debias::run_debias(f.graph, recipe, ecfg, dcfg);
  REQUIRE(report.rows.size() == 3);
  CHECK(report.rows[0].ratio == 0.0);
  CHECK(report.rows[1].ratio == 0.125);
  CHECK(report.rows[2].ratio == 0.25);

  // Ratio 0 equals the vanilla evaluation bit for bit.
  CHECK(report.rows[0].accuracy == report.vanilla_accuracy);
  CHECK(report.rows[0].delta_sp == report.vanilla_delta_sp);
  CHECK(report.rows[0].delta_eo == report.vanilla_delta_eo);
  CHECK(report.rows[0].sampled.empty());
  CHECK(report.rows[0].removed.empty());

  // Monotone sampling: prefixes nest.
  const auto& s1 = report.rows[1].sampled;
  const auto& s2 = report.rows[2].sampled;
  CHECK(s1.size() == 2);  // ceil(0.125 * 16)
  CHECK(s2.size() == 4);  // ceil(0.25 * 16)
  for (std::size_t i = 0; i < s1.size(); ++i) CHECK(s1[i] == s2[i]);

  // Removals never reach the fairness explanations of the sampled nodes and
  // never add edges.
  std::set<Edge> original(f.graph.edges.begin(), f.graph.edges.end());
  for (const auto& row : report.rows) {
    CHECK(row.removed.size() <= f.graph.edges.size());
    for (const auto& e : row.removed) CHECK(original.count(e) == 1);
    std::set<Edge> fairness_union;
    for (const auto v : row.sampled) {
      const auto pair = explain::explain_node(f.model, f.graph, v, ecfg, &f.vanilla);
      for (const auto& se : pair.fairness_edges) fairness_union.insert(se.edge);
    }
    for (const auto& e : row.removed) CHECK(fairness_union.count(e) == 0);
  }

  // Determinism across reruns.
  const auto again = debias::run_debias(f.graph, recipe, ecfg, dcfg);
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    CHECK(report.rows[r].accuracy == again.rows[r].accuracy);
    CHECK(report.rows[r].delta_sp == again.rows[r].delta_sp);
    CHECK(report.rows[r].removed == again.rows[r].removed);
  }

  // Results do not depend on the worker count.
  debias::DebiasConfig parallel = dcfg;
  parallel.jobs = 4;
  const auto par = debias::run_debias(f.graph, recipe, ecfg, parallel);
  for (std::size_t r = 0; r < report.rows.size(); ++r) {
    CHECK(report.rows[r].accuracy == par.rows[r].accuracy);
    CHECK(report.rows[r].removed == par.rows[r].removed);
  }
}

TEST_CASE("frozen-weights mode evaluates the base model on the edited graph") {
  const auto f = testing::small_fixture(6, 10, 40);
  gcn::TrainConfig recipe;
  recipe.epochs = 40;
  recipe.seed = 10;
  recipe.hidden = 6;
  recipe.learning_rate = 0.02;

  explain::ExplainConfig ecfg;
  ecfg.epochs = 10;
  ecfg.sinkhorn_iters = 25;
  ecfg.sinkhorn_eps = 0.05;
  ecfg.budget_bias = 3;
  ecfg.budget_fair = 3;
  ecfg.learning_rate = 0.05;
  ecfg.seed = 10;

  debias::DebiasConfig dcfg;
  dcfg.ratios = {0.0, 0.5};
  dcfg.sample_seed = 10;
  dcfg.frozen_weights = true;

  const auto report = debias::run_debias(f.graph, recipe, ecfg, dcfg);
  CHECK_FALSE(report.retrained);
  CHECK(report.rows.size() == 2);

  debias::DebiasConfig bad;
  bad.ratios = {0.5, 1.5};
  CHECK_THROWS_AS(debias::run_debias(f.graph, recipe, ecfg, bad), Error);
}
