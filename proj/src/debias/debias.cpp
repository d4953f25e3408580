#include "referee/debias/debias.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "referee/metrics/bias.hpp"
#include "referee/util/error.hpp"
#include "referee/util/parallel.hpp"
#include "referee/util/rng.hpp"

namespace referee::debias {

std::vector<graph::Edge> removal_set(
    std::span<const explain::ExplanationPair> pairs) {
  // An edge is removed when it appears in some bias explanation and in no
  // fairness explanation of the sampled nodes; this keeps the removal set
  // disjoint from every fairness explanation.
  std::set<graph::Edge> fairness_union;
  for (const auto& pair : pairs)
    for (const auto& se : pair.fairness_edges) fairness_union.insert(se.edge);
  std::set<graph::Edge> removed;
  for (const auto& pair : pairs)
    for (const auto& se : pair.bias_edges)
      if (!fairness_union.count(se.edge)) removed.insert(se.edge);
  return {removed.begin(), removed.end()};
}

void DebiasConfig::validate() const {
  if (ratios.empty()) throw_validation("debias: ratio list is empty");
  for (const double r : ratios)
    if (r < 0.0 || r > 1.0)
      throw_validation("debias: ratio " + std::to_string(r) + " outside [0, 1]");
}

namespace {

struct Evaluation {
  double accuracy = 0.0;
  double delta_sp = 0.0;
  double delta_eo = 0.0;
};

Evaluation evaluate_on_test(const gcn::GcnModel& model,
                            const graph::AttributedGraph& g,
                            const gcn::Split& split) {
  const num::Matrix probs = gcn::forward(model, gcn::view_of(g));
  const auto preds = gcn::predict_labels(probs);
  Evaluation ev;
  ev.accuracy = gcn::accuracy(preds, g.labels, split.test);
  std::vector<std::uint8_t> test_preds, test_labels, test_groups;
  for (const auto v : split.test) {
    test_preds.push_back(preds[v]);
    test_labels.push_back(g.labels[v]);
    test_groups.push_back(g.sensitive[v]);
  }
  ev.delta_sp = metrics::delta_sp(test_preds, test_groups);
  ev.delta_eo = metrics::delta_eo(test_preds, test_labels, test_groups);
  return ev;
}

graph::AttributedGraph remove_edges(const graph::AttributedGraph& g,
                                    const std::vector<graph::Edge>& removed) {
  graph::AttributedGraph out = g;
  if (removed.empty()) return out;
  std::set<graph::Edge> drop(removed.begin(), removed.end());
  out.edges.clear();
  for (const auto& e : g.edges)
    if (!drop.count(e)) out.edges.push_back(e);
  return out;
}

}  // namespace

DebiasReport run_debias(const graph::AttributedGraph& g,
                        const gcn::TrainConfig& recipe,
                        const explain::ExplainConfig& explain_cfg,
                        const DebiasConfig& cfg) {
  cfg.validate();
  recipe.validate();
  explain_cfg.validate();

  std::vector<double> ratios = cfg.ratios;
  std::sort(ratios.begin(), ratios.end());

  const gcn::GcnModel base_model = gcn::train(g, recipe);
  const gcn::Split split = gcn::stratified_split(g, recipe);
  const Evaluation vanilla = evaluate_on_test(base_model, g, split);
  const num::Matrix vanilla_outcomes = gcn::forward(base_model, gcn::view_of(g));

  // One seeded permutation; ratio prefixes give nested sampled sets.
  std::vector<graph::NodeId> permutation(g.num_nodes);
  for (graph::NodeId v = 0; v < g.num_nodes; ++v) permutation[v] = v;
  Rng sample_rng(derive_seed(cfg.sample_seed, 400));
  sample_rng.shuffle(permutation);

  const std::size_t max_count = static_cast<std::size_t>(
      std::ceil(ratios.back() * static_cast<double>(g.num_nodes)));
  std::vector<explain::ExplanationPair> explanations(max_count);
  parallel_for(max_count, cfg.jobs, [&](std::size_t k) {
    explanations[k] = explain::explain_node(base_model, g, permutation[k],
                                            explain_cfg, &vanilla_outcomes);
  });

  DebiasReport report;
  report.vanilla_accuracy = vanilla.accuracy;
  report.vanilla_delta_sp = vanilla.delta_sp;
  report.vanilla_delta_eo = vanilla.delta_eo;
  report.retrained = !cfg.frozen_weights;

  for (const double r : ratios) {
    DebiasRow row;
    row.ratio = r;
    const std::size_t count = static_cast<std::size_t>(
        std::ceil(r * static_cast<double>(g.num_nodes)));
    row.sampled.assign(permutation.begin(), permutation.begin() + count);
    row.removed = removal_set(
        std::span<const explain::ExplanationPair>(explanations.data(), count));
    const graph::AttributedGraph edited = remove_edges(g, row.removed);
    Evaluation ev;
    if (count == 0) {
      ev = vanilla;  // graph unchanged, same recipe and seed
    } else if (cfg.frozen_weights) {
      ev = evaluate_on_test(base_model, edited, split);
    } else {
      const gcn::GcnModel retrained = gcn::train(edited, recipe);
      ev = evaluate_on_test(retrained, edited, split);
    }
    row.accuracy = ev.accuracy;
    row.delta_sp = ev.delta_sp;
    row.delta_eo = ev.delta_eo;
    report.rows.push_back(std::move(row));
  }
  return report;
}

}  // namespace referee::debias
