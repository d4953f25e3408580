#include "referee/explain/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "referee/util/error.hpp"
#include "referee/util/rng.hpp"

namespace referee::explain {

using num::Matrix;
using num::Tape;
using num::Var;

void ExplainConfig::validate() const {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0)
    throw_validation("explain: loss weights must be non-negative");
  if (budget_bias < 1 || budget_fair < 1)
    throw_validation("explain: budgets must be >= 1");
  if (epochs < 1) throw_validation("explain: epoch count must be >= 1");
  if (learning_rate <= 0.0) throw_validation("explain: learning rate must be positive");
  if (sinkhorn_eps <= 0.0) throw_validation("explain: sinkhorn eps must be positive");
  if (sinkhorn_iters < 1) throw_validation("explain: sinkhorn iterations must be >= 1");
  if (hops < 1) throw_validation("explain: hop count must be >= 1");
  if (init_noise < 0.0) throw_validation("explain: init noise must be >= 0");
}

ExplainerState init_state(const graph::ComputationGraph& cg, Role role,
                          std::uint64_t seed) {
  if (cg.local_edges.empty())
    throw_runtime("init_state: computation graph of node " +
                  std::to_string(cg.center) + " has no edges, nothing to explain");
  ExplainerState state;
  state.role = role;
  Rng rng(derive_seed(seed, role == Role::bias ? 11 : 12));
  state.edge_logits.resize(cg.local_edges.size());
  for (double& z : state.edge_logits) z = rng.normal(0.0, 0.1);
  return state;
}

std::vector<std::size_t> PopulationContext::group_members(std::uint8_t group) const {
  std::vector<std::size_t> members;
  for (std::size_t k = 0; k < groups.size(); ++k)
    if (groups[k] == group) members.push_back(k);
  return members;
}

namespace {

// Group outcome matrix with the explained node's row substituted when the
// node belongs to this group. Constant rows come straight from the vanilla
// outcomes; only the substituted row lives on the differentiable path.
Var substituted_group(Tape& t, const PopulationContext& ctx,
                      const std::vector<std::size_t>& members, Var node_outcome) {
  const std::size_t classes = ctx.vanilla->cols;
  const auto pos_it = std::find(members.begin(), members.end(), ctx.node);
  auto rows_of = [&](std::size_t from, std::size_t to) {
    Matrix part(to - from, classes);
    for (std::size_t k = from; k < to; ++k)
      for (std::size_t c = 0; c < classes; ++c)
        part.at(k - from, c) = ctx.vanilla->at(members[k], c);
    return part;
  };
  if (pos_it == members.end()) return t.constant(rows_of(0, members.size()));

  const std::size_t pos = static_cast<std::size_t>(pos_it - members.begin());
  std::vector<Var> parts;
  if (pos > 0) parts.push_back(t.constant(rows_of(0, pos)));
  parts.push_back(node_outcome);
  if (pos + 1 < members.size())
    parts.push_back(t.constant(rows_of(pos + 1, members.size())));
  return parts.size() == 1 ? parts[0] : t.concat_rows(parts);
}

Var substituted_distance(Tape& t, const PopulationContext& ctx, Var node_outcome,
                         double eps, int iters) {
  const auto members0 = ctx.group_members(0);
  const auto members1 = ctx.group_members(1);
  if (members0.empty() || members1.empty())
    throw_runtime("loss_explaining: a sensitive subgroup is empty");
  const Var set0 = substituted_group(t, ctx, members0, node_outcome);
  const Var set1 = substituted_group(t, ctx, members1, node_outcome);
  return metrics::sinkhorn_w1(t, set0, set1, eps, iters);
}

Var mask_distribution(Tape& t, Var mask) {
  const Var smoothed = t.add_scalar(mask, 1e-12);
  return t.div(smoothed, t.sum(smoothed));
}

}  // namespace

Var loss_explaining(Tape& t, const PopulationContext& ctx, Var bias_outcome,
                    Var fair_outcome, double eps, int iters) {
  const Var d_bias = substituted_distance(t, ctx, bias_outcome, eps, iters);
  const Var d_fair = substituted_distance(t, ctx, fair_outcome, eps, iters);
  return t.sub(d_fair, d_bias);
}

Var loss_contrastive(Tape& t, Var bias_mask, Var fair_mask) {
  const Var p = mask_distribution(t, fair_mask);
  const Var q = mask_distribution(t, bias_mask);
  const Var mid = t.scale(t.add(p, q), 0.5);
  const Var log_mid = t.log(mid);
  const Var kl_p = t.sum(t.mul(p, t.sub(t.log(p), log_mid)));
  const Var kl_q = t.sum(t.mul(q, t.sub(t.log(q), log_mid)));
  const Var js = t.scale(t.add(kl_p, kl_q), 0.5);
  return t.neg(js);
}

Var loss_fidelity(Tape& t, Var bias_outcome, Var fair_outcome,
                  std::uint8_t vanilla_label) {
  const std::pair<std::uint32_t, std::uint32_t> at[] = {{0u, vanilla_label}};
  const Var log_pb = t.log(t.gather(bias_outcome, at));
  const Var log_pf = t.log(t.gather(fair_outcome, at));
  return t.neg(t.add(t.sum(log_pb), t.sum(log_pf)));
}

Var loss_sparsity(Tape& t, Var bias_mask, Var fair_mask, const ExplainConfig& cfg) {
  const Var mass_b = t.sum(bias_mask);
  const Var mass_f = t.sum(fair_mask);
  if (cfg.budget_mode == BudgetMode::l1) return t.add(mass_b, mass_f);
  const Var over_b =
      t.relu(t.add_scalar(mass_b, -static_cast<double>(cfg.budget_bias)));
  const Var over_f =
      t.relu(t.add_scalar(mass_f, -static_cast<double>(cfg.budget_fair)));
  return t.add(over_b, over_f);
}

Var total_loss(Tape& t, Var l1, Var l2, Var l3, Var l4, const ExplainConfig& cfg) {
  return t.add(t.add(l1, t.scale(l2, cfg.alpha)),
               t.add(t.scale(l3, cfg.beta), t.scale(l4, cfg.gamma)));
}

LossGraph build_loss(Tape& tape, const gcn::GcnModel& model,
                     const graph::ComputationGraph& cg,
                     const PopulationContext& ctx, const ExplainConfig& cfg,
                     Var bias_logits, Var fair_logits, std::uint8_t vanilla_label) {
  LossGraph lg;
  lg.mask_bias = tape.sigmoid(bias_logits);
  lg.mask_fair = tape.sigmoid(fair_logits);

  const gcn::DenseGraphView cg_view = gcn::view_of(cg);
  const graph::NodeId local_v = cg.local_center();
  const Var yb_all = gcn::forward_on_tape(tape, model, cg_view, lg.mask_bias);
  const Var yf_all = gcn::forward_on_tape(tape, model, cg_view, lg.mask_fair);
  lg.bias_outcome = tape.slice_rows(yb_all, local_v, local_v + 1);
  lg.fair_outcome = tape.slice_rows(yf_all, local_v, local_v + 1);

  lg.l1 = loss_explaining(tape, ctx, lg.bias_outcome, lg.fair_outcome,
                          cfg.sinkhorn_eps, cfg.sinkhorn_iters);
  lg.l2 = loss_contrastive(tape, lg.mask_bias, lg.mask_fair);
  lg.l3 = loss_fidelity(tape, lg.bias_outcome, lg.fair_outcome, vanilla_label);
  lg.l4 = loss_sparsity(tape, lg.mask_bias, lg.mask_fair, cfg);
  lg.total = total_loss(tape, lg.l1, lg.l2, lg.l3, lg.l4, cfg);
  return lg;
}

std::vector<std::size_t> select_edges(std::span<const graph::Edge> edges,
                                      std::span<const double> values,
                                      std::size_t budget) {
  if (budget < 1) throw_runtime("select_edges: budget must be >= 1");
  if (edges.size() != values.size())
    throw_runtime("select_edges: value count does not match edge count");
  std::vector<std::size_t> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) {
    if (values[x] != values[y]) return values[x] > values[y];
    return edges[x] < edges[y];
  });
  order.resize(std::min(budget, order.size()));
  std::sort(order.begin(), order.end());
  return order;
}

namespace {

struct AdamState {
  double lr;
  std::vector<double> m, v;
  std::size_t t = 0;

  AdamState(double learning_rate, std::size_t dim)
      : lr(learning_rate), m(dim, 0.0), v(dim, 0.0) {}

  void step(std::vector<double>& params, const double* grads) {
    ++t;
    const double bc1 = 1.0 - std::pow(0.9, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(0.999, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = 0.9 * m[i] + 0.1 * grads[i];
      v[i] = 0.999 * v[i] + 0.001 * grads[i] * grads[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + 1e-8);
    }
  }
};

gcn::EdgeMask hard_mask(const graph::ComputationGraph& cg,
                        const std::vector<std::size_t>& selected) {
  gcn::EdgeMask mask;
  for (const auto& e : cg.local_edges) mask[e] = 0.0;
  for (const std::size_t idx : selected) mask[cg.local_edges[idx]] = 1.0;
  return mask;
}

}  // namespace

ExplanationPair explain_node(const gcn::GcnModel& model,
                             const graph::AttributedGraph& g, graph::NodeId v,
                             const ExplainConfig& cfg, const num::Matrix* vanilla) {
  cfg.validate();
  if (v >= g.num_nodes)
    throw_validation("explain_node: node " + std::to_string(v) + " out of range");

  const graph::ComputationGraph cg = extract_computation_graph(g, v, cfg.hops);
  const std::size_t num_edges = cg.local_edges.size();
  const graph::NodeId local_v = cg.local_center();

  Matrix vanilla_local;
  if (!vanilla) {
    vanilla_local = gcn::forward(model, gcn::view_of(g));
    vanilla = &vanilla_local;
  }
  const std::uint8_t vanilla_label = gcn::predict_labels(*vanilla)[v];

  const std::uint64_t node_seed = derive_seed(cfg.seed, v);
  ExplainerState bias_state = init_state(cg, Role::bias, node_seed);
  ExplainerState fair_state = init_state(cg, Role::fairness, node_seed);
  if (cfg.init_noise != 0.1) {
    const double rescale = cfg.init_noise / 0.1;
    for (double& z : bias_state.edge_logits) z *= rescale;
    for (double& z : fair_state.edge_logits) z *= rescale;
  }

  PopulationContext ctx;
  ctx.vanilla = vanilla;
  ctx.groups = g.sensitive;
  ctx.node = v;

  AdamState adam_b(cfg.learning_rate, num_edges);
  AdamState adam_f(cfg.learning_rate, num_edges);
  const gcn::DenseGraphView cg_view = gcn::view_of(cg);

  LossTerms final_terms;
  Tape tape;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    tape.reset();
    const Var zb = tape.input(Matrix::column(bias_state.edge_logits));
    const Var zf = tape.input(Matrix::column(fair_state.edge_logits));
    const LossGraph lg = build_loss(tape, model, cg, ctx, cfg, zb, zf, vanilla_label);

    const double loss_value = tape.value(lg.total).data[0];
    if (!std::isfinite(loss_value))
      throw_runtime("explain_node: non-finite loss at epoch " +
                    std::to_string(epoch) + " for node " + std::to_string(v));

    tape.backward(lg.total);
    adam_b.step(bias_state.edge_logits, tape.grad(zb).data);
    adam_f.step(fair_state.edge_logits, tape.grad(zf).data);

    final_terms.l1 = tape.value(lg.l1).data[0];
    final_terms.l2 = tape.value(lg.l2).data[0];
    final_terms.l3 = tape.value(lg.l3).data[0];
    final_terms.l4 = tape.value(lg.l4).data[0];
    final_terms.total = loss_value;
  }

  auto mask_values = [](const ExplainerState& s) {
    std::vector<double> m(s.edge_logits.size());
    for (std::size_t e = 0; e < m.size(); ++e)
      m[e] = 1.0 / (1.0 + std::exp(-s.edge_logits[e]));
    return m;
  };
  const std::vector<double> scores_b = mask_values(bias_state);
  const std::vector<double> scores_f = mask_values(fair_state);
  const auto sel_b = select_edges(cg.local_edges, scores_b, cfg.budget_bias);
  const auto sel_f = select_edges(cg.local_edges, scores_f, cfg.budget_fair);

  ExplanationPair pair;
  pair.node = v;
  pair.loss_terms = final_terms;
  for (const std::size_t idx : sel_b)
    pair.bias_edges.push_back({cg.to_global(cg.local_edges[idx]), scores_b[idx]});
  for (const std::size_t idx : sel_f)
    pair.fairness_edges.push_back({cg.to_global(cg.local_edges[idx]), scores_f[idx]});

  // Hard-masked evaluation: selected edges stay, everything else drops,
  // self-loops are kept inside the forward.
  const gcn::EdgeMask mask_b = hard_mask(cg, sel_b);
  const gcn::EdgeMask mask_f = hard_mask(cg, sel_f);
  const Matrix out_b = gcn::forward(model, cg_view, &mask_b);
  const Matrix out_f = gcn::forward(model, cg_view, &mask_f);

  const std::uint8_t label_b = gcn::predict_labels(out_b)[local_v];
  const std::uint8_t label_f = gcn::predict_labels(out_f)[local_v];
  pair.fidelity_bias = label_b == vanilla_label;
  pair.fidelity_fair = label_f == vanilla_label;

  metrics::OutcomeSet population;
  population.outcomes = *vanilla;
  population.groups.assign(g.sensitive.begin(), g.sensitive.end());
  pair.b_vanilla = metrics::node_bias(population, v).bias;

  auto population_distance = [&](double substituted_positive) {
    std::vector<double> g0, g1;
    for (std::size_t k = 0; k < g.num_nodes; ++k) {
      const double p = k == v ? substituted_positive : vanilla->at(k, 1);
      (g.sensitive[k] ? g1 : g0).push_back(p);
    }
    return metrics::w1_exact_binary(g0, g1);
  };
  const double d_vanilla = population_distance(vanilla->at(v, 1));
  pair.delta_b_promoted = population_distance(out_b.at(local_v, 1)) - d_vanilla;
  pair.delta_b_reduced = d_vanilla - population_distance(out_f.at(local_v, 1));
  return pair;
}

}  // namespace referee::explain
