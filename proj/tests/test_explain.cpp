#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "fixture.hpp"
#include "oracles.hpp"
#include "referee/explain/explain.hpp"
#include "referee/util/error.hpp"
#include "referee/util/rng.hpp"

using namespace referee;
using explain::ExplainConfig;
using explain::Role;
using graph::Edge;
using num::Matrix;
using num::Tape;
using num::Var;

namespace {

graph::ComputationGraph tiny_cg(std::size_t num_edges) {
  graph::AttributedGraph g;
  g.num_nodes = num_edges + 1;
  for (graph::NodeId v = 0; v < num_edges; ++v) g.edges.emplace_back(v, v + 1);
  g.features = Matrix(g.num_nodes, 1, 0.5);
  g.sensitive.assign(g.num_nodes, 0);
  g.sensitive.back() = 1;
  g.labels.assign(g.num_nodes, 0);
  return graph::extract_computation_graph(g, 0, 8);
}

double js_between(const std::vector<double>& logits_a,
                  const std::vector<double>& logits_b) {
  Tape t;
  const Var za = t.constant(Matrix::column(logits_a));
  const Var zb = t.constant(Matrix::column(logits_b));
  const Var l2 = explain::loss_contrastive(t, t.sigmoid(za), t.sigmoid(zb));
  return -t.value(l2).data[0];
}

ExplainConfig fast_cfg() {
  ExplainConfig cfg;
  cfg.epochs = 25;
  cfg.sinkhorn_iters = 40;
  cfg.sinkhorn_eps = 0.05;
  cfg.budget_bias = 4;
  cfg.budget_fair = 4;
  cfg.learning_rate = 0.05;
  return cfg;
}

}  // namespace

TEST_CASE("init_state determinism and role separation") {
  const auto cg = tiny_cg(5);
  const auto a = explain::init_state(cg, Role::bias, 42);
  const auto b = explain::init_state(cg, Role::bias, 42);
  CHECK(a.edge_logits == b.edge_logits);

  const auto f = explain::init_state(cg, Role::fairness, 42);
  CHECK(a.edge_logits != f.edge_logits);

  const auto single = explain::init_state(tiny_cg(1), Role::bias, 7);
  CHECK(single.edge_logits.size() == 1);

  graph::AttributedGraph isolated;
  isolated.num_nodes = 2;
  isolated.features = Matrix(2, 1, 0.0);
  isolated.sensitive = {0, 1};
  isolated.labels = {0, 1};
  const auto empty_cg = graph::extract_computation_graph(isolated, 0, 2);
  CHECK_THROWS_AS(explain::init_state(empty_cg, Role::bias, 1), Error);
}

TEST_CASE("contrastive loss worked examples") {
  // Identical distributions: JS = 0.
  const std::vector<double> z = {0.3, -0.7, 1.1};
  CHECK(js_between(z, z) == doctest::Approx(0.0).epsilon(1e-12));

  // P = (0.5, 0.5) vs Q = (1, 0): JS = 0.2157 in nats. Logits are picked so
  // the normalized sigmoid masses hit those distributions.
  const double big = 40.0;
  const std::vector<double> uniform = {0.0, 0.0};
  const std::vector<double> point = {big, -big};
  CHECK(js_between(point, uniform) == doctest::Approx(0.21576).epsilon(2e-3));

  // Disjoint supports approach the ln 2 upper bound.
  const std::vector<double> left = {big, -big};
  const std::vector<double> right = {-big, big};
  CHECK(js_between(left, right) == doctest::Approx(std::log(2.0)).epsilon(1e-6));
}

TEST_CASE("fidelity loss worked example") {
  Tape t;
  Matrix yb(1, 2);
  yb.at(0, 0) = 0.1;
  yb.at(0, 1) = 0.9;
  const Var vb = t.constant(yb);
  const Var vf = t.constant(yb);
  const Var l3 = explain::loss_fidelity(t, vb, vf, 1);
  CHECK(t.value(l3).data[0] == doctest::Approx(-2.0 * std::log(0.9)).epsilon(1e-12));

  // Perfect fidelity drives the loss to zero.
  Matrix sure(1, 2);
  sure.at(0, 0) = 0.0;
  sure.at(0, 1) = 1.0;
  const Var vs = t.constant(sure);
  const Var zero = explain::loss_fidelity(t, vs, vs, 1);
  CHECK(t.value(zero).data[0] == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("sparsity loss in both modes") {
  ExplainConfig cfg;
  cfg.budget_bias = 5;
  cfg.budget_fair = 5;

  auto eval = [&](double sum_b, double sum_f, explain::BudgetMode mode) {
    cfg.budget_mode = mode;
    Tape t;
    // Masks that sum to the requested masses.
    const Var mb = t.constant(Matrix(1, 1, sum_b));
    const Var mf = t.constant(Matrix(1, 1, sum_f));
    return t.value(explain::loss_sparsity(t, mb, mf, cfg)).data[0];
  };

  CHECK(eval(3.0, 4.0, explain::BudgetMode::budget) == 0.0);
  CHECK(eval(7.0, 9.0, explain::BudgetMode::budget) == doctest::Approx(6.0));
  CHECK(eval(2.5, 1.5, explain::BudgetMode::l1) == doctest::Approx(4.0));

  // l1 mode goes to zero as every logit goes to -inf.
  Tape t;
  const Var z = t.constant(Matrix(3, 1, -60.0));
  cfg.budget_mode = explain::BudgetMode::l1;
  const Var l4 = explain::loss_sparsity(t, t.sigmoid(z), t.sigmoid(z), cfg);
  CHECK(t.value(l4).data[0] <= 1e-20);
}

TEST_CASE("total loss combination") {
  ExplainConfig cfg;
  cfg.alpha = 0.0;
  cfg.beta = 0.0;
  cfg.gamma = 0.0;
  Tape t;
  const Var l1 = t.constant_scalar(1.25);
  const Var l2 = t.constant_scalar(-0.2);
  const Var l3 = t.constant_scalar(0.5);
  const Var l4 = t.constant_scalar(0.3);
  CHECK(t.value(explain::total_loss(t, l1, l2, l3, l4, cfg)).data[0] ==
        doctest::Approx(1.25));

  cfg.alpha = 1.0;
  cfg.beta = 1.0;
  cfg.gamma = 1.0;
  Tape t2;
  const Var a = t2.constant_scalar(1.0);
  const Var b = t2.constant_scalar(-0.2);
  const Var c = t2.constant_scalar(0.5);
  const Var d = t2.constant_scalar(0.3);
  CHECK(t2.value(explain::total_loss(t2, a, b, c, d, cfg)).data[0] ==
        doctest::Approx(1.6));
}

TEST_CASE("explaining loss is near zero under identical substitution") {
  const auto f = testing::small_fixture();
  const graph::NodeId v = 0;
  explain::PopulationContext ctx{&f.vanilla, f.graph.sensitive, v};

  Tape t;
  Matrix row(1, 2);
  row.at(0, 0) = f.vanilla.at(v, 0);
  row.at(0, 1) = f.vanilla.at(v, 1);
  const Var y = t.constant(row);
  const Var l1 = explain::loss_explaining(t, ctx, y, y, 0.01, 200);
  CHECK(std::fabs(t.value(l1).data[0]) <= 1e-9);  // both terms identical
}

TEST_CASE("explaining loss moves in the right direction on a 6-node fixture") {
  // Three nodes per group; group 0 outcomes near 0.2, group 1 near 0.8.
  Matrix vanilla(6, 2);
  const double p[6] = {0.2, 0.25, 0.3, 0.7, 0.75, 0.8};
  for (int i = 0; i < 6; ++i) {
    vanilla.at(i, 0) = 1.0 - p[i];
    vanilla.at(i, 1) = p[i];
  }
  std::vector<std::uint8_t> groups = {0, 0, 0, 1, 1, 1};
  explain::PopulationContext ctx{&vanilla, groups, 0};

  auto eval = [&](double bias_p, double fair_p) {
    Tape t;
    Matrix yb(1, 2), yf(1, 2);
    yb.at(0, 0) = 1.0 - bias_p;
    yb.at(0, 1) = bias_p;
    yf.at(0, 0) = 1.0 - fair_p;
    yf.at(0, 1) = fair_p;
    return t.value(explain::loss_explaining(t, ctx, t.constant(yb),
                                            t.constant(yf), 0.01, 200))
        .data[0];
  };

  const double same = eval(0.2, 0.2);
  // Bias outcome away from the other group, fair outcome toward it.
  const double separated = eval(0.05, 0.7);
  CHECK(separated < same);
}

TEST_CASE("explaining loss gradient matches finite differences") {
  Matrix vanilla(6, 2);
  const double p[6] = {0.15, 0.3, 0.45, 0.55, 0.7, 0.9};
  for (int i = 0; i < 6; ++i) {
    vanilla.at(i, 0) = 1.0 - p[i];
    vanilla.at(i, 1) = p[i];
  }
  std::vector<std::uint8_t> groups = {0, 0, 0, 1, 1, 1};
  explain::PopulationContext ctx{&vanilla, groups, 1};

  // Parameterize the substituted outcome row through a softmax so it stays on
  // the simplex for any parameter value.
  std::vector<double> theta = {0.4, -0.3, 0.2, 0.6};
  auto loss_of = [&](const std::vector<double>& params, Tape& t) {
    Matrix mb(1, 2), mf(1, 2);
    mb.at(0, 0) = params[0];
    mb.at(0, 1) = params[1];
    mf.at(0, 0) = params[2];
    mf.at(0, 1) = params[3];
    const Var yb = t.row_softmax(t.input(mb));
    const Var yf = t.row_softmax(t.input(mf));
    return explain::loss_explaining(t, ctx, yb, yf, 0.05, 60);
  };

  Tape t;
  Matrix mb(1, 2), mf(1, 2);
  mb.at(0, 0) = theta[0];
  mb.at(0, 1) = theta[1];
  mf.at(0, 0) = theta[2];
  mf.at(0, 1) = theta[3];
  const Var vb = t.input(mb);
  const Var vf = t.input(mf);
  const Var l1 = explain::loss_explaining(t, ctx, t.row_softmax(vb),
                                          t.row_softmax(vf), 0.05, 60);
  t.backward(l1);
  std::vector<double> analytic;
  for (const Var v : {vb, vf}) {
    const auto g = t.grad(v);
    analytic.insert(analytic.end(), g.data, g.data + g.size());
  }

  const auto numeric = testing::finite_difference_gradient(
      [&](const std::vector<double>& params) {
        Tape t2;
        return t2.value(loss_of(params, t2)).data[0];
      },
      theta);
  CHECK(testing::max_rel_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("select_edges budgets and tie-breaking") {
  const std::vector<Edge> edges = {Edge(0, 1), Edge(1, 2), Edge(0, 2)};
  const std::vector<double> values = {0.9, 0.1, 0.5};
  const auto top2 = explain::select_edges(edges, values, 2);
  REQUIRE(top2.size() == 2);
  CHECK(edges[top2[0]] == Edge(0, 1));
  CHECK(edges[top2[1]] == Edge(0, 2));

  CHECK(explain::select_edges(edges, values, 10).size() == 3);

  const std::vector<double> equal = {0.5, 0.5, 0.5};
  const auto one = explain::select_edges(edges, equal, 1);
  REQUIRE(one.size() == 1);
  CHECK(edges[one[0]] == Edge(0, 1));  // lexicographically smallest
}

TEST_CASE("full loss gradient on a 10-node fixture matches finite differences") {
  const auto f = testing::small_fixture(5, 3, 40);  // 10 nodes
  REQUIRE(f.graph.num_nodes == 10);
  const graph::NodeId v = 2;
  const auto cg = graph::extract_computation_graph(f.graph, v, 2);
  REQUIRE(cg.local_edges.size() >= 2);

  ExplainConfig cfg = fast_cfg();
  explain::PopulationContext ctx{&f.vanilla, f.graph.sensitive, v};
  const std::uint8_t label = gcn::predict_labels(f.vanilla)[v];

  Rng rng(909);
  std::vector<double> logits(2 * cg.local_edges.size());
  for (double& z : logits) z = rng.normal(0.0, 0.5);

  auto assemble = [&](Tape& t, const std::vector<double>& flat)
      -> std::tuple<Var, Var, Var> {
    const std::size_t ne = cg.local_edges.size();
    std::vector<double> zb(flat.begin(), flat.begin() + ne);
    std::vector<double> zf(flat.begin() + ne, flat.end());
    const Var vb = t.input(Matrix::column(zb));
    const Var vf = t.input(Matrix::column(zf));
    const auto lg = explain::build_loss(t, f.model, cg, ctx, cfg, vb, vf, label);
    return {lg.total, vb, vf};
  };

  Tape t;
  const auto [loss, vb, vf] = assemble(t, logits);
  t.backward(loss);
  std::vector<double> analytic;
  for (const Var v2 : {vb, vf}) {
    const auto g = t.grad(v2);
    analytic.insert(analytic.end(), g.data, g.data + g.size());
  }

  const auto numeric = testing::finite_difference_gradient(
      [&](const std::vector<double>& flat) {
        Tape t2;
        const auto [l, a, b] = assemble(t2, flat);
        (void)a;
        (void)b;
        return t2.value(l).data[0];
      },
      logits);
  CHECK(testing::max_rel_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("explain_node on a single-edge computation graph selects that edge") {
  graph::AttributedGraph g;
  g.num_nodes = 4;
  g.edges = {Edge(0, 1), Edge(2, 3)};
  g.features = Matrix(4, 2);
  Rng rng(5);
  for (double& x : g.features.data) x = rng.uniform(-1.0, 1.0);
  g.sensitive = {0, 1, 0, 1};
  g.labels = {0, 1, 0, 1};

  gcn::TrainConfig tc;
  tc.epochs = 10;
  tc.hidden = 4;
  tc.seed = 2;
  tc.train_fraction = 0.5;
  tc.val_fraction = 0.25;
  const auto model = gcn::train(g, tc);

  ExplainConfig cfg = fast_cfg();
  cfg.epochs = 5;
  cfg.budget_bias = 1;
  cfg.budget_fair = 1;
  const auto pair = explain::explain_node(model, g, 0, cfg);
  REQUIRE(pair.bias_edges.size() == 1);
  REQUIRE(pair.fairness_edges.size() == 1);
  CHECK(pair.bias_edges[0].edge == Edge(0, 1));
  CHECK(pair.fairness_edges[0].edge == Edge(0, 1));
}

TEST_CASE("explain_node is deterministic and respects budgets") {
  const auto f = testing::small_fixture();
  ExplainConfig cfg = fast_cfg();
  cfg.seed = 31;

  const auto a = explain::explain_node(f.model, f.graph, 3, cfg, &f.vanilla);
  const auto b = explain::explain_node(f.model, f.graph, 3, cfg, &f.vanilla);
  CHECK(a.delta_b_promoted == b.delta_b_promoted);
  CHECK(a.delta_b_reduced == b.delta_b_reduced);
  CHECK(a.loss_terms.total == b.loss_terms.total);
  REQUIRE(a.bias_edges.size() == b.bias_edges.size());
  for (std::size_t i = 0; i < a.bias_edges.size(); ++i) {
    CHECK(a.bias_edges[i].edge == b.bias_edges[i].edge);
    CHECK(a.bias_edges[i].score == b.bias_edges[i].score);
  }

  CHECK(a.bias_edges.size() <= cfg.budget_bias);
  CHECK(a.fairness_edges.size() <= cfg.budget_fair);

  // Every reported edge must exist in the computation graph.
  const auto cg = graph::extract_computation_graph(f.graph, 3, cfg.hops);
  std::set<Edge> allowed;
  for (const auto& e : cg.local_edges) allowed.insert(cg.to_global(e));
  for (const auto& se : a.bias_edges) CHECK(allowed.count(se.edge) == 1);
  for (const auto& se : a.fairness_edges) CHECK(allowed.count(se.edge) == 1);
}

TEST_CASE("contrastive weight separates the two mask distributions") {
  const auto f = testing::small_fixture();
  ExplainConfig cfg = fast_cfg();
  cfg.epochs = 40;
  cfg.seed = 17;

  auto final_js = [&](double alpha, double init_noise) {
    ExplainConfig c = cfg;
    c.alpha = alpha;
    c.init_noise = init_noise;
    const auto pair = explain::explain_node(f.model, f.graph, 1, c, &f.vanilla);
    return -pair.loss_terms.l2;  // L2 = -JS
  };

  const double js_alpha0 = final_js(0.0, 0.1);
  const double js_alpha10 = final_js(10.0, 0.1);
  CHECK(js_alpha10 >= js_alpha0);

  // Even from exactly symmetric (all-zero) initializations the two explainers
  // diverge when the contrastive term is active.
  const double js_zero_init = final_js(1.0, 0.0);
  CHECK(js_zero_init > 1e-3);
}
