#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "oracles.hpp"
#include "referee/gcn/gcn.hpp"
#include "referee/graph/graph.hpp"
#include "referee/util/error.hpp"
#include "referee/util/rng.hpp"

using namespace referee;
using gcn::GcnModel;
using gcn::TrainConfig;
using graph::AttributedGraph;
using graph::Edge;
using num::Matrix;

namespace {

AttributedGraph small_graph() {
  AttributedGraph g;
  g.num_nodes = 4;
  g.edges = {Edge(0, 1), Edge(1, 2), Edge(2, 3), Edge(0, 2)};
  g.features = Matrix(4, 3);
  Rng rng(3);
  for (double& x : g.features.data) x = rng.uniform(-1.0, 1.0);
  g.sensitive = {0, 0, 1, 1};
  g.labels = {0, 1, 0, 1};
  return g;
}

GcnModel random_model(std::size_t d, std::size_t h, std::uint64_t seed) {
  GcnModel m;
  m.hidden = h;
  Rng rng(seed);
  m.w1 = Matrix(d, h);
  for (double& x : m.w1.data) x = rng.uniform(-0.5, 0.5);
  m.w2 = Matrix(h, 2);
  for (double& x : m.w2.data) x = rng.uniform(-0.5, 0.5);
  return m;
}

}  // namespace

TEST_CASE("zero weights give uniform outcomes") {
  const auto g = small_graph();
  GcnModel m;
  m.hidden = 5;
  m.w1 = Matrix(3, 5);
  m.w2 = Matrix(5, 2);
  const auto probs = gcn::forward(m, gcn::view_of(g));
  for (std::size_t i = 0; i < probs.rows; ++i) {
    CHECK(probs.at(i, 0) == 0.5);
    CHECK(probs.at(i, 1) == 0.5);
  }
}

TEST_CASE("all-zero mask equals the edgeless forward") {
  const auto g = small_graph();
  const auto m = random_model(3, 4, 17);

  gcn::EdgeMask zero_mask;
  for (const auto& e : g.edges) zero_mask[e] = 0.0;
  const auto masked = gcn::forward(m, gcn::view_of(g), &zero_mask);

  AttributedGraph edgeless = g;
  edgeless.edges.clear();
  const auto isolated = gcn::forward(m, gcn::view_of(edgeless));
  REQUIRE(masked.size() == isolated.size());
  for (std::size_t i = 0; i < masked.size(); ++i)
    CHECK(masked.data[i] == isolated.data[i]);
}

TEST_CASE("all-one mask equals the unmasked forward exactly") {
  const auto g = small_graph();
  const auto m = random_model(3, 4, 29);
  gcn::EdgeMask ones;
  for (const auto& e : g.edges) ones[e] = 1.0;
  const auto masked = gcn::forward(m, gcn::view_of(g), &ones);
  const auto plain = gcn::forward(m, gcn::view_of(g));
  for (std::size_t i = 0; i < masked.size(); ++i)
    CHECK(masked.data[i] == plain.data[i]);
}

TEST_CASE("isolated node with identity weights reduces to softmax(relu(x))") {
  AttributedGraph g;
  g.num_nodes = 2;  // second node keeps the sensitive groups non-empty
  g.features = Matrix(2, 2);
  g.features.at(0, 0) = 0.7;
  g.features.at(0, 1) = -0.3;
  g.features.at(1, 0) = 0.1;
  g.features.at(1, 1) = 0.2;
  g.sensitive = {0, 1};
  g.labels = {0, 1};

  GcnModel m;
  m.hidden = 2;
  m.w1 = Matrix::identity(2);
  m.w2 = Matrix::identity(2);
  const auto probs = gcn::forward(m, gcn::view_of(g));
  // Node 0 is isolated: A_hat row is the self-loop only, so the logits are
  // relu(x) and the outcome is softmax of that.
  const double r0 = 0.7, r1 = 0.0;
  const double z0 = std::exp(r0), z1 = std::exp(r1);
  CHECK(probs.at(0, 0) == doctest::Approx(z0 / (z0 + z1)).epsilon(1e-14));
  CHECK(probs.at(0, 1) == doctest::Approx(z1 / (z0 + z1)).epsilon(1e-14));
}

TEST_CASE("forward validates mask keys and dimensions") {
  const auto g = small_graph();
  const auto m = random_model(3, 4, 5);
  gcn::EdgeMask bad;
  for (const auto& e : g.edges) bad[e] = 0.5;
  bad.erase(Edge(0, 1));
  bad[Edge(1, 3)] = 0.5;  // not an edge
  CHECK_THROWS_AS(gcn::forward(m, gcn::view_of(g), &bad), Error);

  gcn::EdgeMask out_of_range;
  for (const auto& e : g.edges) out_of_range[e] = 1.5;
  CHECK_THROWS_AS(gcn::forward(m, gcn::view_of(g), &out_of_range), Error);

  const auto wrong_d = random_model(7, 4, 5);
  CHECK_THROWS_AS(gcn::forward(wrong_d, gcn::view_of(g)), Error);
}

TEST_CASE("forward rows stay on the simplex under random masks") {
  const auto g = small_graph();
  const auto m = random_model(3, 6, 31);
  Rng rng(8);
  for (int rep = 0; rep < 20; ++rep) {
    gcn::EdgeMask mask;
    for (const auto& e : g.edges) mask[e] = rng.uniform();
    const auto probs = gcn::forward(m, gcn::view_of(g), &mask);
    for (std::size_t i = 0; i < probs.rows; ++i)
      CHECK(std::fabs(probs.at(i, 0) + probs.at(i, 1) - 1.0) <= 1e-12);
  }
}

TEST_CASE("full-graph forward equals computation-graph forward on boundary-free balls") {
  // Two disjoint triangles: the 2-hop ball of any node is its whole component,
  // so the computation graph preserves every degree.
  AttributedGraph g;
  g.num_nodes = 6;
  g.edges = {Edge(0, 1), Edge(0, 2), Edge(1, 2), Edge(3, 4), Edge(3, 5), Edge(4, 5)};
  g.features = Matrix(6, 3);
  Rng rng(77);
  for (double& x : g.features.data) x = rng.uniform(-1.0, 1.0);
  g.sensitive = {0, 0, 0, 1, 1, 1};
  g.labels = {0, 1, 0, 1, 0, 1};
  const auto m = random_model(3, 4, 13);

  const auto full = gcn::forward(m, gcn::view_of(g));
  for (graph::NodeId v = 0; v < 6; ++v) {
    const auto cg = graph::extract_computation_graph(g, v, 2);
    const auto local = gcn::forward(m, gcn::view_of(cg));
    const auto lv = cg.local_center();
    CHECK(local.at(lv, 0) == full.at(v, 0));
    CHECK(local.at(lv, 1) == full.at(v, 1));
  }
}

TEST_CASE("mask gradient matches finite differences") {
  const auto g = small_graph();
  const auto m = random_model(3, 4, 41);
  const auto cg = graph::extract_computation_graph(g, 1, 2);
  const std::size_t ne = cg.local_edges.size();
  REQUIRE(ne > 0);

  std::vector<double> mask0(ne, 0.6);
  num::Tape t;
  const num::Var mv = t.input(Matrix::column(mask0));
  const num::Var probs = gcn::forward_on_tape(t, m, gcn::view_of(cg), mv);
  const num::Var picked =
      t.slice_rows(probs, cg.local_center(), cg.local_center() + 1);
  const num::Var loss = t.sum(t.mul(picked, picked));
  t.backward(loss);
  const auto gv = t.grad(mv);
  std::vector<double> analytic(gv.data, gv.data + gv.size());

  const auto numeric = testing::finite_difference_gradient(
      [&](const std::vector<double>& vals) {
        num::Tape t2;
        const num::Var mv2 = t2.input(Matrix::column(vals));
        const num::Var probs2 = gcn::forward_on_tape(t2, m, gcn::view_of(cg), mv2);
        const num::Var picked2 =
            t2.slice_rows(probs2, cg.local_center(), cg.local_center() + 1);
        return t2.value(t2.sum(t2.mul(picked2, picked2))).data[0];
      },
      mask0);
  CHECK(testing::max_rel_error(analytic, numeric) <= 1e-4);
}

TEST_CASE("predict_labels argmax with tie toward class 0") {
  Matrix probs(3, 2);
  probs.at(0, 0) = 0.9;
  probs.at(0, 1) = 0.1;
  probs.at(1, 0) = 0.5;
  probs.at(1, 1) = 0.5;
  probs.at(2, 0) = 0.2;
  probs.at(2, 1) = 0.8;
  const auto labels = gcn::predict_labels(probs);
  CHECK(labels[0] == 0);
  CHECK(labels[1] == 0);
  CHECK(labels[2] == 1);
}

TEST_CASE("training: zero epochs returns the seeded initialization") {
  graph::SbmParams p;
  p.n0 = 12;
  p.n1 = 12;
  p.p_in = 0.4;
  p.p_out = 0.1;
  p.feature_dim = 3;
  p.mu = 1.0;
  p.rho = 1.0;
  p.seed = 4;
  const auto g = graph::normalize_features(graph::generate_sbm(p));

  TrainConfig cfg;
  cfg.epochs = 0;
  cfg.seed = 11;
  cfg.hidden = 4;
  const auto a = gcn::train(g, cfg);
  const auto b = gcn::train(g, cfg);
  for (std::size_t i = 0; i < a.w1.size(); ++i) CHECK(a.w1.data[i] == b.w1.data[i]);
  CHECK(a.epochs_run == 0);
}

TEST_CASE("training fits a linearly separable toy and is deterministic") {
  // Features equal the label exactly; no edges, so the GCN must act as a
  // per-node classifier on its own features.
  AttributedGraph g;
  g.num_nodes = 20;
  g.features = Matrix(20, 2);
  g.sensitive.resize(20);
  g.labels.resize(20);
  for (std::size_t i = 0; i < 20; ++i) {
    const std::uint8_t y = i % 2;
    g.labels[i] = y;
    g.sensitive[i] = i < 10 ? 0 : 1;
    g.features.at(i, 0) = y ? 1.0 : -1.0;
    g.features.at(i, 1) = y ? -1.0 : 1.0;
  }

  TrainConfig cfg;
  cfg.epochs = 200;
  cfg.seed = 3;
  cfg.hidden = 8;
  cfg.learning_rate = 0.05;
  const auto model = gcn::train(g, cfg);
  const auto probs = gcn::forward(model, gcn::view_of(g));
  const auto preds = gcn::predict_labels(probs);
  const auto split = gcn::stratified_split(g, cfg);
  CHECK(gcn::accuracy(preds, g.labels, split.train) == 1.0);

  const auto again = gcn::train(g, cfg);
  for (std::size_t i = 0; i < model.w1.size(); ++i)
    CHECK(model.w1.data[i] == again.w1.data[i]);
  for (std::size_t i = 0; i < model.w2.size(); ++i)
    CHECK(model.w2.data[i] == again.w2.data[i]);
}

TEST_CASE("training errors when a class is missing from the training split") {
  AttributedGraph g;
  g.num_nodes = 12;
  g.features = Matrix(12, 2, 0.5);
  g.sensitive.assign(12, 0);
  g.sensitive[0] = 1;
  g.labels.assign(12, 0);  // only class 0 anywhere
  TrainConfig cfg;
  cfg.epochs = 1;
  CHECK_THROWS_AS(gcn::train(g, cfg), Error);
}

TEST_CASE("checkpoint round trip is bit-faithful") {
  graph::SbmParams p;
  p.n0 = 10;
  p.n1 = 10;
  p.p_in = 0.4;
  p.p_out = 0.1;
  p.feature_dim = 3;
  p.mu = 0.7;
  p.rho = 0.9;
  p.seed = 8;
  const auto g = graph::normalize_features(graph::generate_sbm(p));
  TrainConfig cfg;
  cfg.epochs = 12;
  cfg.seed = 21;
  cfg.hidden = 4;
  const auto model = gcn::train(g, cfg);

  const auto path = std::filesystem::temp_directory_path() / "referee_ckpt.json";
  gcn::save_checkpoint(model, path);
  const auto loaded = gcn::load_checkpoint(path);

  const auto a = gcn::forward(model, gcn::view_of(g));
  const auto b = gcn::forward(loaded, gcn::view_of(g));
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a.data[i] == b.data[i]);

  // Truncated file: error, no partial model.
  std::string text;
  {
    std::ifstream in(path);
    text.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  }
  const auto broken = std::filesystem::temp_directory_path() / "referee_ckpt_broken.json";
  {
    std::ofstream out(broken, std::ios::binary);
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(gcn::load_checkpoint(broken), Error);

  // Dimension mismatch with the graph surfaces at forward time.
  const auto wrong = random_model(9, 4, 2);
  CHECK_THROWS_AS(gcn::forward(wrong, gcn::view_of(g)), Error);
}
