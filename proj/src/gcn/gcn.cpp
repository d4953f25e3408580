#include "referee/gcn/gcn.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "referee/num/kernels.hpp"
#include "referee/util/error.hpp"
#include "referee/util/rng.hpp"

namespace referee::gcn {

namespace {

using num::Matrix;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

Matrix matmul_plain(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows, b.cols);
  num::matmul_accum(a.data.data(), b.data.data(), c.data.data(), a.rows, a.cols,
                    b.cols);
  return c;
}

// A_hat = D^{-1/2} (A .* M + I) D^{-1/2}; mask == nullptr means M = 1.
Matrix build_ahat(const DenseGraphView& view, const std::vector<double>* mask) {
  const std::size_t n = view.num_nodes;
  Matrix atil(n, n);
  for (std::size_t e = 0; e < view.edges.size(); ++e) {
    const double m = mask ? (*mask)[e] : 1.0;
    atil.at(view.edges[e].u, view.edges[e].v) = m;
    atil.at(view.edges[e].v, view.edges[e].u) = m;
  }
  for (std::size_t i = 0; i < n; ++i) atil.at(i, i) = 1.0;  // self-loops, never masked

  std::vector<double> dinv(n);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0.0;
    for (std::size_t j = 0; j < n; ++j) deg += atil.at(i, j);
    dinv[i] = 1.0 / std::sqrt(deg);
  }
  Matrix ahat(n, n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j)
      ahat.at(i, j) = (atil.at(i, j) * dinv[i]) * dinv[j];
  return ahat;
}

void check_dims(const GcnModel& model, const DenseGraphView& view) {
  if (view.features->cols != model.feature_dim())
    throw_runtime("gcn forward: feature dimension " +
                  std::to_string(view.features->cols) + " does not match model d=" +
                  std::to_string(model.feature_dim()));
  if (view.features->rows != view.num_nodes)
    throw_runtime("gcn forward: feature rows do not match node count");
}

}  // namespace

void TrainConfig::validate() const {
  if (learning_rate <= 0.0) throw_validation("train: learning rate must be positive");
  if (train_fraction <= 0.0 || val_fraction <= 0.0)
    throw_validation("train: split fractions must be positive");
  if (train_fraction + val_fraction > 1.0 + 1e-12)
    throw_validation("train: split fractions must sum to at most 1");
  if (hidden < 1) throw_validation("train: hidden size must be >= 1");
}

DenseGraphView view_of(const graph::AttributedGraph& g) {
  return DenseGraphView{g.num_nodes, &g.features, g.edges};
}

DenseGraphView view_of(const graph::ComputationGraph& cg) {
  return DenseGraphView{cg.nodes.size(), &cg.local_features, cg.local_edges};
}

Matrix forward(const GcnModel& model, const DenseGraphView& view,
               const EdgeMask* mask) {
  check_dims(model, view);
  std::vector<double> mask_values;
  if (mask) {
    if (mask->size() != view.edges.size())
      throw_runtime("gcn forward: mask covers " + std::to_string(mask->size()) +
                    " edges, graph has " + std::to_string(view.edges.size()));
    mask_values.resize(view.edges.size());
    std::size_t found = 0;
    for (std::size_t e = 0; e < view.edges.size(); ++e) {
      const auto it = mask->find(view.edges[e]);
      if (it == mask->end())
        throw_runtime("gcn forward: mask missing edge (" +
                      std::to_string(view.edges[e].u) + ", " +
                      std::to_string(view.edges[e].v) + ")");
      if (it->second < 0.0 || it->second > 1.0)
        throw_runtime("gcn forward: mask value " + std::to_string(it->second) +
                      " outside [0, 1]");
      mask_values[e] = it->second;
      ++found;
    }
    // Sizes match and every edge was found, so every key is an edge.
    (void)found;
  }

  const Matrix ahat = build_ahat(view, mask ? &mask_values : nullptr);
  Matrix h = matmul_plain(matmul_plain(ahat, *view.features), model.w1);
  for (double& x : h.data) x = x > 0.0 ? x : 0.0;
  Matrix logits = matmul_plain(matmul_plain(ahat, h), model.w2);
  Matrix probs(logits.rows, logits.cols);
  for (std::size_t i = 0; i < logits.rows; ++i)
    num::softmax_row(logits.data.data() + i * logits.cols,
                     probs.data.data() + i * logits.cols, logits.cols);
  return probs;
}

num::Var forward_on_tape(num::Tape& tape, const GcnModel& model,
                         const DenseGraphView& view, num::Var edge_mask) {
  check_dims(model, view);
  const std::size_t n = view.num_nodes;
  std::vector<std::pair<std::uint32_t, std::uint32_t>> pairs;
  pairs.reserve(view.edges.size());
  for (const auto& e : view.edges) pairs.emplace_back(e.u, e.v);

  const num::Var masked_adj = tape.edge_symmetric(edge_mask, pairs, n);
  const num::Var atil = tape.add(masked_adj, tape.constant(Matrix::identity(n)));
  const num::Var dinv = tape.rsqrt(tape.row_sum(atil));
  const num::Var ahat = tape.mul(tape.mul(atil, dinv), tape.transpose(dinv));

  const num::Var x = tape.constant(*view.features);
  const num::Var w1 = tape.constant(model.w1);
  const num::Var w2 = tape.constant(model.w2);
  const num::Var h = tape.relu(tape.matmul(tape.matmul(ahat, x), w1));
  return tape.row_softmax(tape.matmul(tape.matmul(ahat, h), w2));
}

std::vector<std::uint8_t> predict_labels(const Matrix& outcomes) {
  std::vector<std::uint8_t> labels(outcomes.rows);
  for (std::size_t i = 0; i < outcomes.rows; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < outcomes.cols; ++c)
      if (outcomes.at(i, c) > outcomes.at(i, best)) best = c;  // ties keep lower index
    labels[i] = static_cast<std::uint8_t>(best);
  }
  return labels;
}

double accuracy(std::span<const std::uint8_t> predicted,
                std::span<const std::uint8_t> truth,
                std::span<const graph::NodeId> on_nodes) {
  if (on_nodes.empty()) throw_runtime("accuracy: empty node set");
  std::size_t hits = 0;
  for (const auto v : on_nodes)
    if (predicted[v] == truth[v]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(on_nodes.size());
}

Split stratified_split(const graph::AttributedGraph& g, const TrainConfig& cfg) {
  cfg.validate();
  Split split;
  for (int cell = 0; cell < 4; ++cell) {
    const std::uint8_t label = cell & 1;
    const std::uint8_t sens = (cell >> 1) & 1;
    std::vector<graph::NodeId> members;
    for (graph::NodeId v = 0; v < g.num_nodes; ++v)
      if (g.labels[v] == label && g.sensitive[v] == sens) members.push_back(v);
    if (members.empty()) continue;
    Rng rng(derive_seed(cfg.seed, 100 + static_cast<std::uint64_t>(cell)));
    rng.shuffle(members);
    const std::size_t n_train =
        static_cast<std::size_t>(std::floor(cfg.train_fraction * members.size()));
    const std::size_t n_val =
        static_cast<std::size_t>(std::floor(cfg.val_fraction * members.size()));
    for (std::size_t i = 0; i < members.size(); ++i) {
      if (i < n_train)
        split.train.push_back(members[i]);
      else if (i < n_train + n_val)
        split.val.push_back(members[i]);
      else
        split.test.push_back(members[i]);
    }
  }
  std::sort(split.train.begin(), split.train.end());
  std::sort(split.val.begin(), split.val.end());
  std::sort(split.test.begin(), split.test.end());
  return split;
}

namespace {

struct Adam {
  double lr;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  std::vector<double> m, v;
  std::size_t t = 0;

  explicit Adam(double learning_rate, std::size_t dim)
      : lr(learning_rate), m(dim, 0.0), v(dim, 0.0) {}

  void step(std::span<double> params, std::span<const double> grads) {
    ++t;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * grads[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * grads[i] * grads[i];
      params[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
    }
  }
};

Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  Matrix w(rows, cols);
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  for (double& x : w.data) x = rng.uniform(-limit, limit);
  return w;
}

}  // namespace

GcnModel train(const graph::AttributedGraph& g, const TrainConfig& cfg,
               std::vector<TrainLogRow>* log) {
  cfg.validate();
  if (log) log->clear();
  const Split split = stratified_split(g, cfg);
  bool train_has[2] = {false, false};
  for (const auto v : split.train) train_has[g.labels[v]] = true;
  for (int c = 0; c < 2; ++c)
    if (!train_has[c])
      throw_runtime("train: class " + std::to_string(c) +
                    " is absent from the training split");

  GcnModel model;
  model.hidden = cfg.hidden;
  model.classes = 2;
  model.seed = cfg.seed;
  Rng init_rng(derive_seed(cfg.seed, 200));
  model.w1 = glorot(g.feature_dim(), cfg.hidden, init_rng);
  model.w2 = glorot(cfg.hidden, model.classes, init_rng);

  const DenseGraphView view = view_of(g);
  const Matrix ahat = build_ahat(view, nullptr);

  auto val_accuracy = [&](const GcnModel& m) {
    const Matrix probs = forward(m, view);
    const auto preds = predict_labels(probs);
    return accuracy(preds, g.labels, split.val);
  };

  GcnModel best = model;
  best.best_val_accuracy = split.val.empty() ? 0.0 : val_accuracy(model);
  best.epochs_run = cfg.epochs;

  std::vector<std::pair<std::uint32_t, std::uint32_t>> ce_index;
  ce_index.reserve(split.train.size());
  for (const auto v : split.train) ce_index.emplace_back(v, g.labels[v]);

  Adam adam(cfg.learning_rate, model.w1.size() + model.w2.size());
  num::Tape tape;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    tape.reset();
    const num::Var a = tape.constant(ahat);
    const num::Var x = tape.constant(g.features);
    const num::Var w1 = tape.input(model.w1);
    const num::Var w2 = tape.input(model.w2);
    const num::Var h = tape.relu(tape.matmul(tape.matmul(a, x), w1));
    const num::Var probs = tape.row_softmax(tape.matmul(tape.matmul(a, h), w2));
    const num::Var picked = tape.gather(tape.log(probs), ce_index);
    const num::Var loss = tape.neg(tape.mean(picked));
    tape.backward(loss);

    const auto g1 = tape.grad(w1);
    const auto g2 = tape.grad(w2);
    std::vector<double> params(model.w1.data);
    params.insert(params.end(), model.w2.data.begin(), model.w2.data.end());
    std::vector<double> grads(g1.data, g1.data + g1.size());
    grads.insert(grads.end(), g2.data, g2.data + g2.size());
    adam.step(params, grads);
    std::copy(params.begin(), params.begin() + model.w1.size(),
              model.w1.data.begin());
    std::copy(params.begin() + model.w1.size(), params.end(),
              model.w2.data.begin());

    double acc = 0.0;
    if (!split.val.empty()) {
      acc = val_accuracy(model);
      if (acc > best.best_val_accuracy) {
        best = model;
        best.best_val_accuracy = acc;
        best.epochs_run = cfg.epochs;
      }
    } else {
      best = model;
      best.epochs_run = cfg.epochs;
    }
    if (log)
      log->push_back({epoch + 1, tape.value(loss).data[0], acc});
  }
  return best;
}

std::string checkpoint_to_json(const GcnModel& model) {
  std::ostringstream out;
  auto emit_matrix = [&](const Matrix& w) {
    out << "[";
    for (std::size_t i = 0; i < w.rows; ++i) {
      if (i) out << ", ";
      out << "[";
      for (std::size_t j = 0; j < w.cols; ++j) {
        if (j) out << ", ";
        out << fmt17(w.at(i, j));
      }
      out << "]";
    }
    out << "]";
  };
  out << "{\"version\": 1, \"d\": " << model.feature_dim()
      << ", \"h\": " << model.hidden << ", \"c\": " << model.classes
      << ", \"w1\": ";
  emit_matrix(model.w1);
  out << ", \"w2\": ";
  emit_matrix(model.w2);
  out << ", \"seed\": " << model.seed
      << ", \"val_acc\": " << fmt17(model.best_val_accuracy) << "}\n";
  return out.str();
}

void save_checkpoint(const GcnModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_runtime("save_checkpoint: cannot open " + path.string());
  out << checkpoint_to_json(model);
  if (!out) throw_runtime("save_checkpoint: write failed for " + path.string());
}

GcnModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_validation("load_checkpoint: cannot open " + path.string());
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw_validation("load_checkpoint: " + path.string() + ": " + e.what());
  }
  for (const char* field : {"version", "d", "h", "c", "w1", "w2", "seed", "val_acc"})
    if (!doc.contains(field))
      throw_validation("load_checkpoint: " + path.string() + ": missing field '" +
                       std::string(field) + "'");
  if (doc["version"].get<int>() != 1)
    throw_validation("load_checkpoint: unsupported version " + doc["version"].dump());
  if (doc["c"].get<int>() != 2)
    throw_validation("load_checkpoint: class count must be 2");

  GcnModel model;
  const std::size_t d = doc["d"].get<std::size_t>();
  model.hidden = doc["h"].get<std::size_t>();
  model.classes = 2;
  model.seed = doc["seed"].get<std::uint64_t>();
  model.best_val_accuracy = doc["val_acc"].get<double>();

  auto read_matrix = [&](const nlohmann::json& j, std::size_t rows,
                         std::size_t cols, const char* name) {
    if (!j.is_array() || j.size() != rows)
      throw_validation("load_checkpoint: '" + std::string(name) + "' must have " +
                       std::to_string(rows) + " rows");
    Matrix w(rows, cols);
    for (std::size_t i = 0; i < rows; ++i) {
      if (!j[i].is_array() || j[i].size() != cols)
        throw_validation("load_checkpoint: '" + std::string(name) + "' row " +
                         std::to_string(i) + " must have " + std::to_string(cols) +
                         " entries");
      for (std::size_t jj = 0; jj < cols; ++jj) {
        const double v = j[i][jj].get<double>();
        if (!std::isfinite(v))
          throw_validation("load_checkpoint: non-finite weight in " + std::string(name));
        w.at(i, jj) = v;
      }
    }
    return w;
  };
  model.w1 = read_matrix(doc["w1"], d, model.hidden, "w1");
  model.w2 = read_matrix(doc["w2"], model.hidden, model.classes, "w2");
  return model;
}

}  // namespace referee::gcn
