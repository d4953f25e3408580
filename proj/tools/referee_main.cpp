// referee: train a small GCN on an attributed graph with a binary sensitive
// feature, explain per-node bias/fairness as edge sets, and debias by edge
// removal. Subcommands: train, explain, debias, synth, sweep, report.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "referee/debias/debias.hpp"
#include "referee/explain/explain.hpp"
#include "referee/gcn/gcn.hpp"
#include "referee/graph/graph.hpp"
#include "referee/graph/io.hpp"
#include "referee/metrics/bias.hpp"
#include "referee/util/error.hpp"
#include "referee/util/parallel.hpp"
#include "referee/util/rng.hpp"

namespace fs = std::filesystem;
using nlohmann::ordered_json;
using namespace referee;

namespace {

constexpr const char* kVersion = "0.1.0";

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

// ---------------------------------------------------------------------------
// Flat INI config: [section] + key = value; # and ; start comments.

using IniMap = std::map<std::string, std::string>;

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

IniMap load_ini(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw_validation("config: cannot open " + path.string());
  IniMap out;
  std::string line, section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw_validation("config: " + path.string() + ":" + std::to_string(lineno) +
                         ": unterminated section header");
      section = trim(line.substr(1, line.size() - 2));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw_validation("config: " + path.string() + ":" + std::to_string(lineno) +
                       ": expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty())
      throw_validation("config: " + path.string() + ":" + std::to_string(lineno) +
                       ": empty key");
    out[section.empty() ? key : section + "." + key] = value;
  }
  return out;
}

double parse_double_str(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw_validation("config: key '" + key + "': '" + s + "' is not a number");
  }
}

std::uint64_t parse_uint_str(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const auto v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw_validation("config: key '" + key + "': '" + s +
                     "' is not a non-negative integer");
  }
}

bool parse_bool_str(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw_validation("config: key '" + key + "': '" + s + "' is not a boolean");
}

std::vector<double> parse_double_list(const std::string& s, const std::string& key) {
  std::vector<double> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(parse_double_str(item, key));
  }
  if (out.empty()) throw_validation("config: key '" + key + "' is an empty list");
  return out;
}

// ---------------------------------------------------------------------------
// Option resolution: command-line flag > config file > profile default.

struct Resolver {
  const IniMap* ini = nullptr;
  bool paper = false;

  template <typename T, typename Parse>
  void apply(CLI::Option* opt, T& field, const std::string& key, T desk, T paper_v,
             Parse parse) const {
    if (opt->count() > 0) return;
    if (ini) {
      const auto it = ini->find(key);
      if (it != ini->end()) {
        field = parse(it->second, key);
        return;
      }
    }
    field = paper ? paper_v : desk;
  }

  void num(CLI::Option* o, double& f, const std::string& k, double d, double p) const {
    apply(o, f, k, d, p, parse_double_str);
  }
  void count(CLI::Option* o, std::size_t& f, const std::string& k, std::size_t d,
             std::size_t p) const {
    apply(o, f, k, d, p, [](const std::string& s, const std::string& key) {
      return static_cast<std::size_t>(parse_uint_str(s, key));
    });
  }
  void text(CLI::Option* o, std::string& f, const std::string& k, std::string d,
            std::string p) const {
    apply(o, f, k, std::move(d), std::move(p),
          [](const std::string& s, const std::string&) { return s; });
  }
  void flag(CLI::Option* o, bool& f, const std::string& k, bool d) const {
    apply(o, f, k, d, d, parse_bool_str);
  }
};

// ---------------------------------------------------------------------------
// Output helpers: atomic writes and the run manifest.

void atomic_write(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw_runtime("cannot open " + tmp.string() + " for writing");
    out << content;
    if (!out) throw_runtime("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

struct Manifest {
  std::string command;
  fs::path out_dir;
  ordered_json config = ordered_json::object();
  std::uint64_t seed = 0;
  std::string profile;
  std::vector<std::string> outputs;
  std::chrono::steady_clock::time_point started = std::chrono::steady_clock::now();

  void write(const std::string& status, const std::string& error = "") const {
    ordered_json doc;
    doc["command"] = command;
    doc["status"] = status;
    if (!error.empty()) doc["error"] = error;
    doc["seed"] = seed;
    doc["profile"] = profile;
    doc["config"] = config;
    doc["versions"] = {{"referee", kVersion}};
    doc["outputs"] = outputs;
    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - started)
            .count();
    doc["wall_time_s"] = wall;
    atomic_write(out_dir / "manifest.json", doc.dump(2) + "\n");
  }
};

// ---------------------------------------------------------------------------
// Resolved run configuration.

struct RunConfig {
  std::string graph_path;
  std::string graph_format = "json";
  std::string checkpoint_path;
  fs::path out_dir = "out";
  std::uint64_t seed = 0;
  std::string profile = "desk";
  unsigned jobs = 1;

  gcn::TrainConfig train;
  explain::ExplainConfig explain_cfg;
  std::vector<double> ratios;
  bool debias_frozen = false;
  std::vector<double> sweep_alphas;
  std::vector<double> sweep_betas;
  std::size_t sweep_sample = 3;
  graph::SbmParams synth;

  ordered_json echo() const {
    ordered_json j;
    j["graph"] = graph_path;
    j["format"] = graph_format;
    if (!checkpoint_path.empty()) j["checkpoint"] = checkpoint_path;
    j["train"] = {{"lr", train.learning_rate},
                  {"epochs", train.epochs},
                  {"hidden", train.hidden},
                  {"split-train", train.train_fraction},
                  {"split-val", train.val_fraction}};
    j["explain"] = {
        {"lr", explain_cfg.learning_rate},
        {"epochs", explain_cfg.epochs},
        {"alpha", explain_cfg.alpha},
        {"beta", explain_cfg.beta},
        {"gamma", explain_cfg.gamma},
        {"budget-bias", explain_cfg.budget_bias},
        {"budget-fair", explain_cfg.budget_fair},
        {"sinkhorn-eps", explain_cfg.sinkhorn_eps},
        {"sinkhorn-iters", explain_cfg.sinkhorn_iters},
        {"budget-mode",
         explain_cfg.budget_mode == explain::BudgetMode::l1 ? "l1" : "budget"}};
    j["debias"] = {{"ratios", ratios}, {"frozen", debias_frozen}};
    j["sweep"] = {{"alphas", sweep_alphas},
                  {"betas", sweep_betas},
                  {"sample", sweep_sample}};
    j["synth"] = {{"n0", synth.n0},       {"n1", synth.n1},
                  {"p-in", synth.p_in},   {"p-out", synth.p_out},
                  {"dim", synth.feature_dim}, {"mu", synth.mu},
                  {"rho", synth.rho}};
    return j;
  }
};

graph::AttributedGraph load_input_graph(const RunConfig& rc) {
  if (rc.graph_path.empty()) throw_validation("missing required --graph");
  if (rc.graph_format != "json" && rc.graph_format != "csv")
    throw_validation("unknown graph format '" + rc.graph_format + "'");
  const auto format = rc.graph_format == "csv" ? graph::GraphFormat::csv_triplet
                                               : graph::GraphFormat::json;
  return graph::load_graph(rc.graph_path, format);
}

std::string node_name(const graph::AttributedGraph& g, graph::NodeId v) {
  return g.node_ids.empty() ? std::to_string(v) : g.node_ids[v];
}

// Nodes with at least one incident edge; isolated nodes have nothing to explain.
std::vector<graph::NodeId> explainable_nodes(const graph::AttributedGraph& g) {
  std::vector<std::uint8_t> touched(g.num_nodes, 0);
  for (const auto& e : g.edges) {
    touched[e.u] = 1;
    touched[e.v] = 1;
  }
  std::vector<graph::NodeId> out;
  for (graph::NodeId v = 0; v < g.num_nodes; ++v)
    if (touched[v]) out.push_back(v);
  return out;
}

ordered_json explanation_json(const graph::AttributedGraph& g,
                              const explain::ExplanationPair& pair) {
  auto edges_json = [&](const std::vector<explain::ScoredEdge>& edges) {
    ordered_json arr = ordered_json::array();
    for (const auto& se : edges)
      arr.push_back({node_name(g, se.edge.u), node_name(g, se.edge.v), se.score});
    return arr;
  };
  ordered_json j;
  j["node"] = node_name(g, pair.node);
  j["B_vanilla"] = pair.b_vanilla;
  j["bias_edges"] = edges_json(pair.bias_edges);
  j["fairness_edges"] = edges_json(pair.fairness_edges);
  j["delta_b_promoted"] = pair.delta_b_promoted;
  j["delta_b_reduced"] = pair.delta_b_reduced;
  j["fidelity_bias"] = pair.fidelity_bias;
  j["fidelity_fair"] = pair.fidelity_fair;
  j["loss_terms"] = {{"l1", pair.loss_terms.l1},
                     {"l2", pair.loss_terms.l2},
                     {"l3", pair.loss_terms.l3},
                     {"l4", pair.loss_terms.l4}};
  return j;
}

struct Summary {
  std::size_t nodes = 0;
  double mean_promoted = 0.0;
  double mean_reduced = 0.0;
  double fidelity_bias = 0.0;
  double fidelity_fair = 0.0;
};

Summary summarize(const std::vector<explain::ExplanationPair>& pairs) {
  Summary s;
  s.nodes = pairs.size();
  for (const auto& p : pairs) {
    s.mean_promoted += p.delta_b_promoted;
    s.mean_reduced += p.delta_b_reduced;
    s.fidelity_bias += p.fidelity_bias ? 1.0 : 0.0;
    s.fidelity_fair += p.fidelity_fair ? 1.0 : 0.0;
  }
  if (s.nodes > 0) {
    const double n = static_cast<double>(s.nodes);
    s.mean_promoted /= n;
    s.mean_reduced /= n;
    s.fidelity_bias /= n;
    s.fidelity_fair /= n;
  }
  return s;
}

std::string summary_csv(const Summary& s) {
  std::ostringstream out;
  out << "metric,value\n";
  out << "nodes," << s.nodes << "\n";
  out << "mean_delta_b_promoted," << fmt17(s.mean_promoted) << "\n";
  out << "mean_delta_b_reduced," << fmt17(s.mean_reduced) << "\n";
  out << "fidelity_bias," << fmt17(s.fidelity_bias) << "\n";
  out << "fidelity_fair," << fmt17(s.fidelity_fair) << "\n";
  return out.str();
}

void print_summary(const Summary& s) {
  std::cout << "explained nodes:        " << s.nodes << "\n"
            << "mean delta_B promoted:  " << s.mean_promoted << "\n"
            << "mean delta_B reduced:   " << s.mean_reduced << "\n"
            << "fidelity (bias):        " << s.fidelity_bias << "\n"
            << "fidelity (fairness):    " << s.fidelity_fair << "\n";
}

// ---------------------------------------------------------------------------
// Commands.

void cmd_train(const RunConfig& rc, Manifest& manifest) {
  auto g = load_input_graph(rc);
  g = graph::normalize_features(g);
  std::vector<gcn::TrainLogRow> log;
  const gcn::GcnModel model = gcn::train(g, rc.train, &log);

  atomic_write(rc.out_dir / "checkpoint.json", gcn::checkpoint_to_json(model));
  std::ostringstream log_csv;
  log_csv << "epoch,train_loss,val_accuracy\n";
  for (const auto& row : log)
    log_csv << row.epoch << "," << fmt17(row.train_loss) << ","
            << fmt17(row.val_accuracy) << "\n";
  atomic_write(rc.out_dir / "train_log.csv", log_csv.str());
  manifest.outputs = {"checkpoint.json", "train_log.csv"};
  std::cout << "trained " << rc.train.epochs << " epochs, best val accuracy "
            << model.best_val_accuracy << "\n";
}

std::vector<graph::NodeId> resolve_explain_nodes(const graph::AttributedGraph& g,
                                                 const std::string& nodes_arg,
                                                 std::size_t sample_count,
                                                 std::uint64_t seed) {
  if (!nodes_arg.empty() && sample_count > 0)
    throw_validation("explain: give either --nodes or --sample, not both");
  if (nodes_arg.empty() && sample_count == 0)
    throw_validation("explain: one of --nodes or --sample is required");

  std::vector<graph::NodeId> nodes;
  if (!nodes_arg.empty()) {
    std::stringstream ss(nodes_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      item = trim(item);
      if (item.empty()) continue;
      graph::NodeId found = 0;
      bool ok = false;
      if (!g.node_ids.empty()) {
        for (graph::NodeId v = 0; v < g.num_nodes; ++v)
          if (g.node_ids[v] == item) {
            found = v;
            ok = true;
            break;
          }
      }
      if (!ok) {
        try {
          const auto idx = std::stoull(item);
          if (idx < g.num_nodes) {
            found = static_cast<graph::NodeId>(idx);
            ok = true;
          }
        } catch (const std::exception&) {
        }
      }
      if (!ok) throw_validation("explain: unknown node '" + item + "'");
      nodes.push_back(found);
    }
    if (nodes.empty()) throw_validation("explain: empty --nodes list");
    return nodes;
  }

  auto candidates = explainable_nodes(g);
  if (candidates.size() < sample_count)
    throw_validation("explain: --sample " + std::to_string(sample_count) +
                     " exceeds the " + std::to_string(candidates.size()) +
                     " nodes with incident edges");
  Rng rng(derive_seed(seed, 500));
  rng.shuffle(candidates);
  candidates.resize(sample_count);
  std::sort(candidates.begin(), candidates.end());
  return candidates;
}

void cmd_explain(const RunConfig& rc, const std::string& nodes_arg,
                 std::size_t sample_count, Manifest& manifest) {
  auto g = load_input_graph(rc);
  g = graph::normalize_features(g);
  if (rc.checkpoint_path.empty())
    throw_validation("explain: missing required --checkpoint");
  const gcn::GcnModel model = gcn::load_checkpoint(rc.checkpoint_path);

  const auto nodes = resolve_explain_nodes(g, nodes_arg, sample_count, rc.seed);
  const num::Matrix vanilla = gcn::forward(model, gcn::view_of(g));

  std::vector<explain::ExplanationPair> pairs(nodes.size());
  parallel_for(nodes.size(), rc.jobs, [&](std::size_t k) {
    pairs[k] = explain::explain_node(model, g, nodes[k], rc.explain_cfg, &vanilla);
  });

  for (std::size_t k = 0; k < pairs.size(); ++k) {
    const std::string name = "explain_node_" + node_name(g, nodes[k]) + ".json";
    atomic_write(rc.out_dir / name, explanation_json(g, pairs[k]).dump(2) + "\n");
    manifest.outputs.push_back(name);
  }
  const Summary s = summarize(pairs);
  atomic_write(rc.out_dir / "summary.csv", summary_csv(s));
  manifest.outputs.push_back("summary.csv");
  print_summary(s);
}

void cmd_debias(const RunConfig& rc, Manifest& manifest) {
  auto g = load_input_graph(rc);
  g = graph::normalize_features(g);

  debias::DebiasConfig dcfg;
  dcfg.ratios = rc.ratios;
  dcfg.sample_seed = rc.seed;
  dcfg.frozen_weights = rc.debias_frozen;
  dcfg.jobs = rc.jobs;
  const debias::DebiasReport report =
      debias::run_debias(g, rc.train, rc.explain_cfg, dcfg);

  std::ostringstream csv;
  csv << "ratio,sampled_count,removed_edges,accuracy,delta_sp,delta_eo\n";
  for (const auto& row : report.rows)
    csv << fmt17(row.ratio) << "," << row.sampled.size() << ","
        << row.removed.size() << "," << fmt17(row.accuracy) << ","
        << fmt17(row.delta_sp) << "," << fmt17(row.delta_eo) << "\n";
  atomic_write(rc.out_dir / "debias.csv", csv.str());

  ordered_json doc;
  doc["vanilla"] = {{"accuracy", report.vanilla_accuracy},
                    {"delta_sp", report.vanilla_delta_sp},
                    {"delta_eo", report.vanilla_delta_eo}};
  doc["retrained"] = report.retrained;
  doc["rows"] = ordered_json::array();
  for (const auto& row : report.rows) {
    ordered_json r;
    r["ratio"] = row.ratio;
    ordered_json sampled = ordered_json::array();
    for (const auto v : row.sampled) sampled.push_back(node_name(g, v));
    r["sampled"] = sampled;
    ordered_json removed = ordered_json::array();
    for (const auto& e : row.removed)
      removed.push_back({node_name(g, e.u), node_name(g, e.v)});
    r["removed_edges"] = removed;
    r["accuracy"] = row.accuracy;
    r["delta_sp"] = row.delta_sp;
    r["delta_eo"] = row.delta_eo;
    doc["rows"].push_back(r);
  }
  atomic_write(rc.out_dir / "debias.json", doc.dump(2) + "\n");
  manifest.outputs = {"debias.csv", "debias.json"};

  std::cout << "ratio  accuracy  delta_sp  delta_eo\n";
  for (const auto& row : report.rows)
    std::cout << row.ratio << "  " << row.accuracy << "  " << row.delta_sp << "  "
              << row.delta_eo << "\n";
}

void cmd_synth(const RunConfig& rc, Manifest& manifest) {
  graph::SbmParams p = rc.synth;
  p.seed = rc.seed;
  const auto g = graph::generate_sbm(p);
  atomic_write(rc.out_dir / "graph.json", graph::graph_to_json(g));
  manifest.outputs = {"graph.json"};
  std::cout << "generated graph: " << g.num_nodes << " nodes, " << g.edges.size()
            << " edges\n";
}

void cmd_sweep(const RunConfig& rc, Manifest& manifest) {
  auto g = load_input_graph(rc);
  g = graph::normalize_features(g);

  std::vector<double> alphas = rc.sweep_alphas;
  std::vector<double> betas = rc.sweep_betas;
  std::sort(alphas.begin(), alphas.end());
  std::sort(betas.begin(), betas.end());

  const gcn::GcnModel model = gcn::train(g, rc.train);
  const gcn::Split split = gcn::stratified_split(g, rc.train);
  const num::Matrix vanilla = gcn::forward(model, gcn::view_of(g));

  auto candidates = explainable_nodes(g);
  if (candidates.size() < rc.sweep_sample)
    throw_validation("sweep: sample exceeds explainable node count");
  Rng rng(derive_seed(rc.seed, 600));
  rng.shuffle(candidates);
  candidates.resize(rc.sweep_sample);
  std::sort(candidates.begin(), candidates.end());

  std::ostringstream csv;
  csv << "alpha,beta,mean_delta_b_reduced,delta_sp,accuracy\n";
  for (const double alpha : alphas) {
    for (const double beta : betas) {
      explain::ExplainConfig ecfg = rc.explain_cfg;
      ecfg.alpha = alpha;
      ecfg.beta = beta;
      std::vector<explain::ExplanationPair> pairs(candidates.size());
      parallel_for(candidates.size(), rc.jobs, [&](std::size_t k) {
        pairs[k] = explain::explain_node(model, g, candidates[k], ecfg, &vanilla);
      });
      double mean_reduced = 0.0;
      for (const auto& p : pairs) mean_reduced += p.delta_b_reduced;
      mean_reduced /= static_cast<double>(pairs.size());

      const auto removed = debias::removal_set(pairs);
      graph::AttributedGraph edited = g;
      if (!removed.empty()) {
        std::set<graph::Edge> drop(removed.begin(), removed.end());
        edited.edges.clear();
        for (const auto& e : g.edges)
          if (!drop.count(e)) edited.edges.push_back(e);
      }
      const gcn::GcnModel retrained = gcn::train(edited, rc.train);
      const num::Matrix probs = gcn::forward(retrained, gcn::view_of(edited));
      const auto preds = gcn::predict_labels(probs);
      std::vector<std::uint8_t> tp, tg;
      for (const auto v : split.test) {
        tp.push_back(preds[v]);
        tg.push_back(g.sensitive[v]);
      }
      const double acc = gcn::accuracy(preds, g.labels, split.test);
      const double dsp = metrics::delta_sp(tp, tg);
      csv << fmt17(alpha) << "," << fmt17(beta) << "," << fmt17(mean_reduced) << ","
          << fmt17(dsp) << "," << fmt17(acc) << "\n";
    }
  }
  atomic_write(rc.out_dir / "sweep.csv", csv.str());
  manifest.outputs = {"sweep.csv"};
  std::cout << "sweep grid " << alphas.size() << " x " << betas.size()
            << " written\n";
}

void cmd_report(const RunConfig& rc, const std::string& in_dir, Manifest& manifest) {
  if (in_dir.empty()) throw_validation("report: missing required --in");
  if (!fs::is_directory(in_dir))
    throw_validation("report: '" + in_dir + "' is not a directory");
  std::vector<fs::path> files;
  for (const auto& entry : fs::directory_iterator(in_dir)) {
    const auto name = entry.path().filename().string();
    if (name.rfind("explain_node_", 0) == 0 && entry.path().extension() == ".json")
      files.push_back(entry.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty())
    throw_validation("report: no explain_node_*.json files under " + in_dir);

  std::vector<explain::ExplanationPair> pairs;
  for (const auto& file : files) {
    std::ifstream in(file);
    ordered_json j;
    try {
      j = ordered_json::parse(in);
      explain::ExplanationPair p;
      p.delta_b_promoted = j.at("delta_b_promoted").get<double>();
      p.delta_b_reduced = j.at("delta_b_reduced").get<double>();
      p.fidelity_bias = j.at("fidelity_bias").get<bool>();
      p.fidelity_fair = j.at("fidelity_fair").get<bool>();
      pairs.push_back(std::move(p));
    } catch (const std::exception& e) {
      throw_validation("report: " + file.string() + ": " + e.what());
    }
  }
  const Summary s = summarize(pairs);
  atomic_write(rc.out_dir / "report.csv", summary_csv(s));
  manifest.outputs = {"report.csv"};
  print_summary(s);
}

void emit_error(const std::string& kind, const std::string& message) {
  ordered_json j;
  j["error"] = {{"kind", kind}, {"message", message}};
  std::cerr << j.dump() << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"structural bias/fairness explanations for GCN node predictions"};
  app.require_subcommand(1);

  std::string config_path, profile = "desk", out_dir = "out";
  std::string graph_path, graph_format, checkpoint_path;
  std::uint64_t seed = 0;
  unsigned jobs = 1;
  app.add_option("--config", config_path, "flat INI config file");
  app.add_option("--seed", seed, "global seed")->capture_default_str();
  app.add_option("--profile", profile, "hyperparameter profile: desk or paper")
      ->check(CLI::IsMember({"desk", "paper"}))
      ->capture_default_str();
  app.add_option("--jobs", jobs, "concurrent explanation workers")
      ->check(CLI::Range(1u, 256u))
      ->capture_default_str();
  app.add_option("--out", out_dir, "output directory")->capture_default_str();
  auto* o_graph = app.add_option("--graph", graph_path, "input graph path");
  auto* o_format =
      app.add_option("--format", graph_format, "graph format: json or csv");
  auto* o_ckpt = app.add_option("--checkpoint", checkpoint_path, "checkpoint file");

  RunConfig rc;
  auto* o_tlr = app.add_option("--train.lr", rc.train.learning_rate);
  auto* o_tep = app.add_option("--train.epochs", rc.train.epochs);
  auto* o_thd = app.add_option("--train.hidden", rc.train.hidden);
  auto* o_tst = app.add_option("--train.split-train", rc.train.train_fraction);
  auto* o_tsv = app.add_option("--train.split-val", rc.train.val_fraction);

  auto* o_elr = app.add_option("--explain.lr", rc.explain_cfg.learning_rate);
  auto* o_eep = app.add_option("--explain.epochs", rc.explain_cfg.epochs);
  auto* o_eal = app.add_option("--explain.alpha", rc.explain_cfg.alpha);
  auto* o_ebe = app.add_option("--explain.beta", rc.explain_cfg.beta);
  auto* o_ega = app.add_option("--explain.gamma", rc.explain_cfg.gamma);
  auto* o_ebb = app.add_option("--explain.budget-bias", rc.explain_cfg.budget_bias);
  auto* o_ebf = app.add_option("--explain.budget-fair", rc.explain_cfg.budget_fair);
  auto* o_ese = app.add_option("--explain.sinkhorn-eps", rc.explain_cfg.sinkhorn_eps);
  int sink_iters = 200;
  auto* o_esi = app.add_option("--explain.sinkhorn-iters", sink_iters);
  std::string budget_mode;
  auto* o_ebm = app.add_option("--explain.budget-mode", budget_mode)
                    ->check(CLI::IsMember({"l1", "budget"}));

  std::string ratios_arg;
  auto* o_dra = app.add_option("--debias.ratios", ratios_arg);
  bool frozen = false;
  auto* o_dfr = app.add_flag("--debias.frozen", frozen,
                             "evaluate original weights on the edited graph");

  std::string alphas_arg, betas_arg;
  auto* o_sal = app.add_option("--sweep.alphas", alphas_arg);
  auto* o_sbe = app.add_option("--sweep.betas", betas_arg);
  auto* o_ssm = app.add_option("--sweep.sample", rc.sweep_sample);

  auto* o_n0 = app.add_option("--synth.n0", rc.synth.n0);
  auto* o_n1 = app.add_option("--synth.n1", rc.synth.n1);
  auto* o_pi = app.add_option("--synth.p-in", rc.synth.p_in);
  auto* o_po = app.add_option("--synth.p-out", rc.synth.p_out);
  auto* o_dim = app.add_option("--synth.dim", rc.synth.feature_dim);
  auto* o_mu = app.add_option("--synth.mu", rc.synth.mu);
  auto* o_rho = app.add_option("--synth.rho", rc.synth.rho);

  CLI::App* sub_train =
      app.add_subcommand("train", "train the GCN and write a checkpoint");
  CLI::App* sub_explain =
      app.add_subcommand("explain", "explain bias/fairness for selected nodes");
  std::string nodes_arg;
  std::size_t sample_count = 0;
  sub_explain->add_option("--nodes", nodes_arg, "comma-separated node ids");
  sub_explain->add_option("--sample", sample_count, "sample this many nodes");
  CLI::App* sub_debias =
      app.add_subcommand("debias", "remove bias-only edges and re-evaluate");
  CLI::App* sub_synth =
      app.add_subcommand("synth", "generate a planted-bias SBM graph");
  CLI::App* sub_sweep = app.add_subcommand("sweep", "grid sweep over alpha and beta");
  CLI::App* sub_report =
      app.add_subcommand("report", "summarize existing explanation files");
  std::string report_in;
  sub_report->add_option("--in", report_in, "directory with explain_node_*.json");

  // App-level options may appear after the subcommand name.
  for (CLI::App* sub : {sub_train, sub_explain, sub_debias, sub_synth, sub_sweep,
                        sub_report})
    sub->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    emit_error("validation", e.what());
    return 1;
  }

  Manifest manifest;
  try {
    IniMap ini;
    const bool have_ini = !config_path.empty();
    if (have_ini) ini = load_ini(config_path);
    const bool paper = profile == "paper";

    Resolver rv{have_ini ? &ini : nullptr, paper};
    if (!o_graph->count()) rv.text(o_graph, graph_path, "graph", "", "");
    if (!o_format->count()) rv.text(o_format, graph_format, "format", "json", "json");
    if (!o_ckpt->count()) rv.text(o_ckpt, checkpoint_path, "checkpoint", "", "");
    rc.graph_path = graph_path;
    rc.graph_format = graph_format;
    rc.checkpoint_path = checkpoint_path;

    rv.num(o_tlr, rc.train.learning_rate, "train.lr", 1e-2, 1e-2);
    rv.count(o_tep, rc.train.epochs, "train.epochs", 200, 200);
    rv.count(o_thd, rc.train.hidden, "train.hidden", 16, 20);
    rv.num(o_tst, rc.train.train_fraction, "train.split-train", 0.8, 0.8);
    rv.num(o_tsv, rc.train.val_fraction, "train.split-val", 0.1, 0.1);
    rc.train.seed = seed;

    rv.num(o_elr, rc.explain_cfg.learning_rate, "explain.lr", 1e-2, 1e-5);
    rv.count(o_eep, rc.explain_cfg.epochs, "explain.epochs", 300, 200);
    rv.num(o_eal, rc.explain_cfg.alpha, "explain.alpha", 1.0, 1.0);
    rv.num(o_ebe, rc.explain_cfg.beta, "explain.beta", 1e-4, 1e-4);
    rv.num(o_ega, rc.explain_cfg.gamma, "explain.gamma", 1e-4, 1e-4);
    rv.count(o_ebb, rc.explain_cfg.budget_bias, "explain.budget-bias", 20, 500);
    rv.count(o_ebf, rc.explain_cfg.budget_fair, "explain.budget-fair", 20, 200);
    rv.num(o_ese, rc.explain_cfg.sinkhorn_eps, "explain.sinkhorn-eps", 0.01, 0.01);
    if (o_esi->count()) {
      rc.explain_cfg.sinkhorn_iters = sink_iters;
    } else {
      std::size_t iters = 0;
      rv.count(o_esi, iters, "explain.sinkhorn-iters", 200, 200);
      rc.explain_cfg.sinkhorn_iters = static_cast<int>(iters);
    }
    rv.text(o_ebm, budget_mode, "explain.budget-mode", "budget", "budget");
    if (budget_mode != "l1" && budget_mode != "budget")
      throw_validation("config: explain.budget-mode must be 'l1' or 'budget'");
    rc.explain_cfg.budget_mode =
        budget_mode == "l1" ? explain::BudgetMode::l1 : explain::BudgetMode::budget;
    rc.explain_cfg.seed = seed;

    rv.text(o_dra, ratios_arg, "debias.ratios", "0,0.05,0.1,0.15,0.2",
            "0,0.05,0.1,0.15,0.2");
    rc.ratios = parse_double_list(ratios_arg, "debias.ratios");
    rv.flag(o_dfr, frozen, "debias.frozen", false);
    rc.debias_frozen = frozen;

    const std::string default_grid = "1e-5,1e-4,1e-3,1e-2,1e-1,1,10,100";
    rv.text(o_sal, alphas_arg, "sweep.alphas", default_grid, default_grid);
    rv.text(o_sbe, betas_arg, "sweep.betas", default_grid, default_grid);
    rc.sweep_alphas = parse_double_list(alphas_arg, "sweep.alphas");
    rc.sweep_betas = parse_double_list(betas_arg, "sweep.betas");
    rv.count(o_ssm, rc.sweep_sample, "sweep.sample", 3, 3);
    if (rc.sweep_sample < 1) throw_validation("sweep.sample must be >= 1");

    rv.count(o_n0, rc.synth.n0, "synth.n0", 50, 50);
    rv.count(o_n1, rc.synth.n1, "synth.n1", 50, 50);
    rv.num(o_pi, rc.synth.p_in, "synth.p-in", 0.2, 0.2);
    rv.num(o_po, rc.synth.p_out, "synth.p-out", 0.05, 0.05);
    rv.count(o_dim, rc.synth.feature_dim, "synth.dim", 8, 8);
    rv.num(o_mu, rc.synth.mu, "synth.mu", 0.5, 0.5);
    rv.num(o_rho, rc.synth.rho, "synth.rho", 0.9, 0.9);

    rc.out_dir = out_dir;
    rc.seed = seed;
    rc.profile = profile;
    rc.jobs = jobs;

    // Validate the numeric config up front, before any work starts.
    rc.train.validate();
    rc.explain_cfg.validate();
    if (app.got_subcommand(sub_synth)) rc.synth.validate();

    manifest.command = app.get_subcommands().front()->get_name();
    manifest.out_dir = rc.out_dir;
    manifest.config = rc.echo();
    manifest.seed = seed;
    manifest.profile = profile;

    if (app.got_subcommand(sub_train)) {
      cmd_train(rc, manifest);
    } else if (app.got_subcommand(sub_explain)) {
      cmd_explain(rc, nodes_arg, sample_count, manifest);
    } else if (app.got_subcommand(sub_debias)) {
      cmd_debias(rc, manifest);
    } else if (app.got_subcommand(sub_synth)) {
      cmd_synth(rc, manifest);
    } else if (app.got_subcommand(sub_sweep)) {
      cmd_sweep(rc, manifest);
    } else if (app.got_subcommand(sub_report)) {
      cmd_report(rc, report_in, manifest);
    }
    manifest.write("ok");
    return 0;
  } catch (const Error& e) {
    const bool validation = e.kind() == Error::Kind::validation;
    if (!manifest.command.empty()) {
      try {
        manifest.write("error", e.what());
      } catch (...) {
      }
    }
    emit_error(validation ? "validation" : "runtime", e.what());
    return validation ? 1 : 2;
  } catch (const std::exception& e) {
    if (!manifest.command.empty()) {
      try {
        manifest.write("error", e.what());
      } catch (...) {
      }
    }
    emit_error("runtime", e.what());
    return 2;
  }
}
