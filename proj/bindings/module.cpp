// Python bindings for the main operations: graph handling, GCN training and
// masked forwards, bias metrics, the dual explainers, and the debias harness.

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "referee/debias/debias.hpp"
#include "referee/explain/explain.hpp"
#include "referee/gcn/gcn.hpp"
#include "referee/graph/graph.hpp"
#include "referee/graph/io.hpp"
#include "referee/util/error.hpp"
#include "referee/metrics/bias.hpp"

namespace py = pybind11;
using namespace referee;

namespace {

// Rows of a Matrix as nested lists; simple and fine at desk scale.
std::vector<std::vector<double>> matrix_rows(const num::Matrix& m) {
  std::vector<std::vector<double>> rows(m.rows, std::vector<double>(m.cols));
  for (std::size_t i = 0; i < m.rows; ++i)
    for (std::size_t j = 0; j < m.cols; ++j) rows[i][j] = m.at(i, j);
  return rows;
}

num::Matrix matrix_from_rows(const std::vector<std::vector<double>>& rows) {
  if (rows.empty()) throw_validation("matrix: no rows");
  num::Matrix m(rows.size(), rows[0].size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != m.cols) throw_validation("matrix: ragged rows");
    for (std::size_t j = 0; j < m.cols; ++j) m.at(i, j) = rows[i][j];
  }
  return m;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "structural bias/fairness explanations for GCN node predictions";

  py::register_exception<Error>(m, "RefereeError");

  py::class_<graph::Edge>(m, "Edge")
      .def(py::init<graph::NodeId, graph::NodeId>())
      .def_readonly("u", &graph::Edge::u)
      .def_readonly("v", &graph::Edge::v)
      .def("__repr__",
           [](const graph::Edge& e) {
             return "Edge(" + std::to_string(e.u) + ", " + std::to_string(e.v) + ")";
           })
      .def("__eq__", [](const graph::Edge& a, const graph::Edge& b) { return a == b; })
      .def("__hash__", [](const graph::Edge& e) { return graph::EdgeHash{}(e); });

  py::class_<graph::AttributedGraph>(m, "AttributedGraph")
      .def(py::init<>())
      .def_readonly("num_nodes", &graph::AttributedGraph::num_nodes)
      .def_readonly("edges", &graph::AttributedGraph::edges)
      .def_readonly("sensitive", &graph::AttributedGraph::sensitive)
      .def_readonly("labels", &graph::AttributedGraph::labels)
      .def_readonly("node_ids", &graph::AttributedGraph::node_ids)
      .def_property_readonly(
          "features",
          [](const graph::AttributedGraph& g) { return matrix_rows(g.features); })
      .def("__repr__", [](const graph::AttributedGraph& g) {
        return "AttributedGraph(nodes=" + std::to_string(g.num_nodes) +
               ", edges=" + std::to_string(g.edges.size()) + ")";
      });

  py::class_<graph::ComputationGraph>(m, "ComputationGraph")
      .def_readonly("center", &graph::ComputationGraph::center)
      .def_readonly("nodes", &graph::ComputationGraph::nodes)
      .def_readonly("local_edges", &graph::ComputationGraph::local_edges)
      .def_property_readonly("local_center", &graph::ComputationGraph::local_center);

  py::class_<graph::SbmParams>(m, "SbmParams")
      .def(py::init<>())
      .def_readwrite("n0", &graph::SbmParams::n0)
      .def_readwrite("n1", &graph::SbmParams::n1)
      .def_readwrite("p_in", &graph::SbmParams::p_in)
      .def_readwrite("p_out", &graph::SbmParams::p_out)
      .def_readwrite("feature_dim", &graph::SbmParams::feature_dim)
      .def_readwrite("mu", &graph::SbmParams::mu)
      .def_readwrite("rho", &graph::SbmParams::rho)
      .def_readwrite("seed", &graph::SbmParams::seed);

  m.def("generate_sbm", &graph::generate_sbm, py::arg("params"),
        "Planted-bias stochastic block model");
  m.def("normalize_features", &graph::normalize_features, py::arg("graph"));
  m.def("extract_computation_graph", &graph::extract_computation_graph,
        py::arg("graph"), py::arg("node"), py::arg("hops") = 2);
  m.def(
      "load_graph",
      [](const std::filesystem::path& path, const std::string& format) {
        return graph::load_graph(path, format == "csv"
                                           ? graph::GraphFormat::csv_triplet
                                           : graph::GraphFormat::json);
      },
      py::arg("path"), py::arg("format") = "json");
  m.def("save_graph_json", &graph::save_graph_json, py::arg("graph"), py::arg("path"));

  py::class_<gcn::TrainConfig>(m, "TrainConfig")
      .def(py::init<>())
      .def_readwrite("learning_rate", &gcn::TrainConfig::learning_rate)
      .def_readwrite("epochs", &gcn::TrainConfig::epochs)
      .def_readwrite("train_fraction", &gcn::TrainConfig::train_fraction)
      .def_readwrite("val_fraction", &gcn::TrainConfig::val_fraction)
      .def_readwrite("hidden", &gcn::TrainConfig::hidden)
      .def_readwrite("seed", &gcn::TrainConfig::seed);

  py::class_<gcn::GcnModel>(m, "GcnModel")
      .def_readonly("hidden", &gcn::GcnModel::hidden)
      .def_readonly("classes", &gcn::GcnModel::classes)
      .def_readonly("seed", &gcn::GcnModel::seed)
      .def_readonly("best_val_accuracy", &gcn::GcnModel::best_val_accuracy)
      .def_property_readonly("feature_dim", &gcn::GcnModel::feature_dim);

  m.def(
      "train",
      [](const graph::AttributedGraph& g, const gcn::TrainConfig& cfg) {
        return gcn::train(g, cfg);
      },
      py::arg("graph"), py::arg("config"),
      py::call_guard<py::gil_scoped_release>());
  m.def(
      "forward",
      [](const gcn::GcnModel& model, const graph::AttributedGraph& g,
         const std::optional<std::map<std::pair<graph::NodeId, graph::NodeId>, double>>&
             mask) {
        gcn::EdgeMask edge_mask;
        if (mask)
          for (const auto& [key, value] : *mask)
            edge_mask[graph::Edge(key.first, key.second)] = value;
        return matrix_rows(
            gcn::forward(model, gcn::view_of(g), mask ? &edge_mask : nullptr));
      },
      py::arg("model"), py::arg("graph"), py::arg("mask") = py::none());
  m.def("predict_labels",
        [](const std::vector<std::vector<double>>& outcomes) {
          return gcn::predict_labels(matrix_from_rows(outcomes));
        });
  m.def("save_checkpoint", &gcn::save_checkpoint, py::arg("model"), py::arg("path"));
  m.def("load_checkpoint", &gcn::load_checkpoint, py::arg("path"));

  m.def(
      "w1_exact_binary",
      [](const std::vector<double>& a, const std::vector<double>& b) {
        return metrics::w1_exact_binary(a, b);
      },
      py::arg("set0"), py::arg("set1"));
  m.def(
      "sinkhorn_w1",
      [](const std::vector<std::vector<double>>& a,
         const std::vector<std::vector<double>>& b, double eps, int iters) {
        return metrics::sinkhorn_w1_value(matrix_from_rows(a), matrix_from_rows(b),
                                          eps, iters);
      },
      py::arg("a"), py::arg("b"), py::arg("eps") = 0.01, py::arg("iters") = 200);

  py::class_<metrics::BiasScore>(m, "BiasScore")
      .def_readonly("distance", &metrics::BiasScore::distance)
      .def_readonly("distance_min", &metrics::BiasScore::distance_min)
      .def_readonly("bias", &metrics::BiasScore::bias);

  auto outcome_set = [](const std::vector<std::vector<double>>& outcomes,
                        const std::vector<std::uint8_t>& groups) {
    metrics::OutcomeSet set;
    set.outcomes = matrix_from_rows(outcomes);
    set.groups = groups;
    return set;
  };
  m.def(
      "d_min",
      [outcome_set](const std::vector<std::vector<double>>& outcomes,
                    const std::vector<std::uint8_t>& groups, std::size_t i,
                    std::size_t grid) {
        return metrics::d_min(outcome_set(outcomes, groups), i, grid);
      },
      py::arg("outcomes"), py::arg("groups"), py::arg("i"), py::arg("grid") = 1000);
  m.def(
      "node_bias",
      [outcome_set](const std::vector<std::vector<double>>& outcomes,
                    const std::vector<std::uint8_t>& groups, std::size_t i,
                    std::size_t grid) {
        return metrics::node_bias(outcome_set(outcomes, groups), i, grid);
      },
      py::arg("outcomes"), py::arg("groups"), py::arg("i"), py::arg("grid") = 1000);
  m.def(
      "delta_sp",
      [](const std::vector<std::uint8_t>& preds, const std::vector<std::uint8_t>& groups) {
        return metrics::delta_sp(preds, groups);
      },
      py::arg("predictions"), py::arg("groups"));
  m.def(
      "delta_eo",
      [](const std::vector<std::uint8_t>& preds, const std::vector<std::uint8_t>& labels,
         const std::vector<std::uint8_t>& groups) {
        return metrics::delta_eo(preds, labels, groups);
      },
      py::arg("predictions"), py::arg("labels"), py::arg("groups"));
  m.def(
      "fidelity",
      [](const std::vector<std::uint8_t>& a, const std::vector<std::uint8_t>& b) {
        return metrics::fidelity(a, b);
      },
      py::arg("vanilla_labels"), py::arg("masked_labels"));

  py::enum_<explain::BudgetMode>(m, "BudgetMode")
      .value("l1", explain::BudgetMode::l1)
      .value("budget", explain::BudgetMode::budget);

  py::class_<explain::ExplainConfig>(m, "ExplainConfig")
      .def(py::init<>())
      .def_readwrite("alpha", &explain::ExplainConfig::alpha)
      .def_readwrite("beta", &explain::ExplainConfig::beta)
      .def_readwrite("gamma", &explain::ExplainConfig::gamma)
      .def_readwrite("budget_bias", &explain::ExplainConfig::budget_bias)
      .def_readwrite("budget_fair", &explain::ExplainConfig::budget_fair)
      .def_readwrite("learning_rate", &explain::ExplainConfig::learning_rate)
      .def_readwrite("epochs", &explain::ExplainConfig::epochs)
      .def_readwrite("seed", &explain::ExplainConfig::seed)
      .def_readwrite("sinkhorn_eps", &explain::ExplainConfig::sinkhorn_eps)
      .def_readwrite("sinkhorn_iters", &explain::ExplainConfig::sinkhorn_iters)
      .def_readwrite("budget_mode", &explain::ExplainConfig::budget_mode)
      .def_readwrite("hops", &explain::ExplainConfig::hops);

  py::class_<explain::ScoredEdge>(m, "ScoredEdge")
      .def_readonly("edge", &explain::ScoredEdge::edge)
      .def_readonly("score", &explain::ScoredEdge::score);

  py::class_<explain::LossTerms>(m, "LossTerms")
      .def_readonly("l1", &explain::LossTerms::l1)
      .def_readonly("l2", &explain::LossTerms::l2)
      .def_readonly("l3", &explain::LossTerms::l3)
      .def_readonly("l4", &explain::LossTerms::l4)
      .def_readonly("total", &explain::LossTerms::total);

  py::class_<explain::ExplanationPair>(m, "ExplanationPair")
      .def_readonly("node", &explain::ExplanationPair::node)
      .def_readonly("b_vanilla", &explain::ExplanationPair::b_vanilla)
      .def_readonly("bias_edges", &explain::ExplanationPair::bias_edges)
      .def_readonly("fairness_edges", &explain::ExplanationPair::fairness_edges)
      .def_readonly("delta_b_promoted", &explain::ExplanationPair::delta_b_promoted)
      .def_readonly("delta_b_reduced", &explain::ExplanationPair::delta_b_reduced)
      .def_readonly("fidelity_bias", &explain::ExplanationPair::fidelity_bias)
      .def_readonly("fidelity_fair", &explain::ExplanationPair::fidelity_fair)
      .def_readonly("loss_terms", &explain::ExplanationPair::loss_terms);

  m.def(
      "explain_node",
      [](const gcn::GcnModel& model, const graph::AttributedGraph& g,
         graph::NodeId v, const explain::ExplainConfig& cfg) {
        return explain::explain_node(model, g, v, cfg);
      },
      py::arg("model"), py::arg("graph"), py::arg("node"), py::arg("config"),
      py::call_guard<py::gil_scoped_release>());

  py::class_<debias::DebiasConfig>(m, "DebiasConfig")
      .def(py::init<>())
      .def_readwrite("ratios", &debias::DebiasConfig::ratios)
      .def_readwrite("sample_seed", &debias::DebiasConfig::sample_seed)
      .def_readwrite("frozen_weights", &debias::DebiasConfig::frozen_weights)
      .def_readwrite("jobs", &debias::DebiasConfig::jobs);

  py::class_<debias::DebiasRow>(m, "DebiasRow")
      .def_readonly("ratio", &debias::DebiasRow::ratio)
      .def_readonly("sampled", &debias::DebiasRow::sampled)
      .def_readonly("removed", &debias::DebiasRow::removed)
      .def_readonly("accuracy", &debias::DebiasRow::accuracy)
      .def_readonly("delta_sp", &debias::DebiasRow::delta_sp)
      .def_readonly("delta_eo", &debias::DebiasRow::delta_eo);

  py::class_<debias::DebiasReport>(m, "DebiasReport")
      .def_readonly("rows", &debias::DebiasReport::rows)
      .def_readonly("vanilla_accuracy", &debias::DebiasReport::vanilla_accuracy)
      .def_readonly("vanilla_delta_sp", &debias::DebiasReport::vanilla_delta_sp)
      .def_readonly("vanilla_delta_eo", &debias::DebiasReport::vanilla_delta_eo)
      .def_readonly("retrained", &debias::DebiasReport::retrained);

  m.def(
      "run_debias",
      [](const graph::AttributedGraph& g, const gcn::TrainConfig& recipe,
         const explain::ExplainConfig& ecfg, const debias::DebiasConfig& dcfg) {
        return debias::run_debias(g, recipe, ecfg, dcfg);
      },
      py::arg("graph"), py::arg("train_config"), py::arg("explain_config"),
      py::arg("debias_config"), py::call_guard<py::gil_scoped_release>());

  m.def(
      "removal_set",
      [](const std::vector<explain::ExplanationPair>& pairs) {
        return debias::removal_set(pairs);
      },
      py::arg("pairs"));
}
