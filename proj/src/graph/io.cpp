#include "referee/graph/io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_map>

#include <json.hpp>

#include "referee/util/error.hpp"

namespace referee::graph {

namespace {

using nlohmann::json;

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::uint8_t parse_binary(const json& j, const char* field, const std::string& where) {
  if (!j.is_number_integer())
    throw_validation(where + ": field '" + field + "' must be 0 or 1");
  const auto v = j.get<std::int64_t>();
  if (v != 0 && v != 1)
    throw_validation(where + ": field '" + field + "' must be 0 or 1, got " +
                     std::to_string(v));
  return static_cast<std::uint8_t>(v);
}

struct EdgeAccumulator {
  std::set<Edge> seen;

  void add(NodeId u, NodeId v) {
    if (u == v) return;  // self-loops are never stored
    seen.insert(Edge(u, v));
  }

  std::vector<Edge> take() { return {seen.begin(), seen.end()}; }
};

AttributedGraph load_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw_validation("load_graph: cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw_validation("load_graph: " + path.string() + ": " + e.what());
  }
  if (!doc.is_object() || !doc.contains("nodes") || !doc.contains("edges"))
    throw_validation("load_graph: " + path.string() +
                     ": missing top-level 'nodes' or 'edges'");

  const json& nodes = doc["nodes"];
  if (!nodes.is_array() || nodes.empty())
    throw_validation("load_graph: " + path.string() + ": 'nodes' must be a non-empty array");

  AttributedGraph g;
  g.num_nodes = nodes.size();
  g.sensitive.resize(g.num_nodes);
  g.labels.resize(g.num_nodes);
  g.node_ids.resize(g.num_nodes);
  std::unordered_map<std::string, NodeId> index;

  std::size_t d = 0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const std::string where = path.string() + ": nodes[" + std::to_string(i) + "]";
    const json& n = nodes[i];
    for (const char* field : {"id", "features", "sensitive", "label"})
      if (!n.contains(field))
        throw_validation(where + ": missing field '" + std::string(field) + "'");
    const std::string id = n["id"].is_string() ? n["id"].get<std::string>()
                                               : n["id"].dump();
    if (!index.emplace(id, static_cast<NodeId>(i)).second)
      throw_validation(where + ": duplicate node id '" + id + "'");
    g.node_ids[i] = id;
    const json& feats = n["features"];
    if (!feats.is_array())
      throw_validation(where + ": 'features' must be an array");
    if (i == 0) {
      d = feats.size();
      g.features = num::Matrix(g.num_nodes, d);
    } else if (feats.size() != d) {
      throw_validation(where + ": feature length " + std::to_string(feats.size()) +
                       " differs from first node's " + std::to_string(d));
    }
    for (std::size_t j = 0; j < d; ++j) {
      if (!feats[j].is_number())
        throw_validation(where + ": features[" + std::to_string(j) + "] is not a number");
      g.features.at(i, j) = feats[j].get<double>();
    }
    g.sensitive[i] = parse_binary(n["sensitive"], "sensitive", where);
    g.labels[i] = parse_binary(n["label"], "label", where);
  }

  const json& edges = doc["edges"];
  if (!edges.is_array())
    throw_validation("load_graph: " + path.string() + ": 'edges' must be an array");
  EdgeAccumulator acc;
  for (std::size_t e = 0; e < edges.size(); ++e) {
    const std::string where = path.string() + ": edges[" + std::to_string(e) + "]";
    const json& pair = edges[e];
    if (!pair.is_array() || pair.size() != 2)
      throw_validation(where + ": edge must be a two-element array");
    NodeId ends[2];
    for (int k = 0; k < 2; ++k) {
      const std::string id =
          pair[k].is_string() ? pair[k].get<std::string>() : pair[k].dump();
      const auto it = index.find(id);
      if (it == index.end())
        throw_validation(where + ": endpoint '" + id + "' is not a declared node");
      ends[k] = it->second;
    }
    acc.add(ends[0], ends[1]);
  }
  g.edges = acc.take();
  g.validate();
  return g;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (c != '\r') {
      cur.push_back(c);
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::size_t min_cols) {
  std::ifstream in(path);
  if (!in) throw_validation("load_graph: cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() < min_cols)
      throw_validation(path.string() + ":" + std::to_string(lineno) +
                       ": expected at least " + std::to_string(min_cols) +
                       " columns, got " + std::to_string(fields.size()));
    rows.push_back(std::move(fields));
  }
  if (rows.empty())
    throw_validation(path.string() + ": file is empty");
  return rows;
}

double parse_double(const std::string& s, const std::string& where) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw_validation(where + ": '" + s + "' is not a number");
  }
}

std::uint8_t parse_binary_str(const std::string& s, const char* field,
                              const std::string& where) {
  if (s == "0") return 0;
  if (s == "1") return 1;
  throw_validation(where + ": " + field + " must be 0 or 1, got '" + s + "'");
}

AttributedGraph load_csv_triplet(const std::filesystem::path& dir) {
  const auto feats_rows = read_csv(dir / "features.csv", 2);
  const auto meta_rows = read_csv(dir / "meta.csv", 3);
  const auto edge_rows = read_csv(dir / "edges.csv", 2);

  if (feats_rows[0][0] != "id")
    throw_validation((dir / "features.csv").string() + ":1: header must start with 'id'");
  if (meta_rows[0][0] != "id" || meta_rows[0][1] != "sensitive" ||
      meta_rows[0][2] != "label")
    throw_validation((dir / "meta.csv").string() + ":1: header must be 'id,sensitive,label'");
  if (edge_rows[0][0] != "src" || edge_rows[0][1] != "dst")
    throw_validation((dir / "edges.csv").string() + ":1: header must be 'src,dst'");

  AttributedGraph g;
  g.num_nodes = feats_rows.size() - 1;
  if (g.num_nodes == 0)
    throw_validation((dir / "features.csv").string() + ": no node records");
  const std::size_t d = feats_rows[0].size() - 1;
  g.features = num::Matrix(g.num_nodes, d);
  g.node_ids.resize(g.num_nodes);
  g.sensitive.assign(g.num_nodes, 2);  // sentinel: not yet set
  g.labels.assign(g.num_nodes, 0);

  std::unordered_map<std::string, NodeId> index;
  for (std::size_t r = 1; r < feats_rows.size(); ++r) {
    const std::string where = (dir / "features.csv").string() + ":" + std::to_string(r + 1);
    const auto& row = feats_rows[r];
    if (row.size() != d + 1)
      throw_validation(where + ": expected " + std::to_string(d + 1) + " columns");
    const NodeId i = static_cast<NodeId>(r - 1);
    if (!index.emplace(row[0], i).second)
      throw_validation(where + ": duplicate node id '" + row[0] + "'");
    g.node_ids[i] = row[0];
    for (std::size_t j = 0; j < d; ++j)
      g.features.at(i, j) = parse_double(row[j + 1], where);
  }

  for (std::size_t r = 1; r < meta_rows.size(); ++r) {
    const std::string where = (dir / "meta.csv").string() + ":" + std::to_string(r + 1);
    const auto& row = meta_rows[r];
    const auto it = index.find(row[0]);
    if (it == index.end())
      throw_validation(where + ": id '" + row[0] + "' is not in features.csv");
    g.sensitive[it->second] = parse_binary_str(row[1], "sensitive", where);
    g.labels[it->second] = parse_binary_str(row[2], "label", where);
  }
  for (std::size_t i = 0; i < g.num_nodes; ++i)
    if (g.sensitive[i] == 2)
      throw_validation((dir / "meta.csv").string() + ": no record for node id '" +
                       g.node_ids[i] + "'");

  EdgeAccumulator acc;
  for (std::size_t r = 1; r < edge_rows.size(); ++r) {
    const std::string where = (dir / "edges.csv").string() + ":" + std::to_string(r + 1);
    NodeId ends[2];
    for (int k = 0; k < 2; ++k) {
      const auto it = index.find(edge_rows[r][k]);
      if (it == index.end())
        throw_validation(where + ": endpoint '" + edge_rows[r][k] +
                         "' is not a declared node");
      ends[k] = it->second;
    }
    acc.add(ends[0], ends[1]);
  }
  g.edges = acc.take();
  g.validate();
  return g;
}

}  // namespace

AttributedGraph load_graph(const std::filesystem::path& path, GraphFormat format) {
  switch (format) {
    case GraphFormat::json:
      return load_json(path);
    case GraphFormat::csv_triplet:
      return load_csv_triplet(path);
  }
  throw_validation("load_graph: unknown format");
}

std::string graph_to_json(const AttributedGraph& g) {
  std::ostringstream out;
  out << "{\n  \"nodes\": [\n";
  for (std::size_t i = 0; i < g.num_nodes; ++i) {
    const std::string id = g.node_ids.empty() ? std::to_string(i) : g.node_ids[i];
    out << "    {\"id\": \"" << id << "\", \"features\": [";
    for (std::size_t j = 0; j < g.feature_dim(); ++j) {
      if (j) out << ", ";
      out << fmt17(g.features.at(i, j));
    }
    out << "], \"sensitive\": " << int(g.sensitive[i])
        << ", \"label\": " << int(g.labels[i]) << "}";
    if (i + 1 < g.num_nodes) out << ",";
    out << "\n";
  }
  out << "  ],\n  \"edges\": [";
  for (std::size_t e = 0; e < g.edges.size(); ++e) {
    if (e) out << ", ";
    if (e % 8 == 0) out << "\n    ";
    const std::string iu =
        g.node_ids.empty() ? std::to_string(g.edges[e].u) : g.node_ids[g.edges[e].u];
    const std::string iv =
        g.node_ids.empty() ? std::to_string(g.edges[e].v) : g.node_ids[g.edges[e].v];
    out << "[\"" << iu << "\", \"" << iv << "\"]";
  }
  out << "\n  ]\n}\n";
  return out.str();
}

void save_graph_json(const AttributedGraph& g, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw_runtime("save_graph_json: cannot open " + path.string());
  out << graph_to_json(g);
  if (!out) throw_runtime("save_graph_json: write failed for " + path.string());
}

}  // namespace referee::graph
