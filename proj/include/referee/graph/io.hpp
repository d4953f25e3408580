#pragma once

#include <filesystem>
#include <string>

#include "referee/graph/graph.hpp"

namespace referee::graph {

enum class GraphFormat { json, csv_triplet };

// Loads an attributed graph.
//
// json: one document, {"nodes": [{"id", "features", "sensitive", "label"}...],
//       "edges": [[idA, idB], ...]} with edges referencing node ids.
// csv_triplet: `path` is a directory holding edges.csv ("src,dst"),
//       features.csv ("id,f0,...") and meta.csv ("id,sensitive,label").
//
// Duplicate and reversed edge entries are deduplicated; self-loop entries are
// dropped (self-loops live inside the GCN only). Malformed input raises a
// validation error carrying the file and record locus.
AttributedGraph load_graph(const std::filesystem::path& path, GraphFormat format);

// Writes the canonical JSON form. Floats carry 17 significant digits so a
// round trip reproduces them bit-exactly.
void save_graph_json(const AttributedGraph& g, const std::filesystem::path& path);

std::string graph_to_json(const AttributedGraph& g);

}  // namespace referee::graph
