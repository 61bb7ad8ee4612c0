#pragma once

#include <string>

#include <json.hpp>

#include "cnet/graph.hpp"

namespace cnet {

nlohmann::json graph_to_json(const FactoredNlp& graph);

/// `where` prefixes structural diagnostics (e.g. "line 12: graph").
FactoredNlp graph_from_json(const nlohmann::json& doc, const std::string& where = "graph");

}  // namespace cnet
