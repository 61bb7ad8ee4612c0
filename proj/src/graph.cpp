#include "cnet/graph.hpp"

#include <algorithm>
#include <array>
#include <numeric>

#include "cnet/disjoint_sets.hpp"
#include "cnet/graph_json.hpp"
#include "cnet/kinds.hpp"

namespace cnet {

namespace {

constexpr std::array<std::string_view, 4> kClassNames = {"robot", "rel", "abs", "generic"};
constexpr std::array<std::string_view, kNumConstraintKinds> kKindNames = {
    "Ref", "Equal", "PoseDiff", "Kin", "Grasp", "Pos", "Collision", "LinearIneq", "Reach"};

}  // namespace

std::string_view to_string(VarClass c) { return kClassNames.at(static_cast<std::size_t>(c)); }
std::string_view to_string(ConstraintKind k) { return kKindNames.at(static_cast<std::size_t>(k)); }

VarClass var_class_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kClassNames.size(); ++i) {
        if (kClassNames[i] == s) return static_cast<VarClass>(i);
    }
    throw Error("unknown variable class '" + std::string(s) + "'");
}

ConstraintKind kind_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kKindNames.size(); ++i) {
        if (kKindNames[i] == s) return static_cast<ConstraintKind>(i);
    }
    throw Error("unknown constraint kind '" + std::string(s) + "'");
}

// Planar classes: robot = base (x, y, heading); rel = start (x, y), has_ref,
// has_grasp, pos_on_table, pos_on_object, placement box (4); abs = half extents.
int geometry_arity(VarClass c) {
    switch (c) {
        case VarClass::RobotConfig: return 3;
        case VarClass::ObjectRelPose: return 10;
        case VarClass::ObjectAbsPose: return 2;
        case VarClass::Generic: return -1;
    }
    return -1;
}

int class_dim(VarClass c) { return c == VarClass::Generic ? -1 : 2; }

int FactoredNlp::add_variable(int dim, VarClass class_tag, int time_index, std::vector<double> geometry) {
    if (dim < 1) throw Error("variable dimension must be >= 1");
    if (time_index < 0) throw Error("time index must be nonnegative");
    if (static_cast<int>(class_tag) < 0 || static_cast<int>(class_tag) > 3) throw Error("unknown variable class");
    const int want_dim = class_dim(class_tag);
    if (want_dim > 0 && dim != want_dim) {
        throw Error("class '" + std::string(to_string(class_tag)) + "' requires dimension " + std::to_string(want_dim));
    }
    const int arity = geometry_arity(class_tag);
    if (arity >= 0 && static_cast<int>(geometry.size()) != arity) {
        throw Error("class '" + std::string(to_string(class_tag)) + "' declares geometry arity " +
                    std::to_string(arity) + ", got " + std::to_string(geometry.size()));
    }
    const int id = num_variables();
    variables_.push_back(VariableNode{id, dim, class_tag, time_index, std::move(geometry)});
    incidence_.emplace_back();
    return id;
}

int FactoredNlp::add_constraint(ConstraintKind kind, std::vector<int> scope, std::vector<double> params) {
    if (static_cast<int>(kind) < 0 || static_cast<int>(kind) >= kNumConstraintKinds) {
        throw Error("unknown constraint kind");
    }
    std::vector<int> dims;
    for (int v : scope) {
        if (v < 0 || v >= num_variables()) throw Error("constraint scope references unknown variable " + std::to_string(v));
        dims.push_back(variables_[static_cast<std::size_t>(v)].dim);
    }
    std::vector<int> sorted = scope;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
        throw Error("constraint scope contains duplicate variables");
    }
    KindShape shape = constraint_shape(kind, dims, params);
    const int id = num_constraints();
    for (int v : scope) incidence_[static_cast<std::size_t>(v)].push_back(id);
    constraints_.push_back(ConstraintNode{id, kind, std::move(scope), std::move(params), shape.residual_dim, shape.is_equality});
    return id;
}

std::span<const int> FactoredNlp::neighbors(int variable_id) const {
    return incidence_.at(static_cast<std::size_t>(variable_id));
}

bool is_subset(std::span<const int> small, std::span<const int> big) {
    return std::includes(big.begin(), big.end(), small.begin(), small.end());
}

std::vector<int> set_difference(std::span<const int> a, std::span<const int> b) {
    std::vector<int> out;
    std::set_difference(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

std::vector<int> set_union(std::span<const int> a, std::span<const int> b) {
    std::vector<int> out;
    std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
    return out;
}

Subgraph induced_subgraph(const FactoredNlp& graph, std::vector<int> variable_ids) {
    std::sort(variable_ids.begin(), variable_ids.end());
    variable_ids.erase(std::unique(variable_ids.begin(), variable_ids.end()), variable_ids.end());
    std::vector<char> member(static_cast<std::size_t>(graph.num_variables()), 0);
    for (int v : variable_ids) {
        if (v < 0 || v >= graph.num_variables()) throw Error("unknown variable id " + std::to_string(v));
        member[static_cast<std::size_t>(v)] = 1;
    }
    Subgraph sub{&graph, std::move(variable_ids), {}};
    // Each constraint is visited from its smallest-id scope member only.
    for (int v : sub.variable_ids) {
        for (int c : graph.neighbors(v)) {
            const auto& scope = graph.constraint(c).scope;
            if (*std::min_element(scope.begin(), scope.end()) != v) continue;
            if (std::all_of(scope.begin(), scope.end(), [&](int s) { return member[static_cast<std::size_t>(s)] != 0; })) {
                sub.constraint_ids.push_back(c);
            }
        }
    }
    std::sort(sub.constraint_ids.begin(), sub.constraint_ids.end());
    return sub;
}

Subgraph full_subgraph(const FactoredNlp& graph) {
    Subgraph sub{&graph, {}, {}};
    sub.variable_ids.resize(static_cast<std::size_t>(graph.num_variables()));
    std::iota(sub.variable_ids.begin(), sub.variable_ids.end(), 0);
    sub.constraint_ids.resize(static_cast<std::size_t>(graph.num_constraints()));
    std::iota(sub.constraint_ids.begin(), sub.constraint_ids.end(), 0);
    return sub;
}

std::vector<Subgraph> connected_components(const Subgraph& sub) {
    std::vector<Subgraph> out;
    if (sub.variable_ids.empty()) return out;
    const FactoredNlp& g = *sub.parent;
    const auto& vars = sub.variable_ids;
    auto local = [&](int v) {
        return static_cast<int>(std::lower_bound(vars.begin(), vars.end(), v) - vars.begin());
    };
    DisjointSets sets(vars.size());
    for (int c : sub.constraint_ids) {
        const auto& scope = g.constraint(c).scope;
        const int first = local(scope.front());
        for (std::size_t k = 1; k < scope.size(); ++k) sets.unite(first, local(scope[k]));
    }
    // Components are numbered by first appearance in ascending variable order.
    std::vector<int> slot(vars.size(), -1);
    for (std::size_t i = 0; i < vars.size(); ++i) {
        const auto root = sets.find(static_cast<int>(i));
        if (slot[static_cast<std::size_t>(root)] < 0) {
            slot[static_cast<std::size_t>(root)] = static_cast<int>(out.size());
            out.push_back(Subgraph{sub.parent, {}, {}});
        }
        out[static_cast<std::size_t>(slot[static_cast<std::size_t>(root)])].variable_ids.push_back(vars[i]);
    }
    for (int c : sub.constraint_ids) {
        const auto root = sets.find(local(g.constraint(c).scope.front()));
        out[static_cast<std::size_t>(slot[static_cast<std::size_t>(root)])].constraint_ids.push_back(c);
    }
    return out;
}

bool is_supergraph(const Subgraph& a, const Subgraph& b) {
    if (a.parent != b.parent && !a.empty() && !b.empty()) throw Error("is_supergraph: subgraphs of different graphs");
    return is_subset(b.variable_ids, a.variable_ids);
}

nlohmann::json graph_to_json(const FactoredNlp& graph) {
    nlohmann::json vars = nlohmann::json::array();
    for (const auto& v : graph.variables()) {
        vars.push_back({{"id", v.id}, {"dim", v.dim}, {"class", to_string(v.class_tag)}, {"time", v.time_index},
                        {"geometry", v.geometry}});
    }
    nlohmann::json cons = nlohmann::json::array();
    for (const auto& c : graph.constraints()) {
        cons.push_back({{"id", c.id}, {"kind", to_string(c.kind)}, {"scope", c.scope}, {"params", c.params},
                        {"equality", c.is_equality}});
    }
    return {{"variables", std::move(vars)}, {"constraints", std::move(cons)}};
}

FactoredNlp graph_from_json(const nlohmann::json& doc, const std::string& where) {
    FactoredNlp g;
    std::string path = where;
    try {
        if (!doc.is_object()) throw Error("expected an object");
        path = where + ".variables";
        const auto& vars = doc.at("variables");
        if (!vars.is_array()) throw Error("expected an array");
        for (std::size_t i = 0; i < vars.size(); ++i) {
            path = where + ".variables[" + std::to_string(i) + "]";
            const auto& v = vars[i];
            if (v.at("id").get<int>() != static_cast<int>(i)) throw Error("ids must be contiguous from 0");
            g.add_variable(v.at("dim").get<int>(), var_class_from_string(v.at("class").get<std::string>()),
                           v.at("time").get<int>(), v.at("geometry").get<std::vector<double>>());
        }
        path = where + ".constraints";
        const auto& cons = doc.at("constraints");
        if (!cons.is_array()) throw Error("expected an array");
        for (std::size_t i = 0; i < cons.size(); ++i) {
            path = where + ".constraints[" + std::to_string(i) + "]";
            const auto& c = cons[i];
            if (c.at("id").get<int>() != static_cast<int>(i)) throw Error("ids must be contiguous from 0");
            int id = g.add_constraint(kind_from_string(c.at("kind").get<std::string>()),
                                      c.at("scope").get<std::vector<int>>(), c.at("params").get<std::vector<double>>());
            if (c.contains("equality") && c.at("equality").get<bool>() != g.constraint(id).is_equality) {
                throw Error("equality flag disagrees with kind");
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(path + ": " + e.what(), -1);
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(path + ": " + e.what(), -1);
    }
    return g;
}

std::string serialize(const FactoredNlp& graph) { return graph_to_json(graph).dump(); }

FactoredNlp deserialize(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text.begin(), text.end());
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("malformed graph document at byte ") + std::to_string(e.byte) + ": " + e.what(),
                         static_cast<std::int64_t>(e.byte));
    }
    return graph_from_json(doc);
}

}  // namespace cnet
