#pragma once

#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace cnet {

/// Base error type for the library; every module throws subclasses of this.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by deserializers; `position()` is the byte offset (or -1 when the
/// problem is structural rather than positional).
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::int64_t position)
        : Error(what), position_(position) {}
    std::int64_t position() const { return position_; }

private:
    std::int64_t position_;
};

/// Semantic class of a variable. The numeric value is the one-hot slot used
/// by the feature encoder, so the order is part of the model file contract.
enum class VarClass : int {
    RobotConfig = 0,
    ObjectRelPose = 1,
    ObjectAbsPose = 2,
    Generic = 3,
};

inline constexpr int kVarClassSlots = 6;

enum class ConstraintKind : int {
    Ref = 0,
    Equal,
    PoseDiff,
    Kin,
    Grasp,
    Pos,
    Collision,
    LinearIneq,
    Reach,
};

inline constexpr int kNumConstraintKinds = 9;

std::string_view to_string(VarClass c);
std::string_view to_string(ConstraintKind k);
VarClass var_class_from_string(std::string_view s);
ConstraintKind kind_from_string(std::string_view s);

/// Geometry length declared by a class, or -1 when the class accepts any length.
int geometry_arity(VarClass c);
/// Dimension declared by a class, or -1 when any dimension >= 1 is allowed.
int class_dim(VarClass c);

struct VariableNode {
    int id = 0;
    int dim = 1;
    VarClass class_tag = VarClass::Generic;
    int time_index = 0;
    std::vector<double> geometry;

    bool operator==(const VariableNode&) const = default;
};

struct ConstraintNode {
    int id = 0;
    ConstraintKind kind = ConstraintKind::Ref;
    std::vector<int> scope;
    std::vector<double> params;
    int residual_dim = 1;
    bool is_equality = true;

    bool operator==(const ConstraintNode&) const = default;
};

/// Bipartite graph of typed continuous variables and typed constraints.
/// Ids are dense and assigned in insertion order.
class FactoredNlp {
public:
    int add_variable(int dim, VarClass class_tag, int time_index, std::vector<double> geometry);
    int add_constraint(ConstraintKind kind, std::vector<int> scope, std::vector<double> params);

    const std::vector<VariableNode>& variables() const { return variables_; }
    const std::vector<ConstraintNode>& constraints() const { return constraints_; }
    const VariableNode& variable(int id) const { return variables_.at(static_cast<std::size_t>(id)); }
    const ConstraintNode& constraint(int id) const { return constraints_.at(static_cast<std::size_t>(id)); }

    int num_variables() const { return static_cast<int>(variables_.size()); }
    int num_constraints() const { return static_cast<int>(constraints_.size()); }

    /// N(i): constraint ids touching variable i, ascending.
    std::span<const int> neighbors(int variable_id) const;

    bool operator==(const FactoredNlp& other) const {
        return variables_ == other.variables_ && constraints_ == other.constraints_;
    }

private:
    std::vector<VariableNode> variables_;
    std::vector<ConstraintNode> constraints_;
    std::vector<std::vector<int>> incidence_;
};

/// Variable-induced subgraph G[X']. Both id lists are kept sorted ascending.
struct Subgraph {
    const FactoredNlp* parent = nullptr;
    std::vector<int> variable_ids;
    std::vector<int> constraint_ids;

    bool empty() const { return variable_ids.empty(); }
    std::size_t size() const { return variable_ids.size(); }
    bool operator==(const Subgraph& o) const {
        return parent == o.parent && variable_ids == o.variable_ids && constraint_ids == o.constraint_ids;
    }
};

Subgraph induced_subgraph(const FactoredNlp& graph, std::vector<int> variable_ids);
Subgraph full_subgraph(const FactoredNlp& graph);

/// Maximal connected pieces of the bipartite graph restricted to `sub`,
/// ordered by smallest variable id.
std::vector<Subgraph> connected_components(const Subgraph& sub);

/// True iff b's variables are a subset of a's variables.
bool is_supergraph(const Subgraph& a, const Subgraph& b);

/// Sorted-set helpers over variable id lists.
bool is_subset(std::span<const int> small, std::span<const int> big);
std::vector<int> set_difference(std::span<const int> a, std::span<const int> b);
std::vector<int> set_union(std::span<const int> a, std::span<const int> b);

std::string serialize(const FactoredNlp& graph);
FactoredNlp deserialize(std::string_view text);

}  // namespace cnet
