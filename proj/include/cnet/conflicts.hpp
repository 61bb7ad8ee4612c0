#pragma once

#include <functional>
#include <optional>
#include <vector>

#include "cnet/graph.hpp"
#include "cnet/solver.hpp"

namespace cnet {

/// A variable-induced infeasible subgraph. `minimal` is set only when
/// minimality has been established (by construction or by check_minimal).
struct Conflict {
    Subgraph sub;
    bool minimal = false;

    const std::vector<int>& variables() const { return sub.variable_ids; }
};

/// Feasibility oracle handed to every extractor: a solver plus an optional
/// component memo.
struct SolveContext {
    const Solver* solver = nullptr;
    ComponentCache* cache = nullptr;

    bool feasible(const Subgraph& sub) const { return solver->solve(sub, cache).feasible; }
    bool feasible(const FactoredNlp& g, const std::vector<int>& vars) const {
        return feasible(induced_subgraph(g, vars));
    }
};

/// Whether a reducer re-checks that its input is infeasible (one extra solve)
/// or trusts the caller.
enum class Precondition { Verify, Assume };

using ReduceFn = std::function<Conflict(const Subgraph&, const SolveContext&, Precondition)>;

enum class ReduceMethod { DeletionFilter, QuickXplain };
ReduceFn make_reduce(ReduceMethod method);

/// Every minimal conflict of `sub`, by increasing size. Requires <= 14 variables.
std::vector<Conflict> brute_force_conflicts(const Subgraph& sub, const SolveContext& ctx);

/// Linear scan: drop each variable in ascending id order unless that makes
/// the rest feasible.
Conflict deletion_filter(const Subgraph& sub, const SolveContext& ctx, Precondition pre = Precondition::Verify);

/// Divide-and-conquer reduction over variables.
Conflict quickxplain(const Subgraph& sub, const SolveContext& ctx, Precondition pre = Precondition::Verify);

/// Infeasible, and every single-variable removal is feasible.
bool check_minimal(const Subgraph& sub, const SolveContext& ctx);

/// Scans time prefixes {x : time <= t} for t = 0, 1, ... and reduces the first
/// infeasible one. Empty when the graph is feasible.
std::optional<Conflict> expert_prefix(const FactoredNlp& graph, const SolveContext& ctx, const ReduceFn& reduce);

/// Reduce that first shrinks `sub` to its earliest infeasible time prefix and
/// hands that prefix to `inner`.
Conflict expert_reduce(const Subgraph& sub, const SolveContext& ctx, Precondition pre, const ReduceFn& inner);

struct LabeledInstance {
    FactoredNlp graph;
    std::vector<int> labels;  // 1 feasible, 0 member of a stored conflict
    std::vector<std::vector<int>> conflicts;
};

/// labels[i] = 0 iff variable i appears in a conflict.
std::vector<int> labels_from_conflicts(int num_variables, const std::vector<std::vector<int>>& conflicts);

struct LabelConfig {
    int max_conflicts = 10;
    int max_nodes = 60;  // exclusion sets explored before giving up
};

/// Enumerates up to max_conflicts distinct minimal conflicts by exploring
/// exclusion sets breadth-first (each found conflict spawns one child per
/// member with that member excluded). Approximate beyond the node budget.
LabeledInstance label_variables(const FactoredNlp& graph, const SolveContext& ctx, const ReduceFn& reduce,
                                const LabelConfig& cfg = {});

struct ExtractConfig {
    double delta0 = 0.5;
    double delta_rate = 1.2;
    double delta_cap = 1.5;
    bool find_all = false;
};

/// Score-guided extraction: candidates are the connected components of
/// G[{x : score_x < delta}] for a rising threshold; the first infeasible one is
/// reduced. With find_all the search continues, skipping any candidate that
/// contains a conflict already found. No candidate is solved twice. When the
/// threshold admits every variable, the whole graph is solved as one candidate
/// (component-wise under find_all).
std::vector<Conflict> gnn_extract(const FactoredNlp& graph, const std::vector<double>& scores, const SolveContext& ctx,
                                  const ReduceFn& reduce, const ExtractConfig& cfg = {});

}  // namespace cnet
