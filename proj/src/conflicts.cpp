#include "cnet/conflicts.hpp"

#include <algorithm>
#include <deque>
#include <set>

namespace cnet {

namespace {

const FactoredNlp& parent_of(const Subgraph& sub) {
    if (!sub.parent) throw Error("subgraph has no parent graph");
    return *sub.parent;
}

Conflict make_conflict(const FactoredNlp& g, std::vector<int> vars, bool minimal) {
    return {induced_subgraph(g, std::move(vars)), minimal};
}

void require_infeasible(const Subgraph& sub, const SolveContext& ctx, const char* who) {
    if (ctx.feasible(sub)) throw Error(std::string(who) + ": input is feasible");
}

bool connected(const Subgraph& sub) { return connected_components(sub).size() <= 1; }

}  // namespace

ReduceFn make_reduce(ReduceMethod method) {
    if (method == ReduceMethod::DeletionFilter) {
        return [](const Subgraph& s, const SolveContext& c, Precondition p) { return deletion_filter(s, c, p); };
    }
    return [](const Subgraph& s, const SolveContext& c, Precondition p) { return quickxplain(s, c, p); };
}

std::vector<Conflict> brute_force_conflicts(const Subgraph& sub, const SolveContext& ctx) {
    const FactoredNlp& g = parent_of(sub);
    const std::vector<int>& vars = sub.variable_ids;
    const int n = static_cast<int>(vars.size());
    if (n > 14) throw Error("brute_force_conflicts: " + std::to_string(n) + " variables exceeds the limit of 14");

    std::vector<Conflict> found;
    std::vector<int> idx, chosen;
    for (int size = 1; size <= n; ++size) {
        idx.resize(static_cast<std::size_t>(size));
        for (int k = 0; k < size; ++k) idx[static_cast<std::size_t>(k)] = k;
        while (true) {
            chosen.clear();
            for (int k : idx) chosen.push_back(vars[static_cast<std::size_t>(k)]);
            const bool covered = std::any_of(found.begin(), found.end(),
                                             [&](const Conflict& c) { return is_subset(c.variables(), chosen); });
            if (!covered) {
                Subgraph cand = induced_subgraph(g, chosen);
                // A disconnected infeasible set contains a smaller infeasible piece.
                if (connected(cand) && !ctx.feasible(cand)) found.push_back({std::move(cand), true});
            }
            int k = size - 1;
            while (k >= 0 && idx[static_cast<std::size_t>(k)] == n - size + k) --k;
            if (k < 0) break;
            ++idx[static_cast<std::size_t>(k)];
            for (int j = k + 1; j < size; ++j) idx[static_cast<std::size_t>(j)] = idx[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    return found;
}

Conflict deletion_filter(const Subgraph& sub, const SolveContext& ctx, Precondition pre) {
    const FactoredNlp& g = parent_of(sub);
    if (pre == Precondition::Verify) require_infeasible(sub, ctx, "deletion_filter");
    std::vector<int> current = sub.variable_ids;
    for (int v : sub.variable_ids) {
        std::vector<int> candidate;
        candidate.reserve(current.size());
        for (int u : current) {
            if (u != v) candidate.push_back(u);
        }
        if (!ctx.feasible(g, candidate)) current = std::move(candidate);
    }
    return make_conflict(g, std::move(current), true);
}

namespace {

struct QuickXplain {
    const FactoredNlp& g;
    const SolveContext& ctx;

    std::vector<int> run(const std::vector<int>& background, bool delta_nonempty, std::span<const int> candidates) {
        if (delta_nonempty && !ctx.feasible(g, background)) return {};
        if (candidates.size() == 1) return {candidates.begin(), candidates.end()};
        const std::size_t half = candidates.size() / 2;
        std::span<const int> c1 = candidates.first(half);
        std::span<const int> c2 = candidates.subspan(half);
        std::vector<int> d2 = run(set_union(background, c1), !c1.empty(), c2);
        std::vector<int> d1 = run(set_union(background, d2), !d2.empty(), c1);
        return set_union(d1, d2);
    }
};

}  // namespace

Conflict quickxplain(const Subgraph& sub, const SolveContext& ctx, Precondition pre) {
    const FactoredNlp& g = parent_of(sub);
    if (pre == Precondition::Verify) require_infeasible(sub, ctx, "quickxplain");
    if (sub.variable_ids.empty()) throw Error("quickxplain: empty input");
    QuickXplain qx{g, ctx};
    return make_conflict(g, qx.run({}, false, sub.variable_ids), true);
}

bool check_minimal(const Subgraph& sub, const SolveContext& ctx) {
    const FactoredNlp& g = parent_of(sub);
    if (ctx.feasible(sub)) return false;
    for (int v : sub.variable_ids) {
        std::vector<int> rest;
        for (int u : sub.variable_ids) {
            if (u != v) rest.push_back(u);
        }
        if (!ctx.feasible(g, rest)) return false;
    }
    return true;
}

std::optional<Conflict> expert_prefix(const FactoredNlp& graph, const SolveContext& ctx, const ReduceFn& reduce) {
    std::set<int> times;
    for (const auto& v : graph.variables()) times.insert(v.time_index);
    for (int t : times) {
        std::vector<int> prefix;
        for (const auto& v : graph.variables()) {
            if (v.time_index <= t) prefix.push_back(v.id);
        }
        Subgraph sub = induced_subgraph(graph, std::move(prefix));
        if (!ctx.feasible(sub)) return reduce(sub, ctx, Precondition::Assume);
    }
    return std::nullopt;
}

Conflict expert_reduce(const Subgraph& sub, const SolveContext& ctx, Precondition pre, const ReduceFn& inner) {
    const FactoredNlp& g = parent_of(sub);
    std::set<int> times;
    for (int v : sub.variable_ids) times.insert(g.variable(v).time_index);
    for (int t : times) {
        std::vector<int> prefix;
        for (int v : sub.variable_ids) {
            if (g.variable(v).time_index <= t) prefix.push_back(v);
        }
        if (prefix.size() == sub.variable_ids.size()) {
            if (pre == Precondition::Verify) require_infeasible(sub, ctx, "expert_reduce");
            return inner(sub, ctx, Precondition::Assume);
        }
        Subgraph head = induced_subgraph(g, std::move(prefix));
        if (!ctx.feasible(head)) return inner(head, ctx, Precondition::Assume);
    }
    throw Error("expert_reduce: empty input");
}

std::vector<int> labels_from_conflicts(int num_variables, const std::vector<std::vector<int>>& conflicts) {
    std::vector<int> labels(static_cast<std::size_t>(num_variables), 1);
    for (const auto& c : conflicts) {
        for (int v : c) {
            if (v < 0 || v >= num_variables) throw Error("conflict names unknown variable " + std::to_string(v));
            labels[static_cast<std::size_t>(v)] = 0;
        }
    }
    return labels;
}

LabeledInstance label_variables(const FactoredNlp& graph, const SolveContext& ctx, const ReduceFn& reduce,
                                const LabelConfig& cfg) {
    LabeledInstance out;
    out.graph = graph;
    std::vector<int> all(static_cast<std::size_t>(graph.num_variables()));
    for (int v = 0; v < graph.num_variables(); ++v) all[static_cast<std::size_t>(v)] = v;

    std::deque<std::vector<int>> queue{{}};
    std::set<std::vector<int>> seen{{}};
    std::vector<std::vector<int>> feasible_exclusions;
    int nodes = 0;
    while (!queue.empty() && static_cast<int>(out.conflicts.size()) < cfg.max_conflicts && nodes < cfg.max_nodes) {
        std::vector<int> excluded = std::move(queue.front());
        queue.pop_front();
        ++nodes;
        // Removing more variables from an already feasible remainder stays feasible.
        if (std::any_of(feasible_exclusions.begin(), feasible_exclusions.end(),
                        [&](const std::vector<int>& e) { return is_subset(e, excluded); })) {
            continue;
        }
        const std::vector<int>* conflict = nullptr;
        for (const auto& c : out.conflicts) {
            if (set_difference(c, excluded).size() == c.size()) {
                conflict = &c;
                break;
            }
        }
        if (!conflict) {
            Subgraph rest = induced_subgraph(graph, set_difference(all, excluded));
            if (ctx.feasible(rest)) {
                feasible_exclusions.push_back(excluded);
                continue;
            }
            out.conflicts.push_back(reduce(rest, ctx, Precondition::Assume).variables());
            conflict = &out.conflicts.back();
        }
        for (int v : *conflict) {
            std::vector<int> child = set_union(excluded, std::vector<int>{v});
            if (seen.insert(child).second) queue.push_back(std::move(child));
        }
    }
    out.labels = labels_from_conflicts(graph.num_variables(), out.conflicts);
    return out;
}

std::vector<Conflict> gnn_extract(const FactoredNlp& graph, const std::vector<double>& scores, const SolveContext& ctx,
                                  const ReduceFn& reduce, const ExtractConfig& cfg) {
    if (static_cast<int>(scores.size()) != graph.num_variables()) {
        throw Error("gnn_extract: " + std::to_string(scores.size()) + " scores for " +
                    std::to_string(graph.num_variables()) + " variables");
    }
    if (!(cfg.delta0 > 0.0) || !(cfg.delta_rate > 1.0)) throw Error("gnn_extract: need delta0 > 0 and delta_rate > 1");

    std::vector<Conflict> found;
    std::set<std::vector<int>> tried;
    // Returns true when extraction should stop.
    auto process = [&](const std::vector<int>& vars) {
        for (Subgraph& comp : connected_components(induced_subgraph(graph, vars))) {
            if (comp.constraint_ids.empty()) continue;  // trivially feasible
            if (!tried.insert(comp.variable_ids).second) continue;
            if (cfg.find_all && std::any_of(found.begin(), found.end(), [&](const Conflict& c) {
                    return is_subset(c.variables(), comp.variable_ids);
                })) {
                continue;
            }
            if (!ctx.feasible(comp)) {
                found.push_back(reduce(comp, ctx, Precondition::Assume));
                if (!cfg.find_all) return true;
            }
        }
        return false;
    };

    // Once every variable is a candidate, the whole graph is the last candidate.
    auto process_whole = [&]() {
        Subgraph full = full_subgraph(graph);
        if (full.constraint_ids.empty() || tried.count(full.variable_ids)) return;
        if (cfg.find_all) {
            process(full.variable_ids);
            return;
        }
        if (!ctx.feasible(full)) found.push_back(reduce(full, ctx, Precondition::Assume));
    };

    const std::size_t n = scores.size();
    for (double delta = cfg.delta0; delta <= cfg.delta_cap; delta *= cfg.delta_rate) {
        std::vector<int> vars;
        for (std::size_t i = 0; i < n; ++i) {
            if (scores[i] < delta) vars.push_back(static_cast<int>(i));
        }
        if (vars.size() == n) break;
        if (process(vars)) return found;
    }
    process_whole();
    return found;
}

}  // namespace cnet
