#include "cnet/evaluation.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <functional>

#include <json.hpp>

namespace cnet {

std::vector<Subgraph> predicted_subgraphs(const FactoredNlp& graph, const std::vector<double>& scores, double delta) {
    if (static_cast<int>(scores.size()) != graph.num_variables()) throw Error("score/variable count mismatch");
    std::vector<int> low;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (scores[i] < delta) low.push_back(static_cast<int>(i));
    }
    if (low.empty()) return {};
    return connected_components(induced_subgraph(graph, std::move(low)));
}

void accumulate_subgraphs(SubgraphRatios& into, const LabeledInstance& inst, const std::vector<double>& scores,
                          const SolveContext& ctx, double delta) {
    const auto comps = predicted_subgraphs(inst.graph, scores, delta);
    into.predicted += static_cast<long>(comps.size());
    for (const auto& c : comps) {
        if (ctx.feasible(c)) ++into.false_infeasible;
    }
    for (const auto& conflict : inst.conflicts) {
        ++into.total;
        bool found = false, exact = false;
        for (const auto& c : comps) {
            if (is_subset(conflict, c.variable_ids)) {
                found = true;
                exact = exact || c.variable_ids == conflict;
            }
        }
        into.found += found;
        into.exact += exact;
    }
}

EvalReport evaluate_scores(const std::vector<LabeledInstance>& data, const std::vector<std::vector<double>>& scores,
                           const SolverConfig& solver_cfg, double delta) {
    if (scores.size() != data.size()) throw Error("evaluate: one score vector per instance required");
    Solver solver(solver_cfg);
    EvalReport r;
    for (std::size_t i = 0; i < data.size(); ++i) {
        ComponentCache cache;
        const SolveContext ctx{&solver, &cache};
        accumulate(r.accuracy, scores[i], data[i].labels, delta);
        accumulate_subgraphs(r.ratios, data[i], scores[i], ctx, delta);
        ++r.instances;
    }
    return r;
}

EvalReport evaluate(const GnnModel& model, const std::vector<LabeledInstance>& data, const SolverConfig& solver,
                    double delta) {
    std::vector<std::vector<double>> scores;
    scores.reserve(data.size());
    for (const auto& inst : data) scores.push_back(forward(model, inst.graph));
    return evaluate_scores(data, scores, solver, delta);
}

std::string eval_json(const EvalReport& r, const std::string& config_hash) {
    nlohmann::json j = {
        {"config_hash", config_hash},
        {"instances", r.instances},
        {"accuracy_feasible", r.accuracy.feasible},
        {"accuracy_infeasible", r.accuracy.infeasible},
        {"n_feasible", r.accuracy.n_feasible},
        {"n_infeasible", r.accuracy.n_infeasible},
        {"conflicts_total", r.ratios.total},
        {"conflicts_found", r.ratios.found},
        {"conflicts_exact", r.ratios.exact},
        {"predicted_components", r.ratios.predicted},
        {"predicted_feasible", r.ratios.false_infeasible},
        {"found_over_total", r.ratios.found_over_total()},
        {"minimal_over_found", r.ratios.minimal_over_found()},
        {"false_infeasible_fraction", r.ratios.false_infeasible_fraction()},
    };
    return j.dump(2) + "\n";
}

std::vector<double> oracle_scores(const LabeledInstance& inst) {
    std::vector<double> s(inst.labels.size());
    for (std::size_t i = 0; i < s.size(); ++i) s[i] = inst.labels[i] ? 1.0 : 0.0;
    return s;
}

bool conflicts_disconnected(const LabeledInstance& inst) {
    if (inst.conflicts.empty()) return false;
    const auto comps = predicted_subgraphs(inst.graph, oracle_scores(inst), 0.5);
    for (const auto& c : comps) {
        if (std::find(inst.conflicts.begin(), inst.conflicts.end(), c.variable_ids) == inst.conflicts.end()) return false;
    }
    return true;
}

const BenchRow& BenchReport::row(const std::string& method) const {
    for (const auto& r : rows) {
        if (r.method == method) return r;
    }
    throw Error("bench: no row named " + method);
}

BenchReport bench(const GnnModel& model, const std::vector<LabeledInstance>& data, const SolverConfig& solver_cfg) {
    Solver solver(solver_cfg);
    const SolveContext ctx{&solver, nullptr};
    const ReduceFn g1 = make_reduce(ReduceMethod::DeletionFilter);
    const ReduceFn g2 = make_reduce(ReduceMethod::QuickXplain);
    const ReduceFn expert = [g2](const Subgraph& s, const SolveContext& c, Precondition p) {
        return expert_reduce(s, c, p, g2);
    };

    using Method = std::function<bool(const LabeledInstance&)>;
    auto reduce_full = [&](const ReduceFn& reduce) -> Method {
        return [&, reduce](const LabeledInstance& inst) {
            const Subgraph full = full_subgraph(inst.graph);
            if (ctx.feasible(full)) return false;
            reduce(full, ctx, Precondition::Assume);
            return true;
        };
    };
    auto guided = [&](const ReduceFn& reduce) -> Method {
        return [&, reduce](const LabeledInstance& inst) {
            return !gnn_extract(inst.graph, forward(model, inst.graph), ctx, reduce).empty();
        };
    };
    const std::vector<std::pair<std::string, Method>> methods = {
        {"Oracle",
         [&](const LabeledInstance& inst) {
             const Subgraph sub = induced_subgraph(inst.graph, inst.conflicts.front());
             if (ctx.feasible(sub)) return false;
             g1(sub, ctx, Precondition::Assume);
             return true;
         }},
        {"General-1", reduce_full(g1)},
        {"General-2", reduce_full(g2)},
        {"Expert", [&](const LabeledInstance& inst) { return expert_prefix(inst.graph, ctx, g2).has_value(); }},
        {"GNN+e", guided(expert)},
        {"GNN+g1", guided(g1)},
        {"GNN+g2", guided(g2)},
        {"GNN-oracle-scores",
         [&](const LabeledInstance& inst) { return !gnn_extract(inst.graph, oracle_scores(inst), ctx, g1).empty(); }},
    };

    BenchReport report;
    for (const auto& [name, fn] : methods) report.rows.push_back({name});
    const std::int64_t start = solver.count_solves();
    for (const auto& inst : data) {
        if (inst.conflicts.empty()) {
            ++report.skipped_feasible;
            continue;
        }
        const bool disconnected = conflicts_disconnected(inst);
        report.disconnected_instances += disconnected;
        for (std::size_t m = 0; m < methods.size(); ++m) {
            BenchRow& row = report.rows[m];
            const std::int64_t before = solver.count_solves();
            const auto t0 = std::chrono::steady_clock::now();
            bool ok = false;
            try {
                ok = methods[m].second(inst);
            } catch (const Error&) {
                ok = false;
            }
            const auto t1 = std::chrono::steady_clock::now();
            const long used = static_cast<long>(solver.count_solves() - before);
            ++row.instances;
            row.failures += !ok;
            row.solves += used;
            row.seconds += std::chrono::duration<double>(t1 - t0).count();
            if (disconnected && row.method == "Oracle") report.oracle_solves_disconnected += used;
            if (disconnected && row.method == "GNN-oracle-scores") report.oracle_scores_solves_disconnected += used;
        }
    }
    long sum = 0;
    for (const auto& r : report.rows) sum += r.solves;
    if (sum != solver.count_solves() - start) throw Error("bench: solve accounting mismatch");

    const BenchRow& base = report.row("GNN+g1");
    const double base_solves = static_cast<double>(base.solves), base_seconds = base.seconds;
    for (auto& r : report.rows) {
        r.norm_solves = base_solves > 0 ? static_cast<double>(r.solves) / base_solves : 0.0;
        r.norm_seconds = base_seconds > 0 ? r.seconds / base_seconds : 0.0;
    }
    return report;
}

std::string bench_csv(const BenchReport& report) {
    std::string out = "method,instances,failures,solves,normalized_solves\n";
    char buf[200];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%d,%d,%ld,%.4f\n", r.method.c_str(), r.instances, r.failures, r.solves,
                      r.norm_solves);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "# disconnected_instances=%d oracle=%ld oracle_scores=%ld skipped_feasible=%d\n",
                  report.disconnected_instances, report.oracle_solves_disconnected,
                  report.oracle_scores_solves_disconnected, report.skipped_feasible);
    out += buf;
    return out;
}

std::string bench_timing_csv(const BenchReport& report) {
    std::string out = "method,seconds,normalized_seconds\n";
    char buf[160];
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%s,%.4f,%.4f\n", r.method.c_str(), r.seconds, r.norm_seconds);
        out += buf;
    }
    return out;
}

std::string bench_table(const BenchReport& report) {
    std::string out;
    char buf[200];
    std::snprintf(buf, sizeof buf, "%-18s %6s %8s %9s %10s  %s\n", "method", "inst", "solves", "seconds", "normalized",
                  "failures");
    out += buf;
    for (const auto& r : report.rows) {
        std::snprintf(buf, sizeof buf, "%-18s %6d %8ld %9.3f (%.2f, %.2f)  %d\n", r.method.c_str(), r.instances,
                      r.solves, r.seconds, r.norm_solves, r.norm_seconds, r.failures);
        out += buf;
    }
    return out;
}

}  // namespace cnet
