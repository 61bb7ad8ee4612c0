#pragma once

#include <string>
#include <vector>

#include "cnet/conflicts.hpp"
#include "cnet/gnn.hpp"

namespace cnet {

/// Connected components of G[{x : score_x < delta}].
std::vector<Subgraph> predicted_subgraphs(const FactoredNlp& graph, const std::vector<double>& scores,
                                          double delta = 0.5);

/// Counts behind the subgraph-prediction ratios.
struct SubgraphRatios {
    long total = 0;             // stored conflicts
    long found = 0;             // stored conflicts covered by some predicted component
    long exact = 0;             // stored conflicts equal to some predicted component
    long predicted = 0;         // predicted components
    long false_infeasible = 0;  // predicted components that solve feasible

    double found_over_total() const { return total ? static_cast<double>(found) / static_cast<double>(total) : 0.0; }
    double minimal_over_found() const { return found ? static_cast<double>(exact) / static_cast<double>(found) : 0.0; }
    double false_infeasible_fraction() const {
        return predicted ? static_cast<double>(false_infeasible) / static_cast<double>(predicted) : 0.0;
    }
};

void accumulate_subgraphs(SubgraphRatios& into, const LabeledInstance& inst, const std::vector<double>& scores,
                          const SolveContext& ctx, double delta = 0.5);

struct EvalReport {
    int instances = 0;
    AccuracyPair accuracy;
    SubgraphRatios ratios;
};

EvalReport evaluate(const GnnModel& model, const std::vector<LabeledInstance>& data, const SolverConfig& solver,
                    double delta = 0.5);
/// Same protocol with externally supplied scores (one vector per instance).
EvalReport evaluate_scores(const std::vector<LabeledInstance>& data, const std::vector<std::vector<double>>& scores,
                           const SolverConfig& solver, double delta = 0.5);

std::string eval_json(const EvalReport& report, const std::string& config_hash);

/// Scores 0 on stored-conflict variables, 1 elsewhere.
std::vector<double> oracle_scores(const LabeledInstance& inst);

/// Each component of the zero-labeled induced subgraph is exactly one stored conflict.
bool conflicts_disconnected(const LabeledInstance& inst);

struct BenchRow {
    std::string method;
    int instances = 0;
    int failures = 0;  // method threw or returned no conflict
    long solves = 0;
    double seconds = 0.0;
    double norm_solves = 0.0;  // relative to the GNN+g1 row
    double norm_seconds = 0.0;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    /// Oracle and GNN-with-oracle-scores restricted to instances whose
    /// conflicts are pairwise disconnected.
    int disconnected_instances = 0;
    long oracle_solves_disconnected = 0;
    long oracle_scores_solves_disconnected = 0;
    int skipped_feasible = 0;

    const BenchRow& row(const std::string& method) const;
};

/// Methods: Oracle, General-1, General-2, Expert, GNN+e, GNN+g1, GNN+g2,
/// GNN-oracle-scores. Instances without stored conflicts are skipped.
BenchReport bench(const GnnModel& model, const std::vector<LabeledInstance>& data, const SolverConfig& solver);

/// Solve counts only: a deterministic function of inputs.
std::string bench_csv(const BenchReport& report);
std::string bench_timing_csv(const BenchReport& report);
std::string bench_table(const BenchReport& report);

}  // namespace cnet
