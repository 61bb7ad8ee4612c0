#pragma once

#include <atomic>
#include <cstdint>
#include <map>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>

#include "cnet/graph.hpp"

namespace cnet {

struct SolverConfig {
    double feas_tol = 1e-4;
    int max_outer_iters = 20;
    int max_inner_iters = 40;
    int restarts = 10;
    double penalty_init = 1.0;
    double penalty_growth = 10.0;
    double init_noise = 0.1;
    double noise_growth = 1.5;  // restart k perturbs with init_noise * noise_growth^k
    std::uint64_t rng_seed = 0;

    void validate() const;
};

/// Values for the variables of a solved (sub)graph, keyed by variable id.
struct Assignment {
    std::map<int, Eigen::VectorXd> values;
};

struct SolveOutcome {
    bool feasible = false;
    Assignment assignment;  // populated only when feasible
    double max_violation = 0.0;
    int restarts_used = 0;
    int iterations = 0;
};

/// Non-finite residuals or similar numerical breakdown; distinct from a
/// clean infeasible verdict.
class SolverFailure : public Error {
public:
    using Error::Error;
};

/// Per-component memo of solve results for one graph. Component verdicts depend only on the
/// component's variable set (and the solver config), so caching them is
/// observationally transparent apart from wall time.
class ComponentCache {
public:
    struct Entry {
        bool feasible = false;
        double max_violation = 0.0;
        int restarts_used = 0;
        int iterations = 0;
        std::vector<double> values;  // concatenated in variable order
    };

    const Entry* find(const std::vector<int>& vars) const;
    void insert(const std::vector<int>& vars, Entry entry);
    std::size_t size() const { return map_.size(); }
    void clear() {
        map_.clear();
        owner_ = nullptr;
    }
    /// A cache serves one graph between clears; throws Error otherwise.
    void bind(const FactoredNlp* graph);

private:
    const FactoredNlp* owner_ = nullptr;
    struct Hash {
        std::size_t operator()(const std::vector<int>& v) const;
    };
    std::unordered_map<std::vector<int>, Entry, Hash> map_;
};

/// Largest constraint violation of `assignment` over the constraints of `sub`.
double max_violation(const Subgraph& sub, const Assignment& assignment);

/// Feasibility oracle for Factored-NLPs: multi-start augmented Lagrangian
/// with a Levenberg-Marquardt inner loop. The subgraph is split into
/// connected components, each solved independently; the first infeasible
/// component decides the verdict.
class Solver {
public:
    explicit Solver(SolverConfig config = {});
    Solver(const Solver&) = delete;
    Solver& operator=(const Solver&) = delete;

    SolveOutcome solve(const Subgraph& sub, ComponentCache* cache = nullptr) const;
    SolveOutcome solve(const FactoredNlp& graph, ComponentCache* cache = nullptr) const;

    /// Number of solve() calls since construction or the last reset.
    std::int64_t count_solves() const { return count_.load(); }
    void reset_count() { count_.store(0); }

    const SolverConfig& config() const { return config_; }

private:
    SolverConfig config_;
    mutable std::atomic<std::int64_t> count_{0};
};

}  // namespace cnet
