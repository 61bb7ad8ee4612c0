#include "cnet/solver.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <limits>
#include <random>

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "cnet/kinds.hpp"

namespace cnet {

void SolverConfig::validate() const {
    if (!(feas_tol > 0.0)) throw Error("solver: feas_tol must be > 0");
    if (!(penalty_growth > 1.0)) throw Error("solver: penalty_growth must be > 1");
    if (!(penalty_init > 0.0)) throw Error("solver: penalty_init must be > 0");
    if (max_outer_iters < 1 || max_inner_iters < 1 || restarts < 1) throw Error("solver: iteration counts must be >= 1");
    if (init_noise < 0.0) throw Error("solver: init_noise must be >= 0");
    if (noise_growth < 1.0) throw Error("solver: noise_growth must be >= 1");
}

std::size_t ComponentCache::Hash::operator()(const std::vector<int>& v) const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (int x : v) {
        h ^= static_cast<std::uint64_t>(x) + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2);
    }
    return static_cast<std::size_t>(h);
}

const ComponentCache::Entry* ComponentCache::find(const std::vector<int>& vars) const {
    auto it = map_.find(vars);
    return it == map_.end() ? nullptr : &it->second;
}

void ComponentCache::insert(const std::vector<int>& vars, Entry entry) { map_.emplace(vars, std::move(entry)); }

void ComponentCache::bind(const FactoredNlp* graph) {
    if (owner_ && owner_ != graph) throw Error("ComponentCache shared between graphs; clear() it first");
    owner_ = graph;
}

namespace {

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr int kDenseLimit = 64;
constexpr double kMaxPenalty = 1e10;

/// One connected component flattened into a vector of unknowns.
struct Problem {
    struct Item {
        const ConstraintNode* con = nullptr;
        std::vector<int> dims;
        std::vector<int> local;  // scope position -> local variable index
        int ncols = 0;
        int row0 = 0;
    };

    const FactoredNlp* graph = nullptr;
    std::vector<int> vars;
    std::vector<int> offset;
    int n = 0;
    int m = 0;
    std::vector<Item> items;

    Problem(const FactoredNlp& g, const std::vector<int>& variable_ids, const std::vector<int>& constraint_ids,
            bool convex_only)
        : graph(&g), vars(variable_ids) {
        for (int v : vars) {
            offset.push_back(n);
            n += g.variable(v).dim;
        }
        for (int c : constraint_ids) {
            const auto& con = g.constraint(c);
            if (convex_only && !is_convex_kind(con.kind)) continue;
            Item it;
            it.con = &con;
            for (int s : con.scope) {
                const int li = static_cast<int>(std::lower_bound(vars.begin(), vars.end(), s) - vars.begin());
                it.local.push_back(li);
                it.dims.push_back(g.variable(s).dim);
                it.ncols += g.variable(s).dim;
            }
            it.row0 = m;
            m += con.residual_dim;
            items.push_back(std::move(it));
        }
    }

    void gather(const Item& it, const std::vector<double>& x, std::vector<double>& xs) const {
        xs.clear();
        for (std::size_t k = 0; k < it.local.size(); ++k) {
            const int off = offset[static_cast<std::size_t>(it.local[k])];
            xs.insert(xs.end(), x.begin() + off, x.begin() + off + it.dims[k]);
        }
    }

    /// Residuals for all rows; Jacobian blocks if `jac` is non-null.
    void eval(const std::vector<double>& x, std::vector<double>& r, std::vector<std::vector<double>>* jac) const {
        r.assign(static_cast<std::size_t>(m), 0.0);
        if (jac) jac->resize(items.size());
        std::vector<double> xs;
        for (std::size_t i = 0; i < items.size(); ++i) {
            const auto& it = items[i];
            gather(it, x, xs);
            std::span<double> rs(r.data() + it.row0, static_cast<std::size_t>(it.con->residual_dim));
            if (jac) {
                auto& J = (*jac)[i];
                J.resize(static_cast<std::size_t>(it.con->residual_dim * it.ncols));
                evaluate(*it.con, it.dims, xs, rs, J);
            } else {
                evaluate(*it.con, it.dims, xs, rs, {});
            }
        }
        for (double v : r) {
            if (!std::isfinite(v)) throw SolverFailure("non-finite constraint residual during solve");
        }
    }

    double max_violation(const std::vector<double>& r) const {
        double worst = 0.0;
        for (const auto& it : items) {
            worst = std::max(worst, violation(*it.con, {r.data() + it.row0, static_cast<std::size_t>(it.con->residual_dim)}));
        }
        return worst;
    }
};

/// Augmented Lagrangian state for a single attempt.
class AugmentedLagrangian {
public:
    AugmentedLagrangian(const Problem& p, const SolverConfig& cfg) : p_(p), cfg_(cfg) {
        multipliers_.assign(static_cast<std::size_t>(p.m), 0.0);
    }

    /// Returns the final max violation; `x` holds the last iterate.
    double run(std::vector<double>& x, int& iterations) {
        double rho = cfg_.penalty_init;
        std::vector<double> r;
        p_.eval(x, r, nullptr);
        double viol = p_.max_violation(r);
        double best = viol;
        int since_best = 0;
        for (int outer = 0; outer < cfg_.max_outer_iters && viol > cfg_.feas_tol; ++outer) {
            minimize(x, rho, iterations);
            p_.eval(x, r, nullptr);
            const double prev = viol;
            viol = p_.max_violation(r);
            if (viol <= cfg_.feas_tol) break;
            for (const auto& it : p_.items) {
                for (int k = 0; k < it.con->residual_dim; ++k) {
                    auto idx = static_cast<std::size_t>(it.row0 + k);
                    double& lam = multipliers_[idx];
                    lam += rho * r[idx];
                    if (!it.con->is_equality) lam = std::max(0.0, lam);
                }
            }
            if (viol > 0.25 * prev) rho = std::min(kMaxPenalty, rho * cfg_.penalty_growth);
            if (viol < 0.99 * best) {
                best = viol;
                since_best = 0;
            } else if (++since_best >= 3 && rho >= 1e4) {
                break;  // stalled
            }
        }
        return viol;
    }

private:
    // psi: shifted residual whose squared norm (times rho/2) is the merit.
    double shifted(const std::vector<double>& r, double rho, std::vector<double>& psi) const {
        psi.assign(r.size(), 0.0);
        double phi = 0.0;
        for (const auto& it : p_.items) {
            for (int k = 0; k < it.con->residual_dim; ++k) {
                auto idx = static_cast<std::size_t>(it.row0 + k);
                double v = r[idx] + multipliers_[idx] / rho;
                if (!it.con->is_equality) v = std::max(0.0, v);
                psi[idx] = v;
                phi += v * v;
            }
        }
        return 0.5 * rho * phi;
    }

    void minimize(std::vector<double>& x, double rho, int& iterations) {
        const int n = p_.n;
        std::vector<double> r, psi, trial, r_trial, psi_trial;
        std::vector<std::vector<double>> jac;
        p_.eval(x, r, &jac);
        double phi = shifted(r, rho, psi);
        double damping = -1.0;
        Eigen::VectorXd grad(n), step(n);
        Eigen::MatrixXd dense;
        std::vector<Eigen::Triplet<double>> triplets;

        for (int inner = 0; inner < cfg_.max_inner_iters; ++inner) {
            ++iterations;
            // Normal equations of the Gauss-Newton model.
            grad.setZero();
            if (n <= kDenseLimit) {
                dense.setZero(n, n);
            } else {
                triplets.clear();
            }
            double diag_max = 0.0;
            for (std::size_t i = 0; i < p_.items.size(); ++i) {
                const auto& it = p_.items[i];
                const auto& J = jac[i];
                const int rd = it.con->residual_dim;
                // Column offsets of each scope slot in the global vector.
                int colstart = 0;
                for (std::size_t a = 0; a < it.local.size(); ++a) {
                    const int ga = p_.offset[static_cast<std::size_t>(it.local[a])];
                    for (int ca = 0; ca < it.dims[a]; ++ca) {
                        double g = 0.0;
                        for (int k = 0; k < rd; ++k) {
                            g += J[static_cast<std::size_t>(k * it.ncols + colstart + ca)] * psi[static_cast<std::size_t>(it.row0 + k)];
                        }
                        grad[ga + ca] += rho * g;
                    }
                    int colstart_b = 0;
                    for (std::size_t b = 0; b < it.local.size(); ++b) {
                        const int gb = p_.offset[static_cast<std::size_t>(it.local[b])];
                        for (int ca = 0; ca < it.dims[a]; ++ca) {
                            for (int cb = 0; cb < it.dims[b]; ++cb) {
                                double h = 0.0;
                                for (int k = 0; k < rd; ++k) {
                                    const auto idx = static_cast<std::size_t>(it.row0 + k);
                                    if (!it.con->is_equality && psi[idx] <= 0.0) continue;
                                    h += J[static_cast<std::size_t>(k * it.ncols + colstart + ca)] *
                                         J[static_cast<std::size_t>(k * it.ncols + colstart_b + cb)];
                                }
                                h *= rho;
                                if (n <= kDenseLimit) {
                                    dense(ga + ca, gb + cb) += h;
                                } else {
                                    triplets.emplace_back(ga + ca, gb + cb, h);
                                }
                                if (ga + ca == gb + cb) diag_max = std::max(diag_max, h);
                            }
                        }
                        colstart_b += it.dims[b];
                    }
                    colstart += it.dims[a];
                }
            }
            if (grad.lpNorm<Eigen::Infinity>() < 1e-12 * std::max(1.0, rho)) break;
            if (damping < 0.0) damping = 1e-6 * std::max(1.0, diag_max);

            bool accepted = false;
            for (int tries = 0; tries < 12 && !accepted; ++tries) {
                if (!solve_system(dense, triplets, damping, grad, step)) {
                    damping *= 10.0;
                    continue;
                }
                trial = x;
                for (int k = 0; k < n; ++k) trial[static_cast<std::size_t>(k)] -= step[k];
                p_.eval(trial, r_trial, nullptr);
                const double phi_trial = shifted(r_trial, rho, psi_trial);
                if (phi_trial < phi) {
                    const double decrease = phi - phi_trial;
                    x.swap(trial);
                    phi = phi_trial;
                    accepted = true;
                    damping = std::max(damping / 3.0, 1e-12);
                    if (decrease <= 1e-14 * std::max(1.0, phi) || step.lpNorm<Eigen::Infinity>() < 1e-12) {
                        return;
                    }
                } else {
                    damping *= 4.0;
                }
            }
            if (!accepted) return;
            p_.eval(x, r, &jac);
            shifted(r, rho, psi);
        }
    }

    bool solve_system(Eigen::MatrixXd& dense, std::vector<Eigen::Triplet<double>>& triplets, double damping,
                      const Eigen::VectorXd& grad, Eigen::VectorXd& step) {
        const int n = p_.n;
        if (n <= kDenseLimit) {
            Eigen::MatrixXd A = dense;
            A.diagonal().array() += damping;
            Eigen::LLT<Eigen::MatrixXd> llt(A);
            if (llt.info() != Eigen::Success) return false;
            step = llt.solve(grad);
        } else {
            Eigen::SparseMatrix<double> A(n, n);
            const std::size_t base = triplets.size();
            for (int k = 0; k < n; ++k) triplets.emplace_back(k, k, damping);
            A.setFromTriplets(triplets.begin(), triplets.end());
            triplets.resize(base);
            if (!pattern_ready_) {
                ldlt_.analyzePattern(A);
                pattern_ready_ = true;
            }
            ldlt_.factorize(A);
            if (ldlt_.info() != Eigen::Success) return false;
            step = ldlt_.solve(grad);
        }
        return step.allFinite();
    }

    const Problem& p_;
    const SolverConfig& cfg_;
    std::vector<double> multipliers_;
    Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;
    bool pattern_ready_ = false;
};

std::vector<double> reference_point(const FactoredNlp& g, const std::vector<int>& vars) {
    std::vector<double> x;
    for (int v : vars) {
        const auto& node = g.variable(v);
        for (int k = 0; k < node.dim; ++k) {
            double ref = 0.0;
            if ((node.class_tag == VarClass::RobotConfig || node.class_tag == VarClass::ObjectRelPose) &&
                static_cast<std::size_t>(k) < node.geometry.size()) {
                ref = node.geometry[static_cast<std::size_t>(k)];
            }
            x.push_back(ref);
        }
    }
    return x;
}

ComponentCache::Entry solve_component(const FactoredNlp& g, const Subgraph& comp, const SolverConfig& cfg) {
    ComponentCache::Entry out;
    std::uint64_t seed = splitmix(cfg.rng_seed);
    for (int v : comp.variable_ids) seed = splitmix(seed ^ static_cast<std::uint64_t>(v));

    const std::vector<double> reference = reference_point(g, comp.variable_ids);
    auto perturbed = [&](const std::vector<double>& base, int attempt, double sigma) {
        std::mt19937_64 rng(splitmix(seed + static_cast<std::uint64_t>(attempt)));
        std::normal_distribution<double> noise(0.0, sigma);
        std::vector<double> x = base;
        for (double& xi : x) xi += noise(rng);
        return x;
    };

    if (comp.constraint_ids.empty()) {
        out.feasible = true;
        out.values = reference;
        return out;
    }

    const bool has_nonconvex = std::any_of(comp.constraint_ids.begin(), comp.constraint_ids.end(),
                                           [&](int c) { return !is_convex_kind(g.constraint(c).kind); });

    // The convex relaxation decides infeasibility without restarts.
    Problem relaxed(g, comp.variable_ids, comp.constraint_ids, true);
    std::vector<double> x = perturbed(reference, 0, cfg.init_noise);
    if (relaxed.m > 0) {
        AugmentedLagrangian al(relaxed, cfg);
        const double viol = al.run(x, out.iterations);
        if (viol > cfg.feas_tol) {
            out.feasible = false;
            out.max_violation = viol;
            out.restarts_used = 1;
            return out;
        }
    }
    if (!has_nonconvex) {
        out.feasible = true;
        out.values = std::move(x);
        std::vector<double> r;
        relaxed.eval(out.values, r, nullptr);
        out.max_violation = relaxed.max_violation(r);
        out.restarts_used = 1;
        return out;
    }

    Problem full(g, comp.variable_ids, comp.constraint_ids, false);
    const std::vector<double> warm = x;
    double best = std::numeric_limits<double>::infinity();
    double sigma = cfg.init_noise;
    for (int attempt = 0; attempt < cfg.restarts; ++attempt, sigma *= cfg.noise_growth) {
        std::vector<double> xa = perturbed(warm, attempt + 1, sigma);
        AugmentedLagrangian al(full, cfg);
        const double viol = al.run(xa, out.iterations);
        out.restarts_used = attempt + 1;
        if (viol <= cfg.feas_tol) {
            out.feasible = true;
            out.max_violation = viol;
            out.values = std::move(xa);
            return out;
        }
        best = std::min(best, viol);
    }
    out.feasible = false;
    out.max_violation = best;
    return out;
}

}  // namespace

Solver::Solver(SolverConfig config) : config_(config) { config_.validate(); }

SolveOutcome Solver::solve(const FactoredNlp& graph, ComponentCache* cache) const {
    return solve(full_subgraph(graph), cache);
}

SolveOutcome Solver::solve(const Subgraph& sub, ComponentCache* cache) const {
    count_.fetch_add(1);
    SolveOutcome outcome;
    outcome.feasible = true;
    if (sub.empty()) return outcome;
    const FactoredNlp& g = *sub.parent;

    if (cache) cache->bind(&g);
    for (const Subgraph& comp : connected_components(sub)) {
        const ComponentCache::Entry* hit = cache ? cache->find(comp.variable_ids) : nullptr;
        ComponentCache::Entry fresh;
        if (!hit) {
            fresh = solve_component(g, comp, config_);
            if (cache) {
                cache->insert(comp.variable_ids, fresh);
            }
            hit = &fresh;
        }
        outcome.iterations += hit->iterations;
        outcome.restarts_used = std::max(outcome.restarts_used, hit->restarts_used);
        outcome.max_violation = std::max(outcome.max_violation, hit->max_violation);
        if (!hit->feasible) {
            outcome.feasible = false;
            outcome.assignment.values.clear();
            return outcome;
        }
        std::size_t off = 0;
        for (int v : comp.variable_ids) {
            const int d = g.variable(v).dim;
            outcome.assignment.values[v] = Eigen::Map<const Eigen::VectorXd>(hit->values.data() + off, d);
            off += static_cast<std::size_t>(d);
        }
    }
    // Soundness of the feasible verdict is re-checked on the assembled assignment.
    outcome.max_violation = max_violation(sub, outcome.assignment);
    if (outcome.max_violation > config_.feas_tol) {
        throw SolverFailure("feasible verdict with violation above tolerance");
    }
    return outcome;
}

double max_violation(const Subgraph& sub, const Assignment& assignment) {
    const FactoredNlp& g = *sub.parent;
    double worst = 0.0;
    std::vector<double> xs, r;
    std::vector<int> dims;
    for (int c : sub.constraint_ids) {
        const auto& con = g.constraint(c);
        xs.clear();
        dims.clear();
        for (int s : con.scope) {
            const auto& v = assignment.values.at(s);
            xs.insert(xs.end(), v.data(), v.data() + v.size());
            dims.push_back(static_cast<int>(v.size()));
        }
        r.assign(static_cast<std::size_t>(con.residual_dim), 0.0);
        evaluate(con, dims, xs, r, {});
        worst = std::max(worst, violation(con, r));
    }
    return worst;
}

}  // namespace cnet
