#include "cnet/kinds.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace cnet {

namespace {

[[noreturn]] void fail(ConstraintKind kind, const std::string& msg) {
    throw Error(std::string(to_string(kind)) + ": " + msg);
}

int common_dim(ConstraintKind kind, std::span<const int> dims) {
    for (int d : dims) {
        if (d != dims.front()) fail(kind, "scope variables must share one dimension");
    }
    return dims.front();
}

void expect_arity(ConstraintKind kind, std::span<const int> dims, std::size_t lo, std::size_t hi) {
    if (dims.size() < lo || dims.size() > hi) {
        fail(kind, "scope arity " + std::to_string(dims.size()) + " outside [" + std::to_string(lo) + ", " +
                       std::to_string(hi) + "]");
    }
}

void expect_params(ConstraintKind kind, std::span<const double> params, std::size_t n) {
    if (params.size() != n) {
        fail(kind, "expected " + std::to_string(n) + " params, got " + std::to_string(params.size()));
    }
}

bool is_flag(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

KindShape constraint_shape(ConstraintKind kind, std::span<const int> dims, std::span<const double> params) {
    if (dims.empty()) fail(kind, "empty scope");
    for (int d : dims) {
        if (d < 1) fail(kind, "non-positive scope dimension");
    }
    switch (kind) {
        case ConstraintKind::Ref:
            expect_arity(kind, dims, 1, 1);
            expect_params(kind, params, static_cast<std::size_t>(dims[0]));
            return {dims[0], true};
        case ConstraintKind::Equal: {
            expect_arity(kind, dims, 2, 2);
            expect_params(kind, params, 0);
            return {common_dim(kind, dims), true};
        }
        case ConstraintKind::PoseDiff: {
            expect_arity(kind, dims, 2, 3);
            expect_params(kind, params, 0);
            return {common_dim(kind, dims), true};
        }
        case ConstraintKind::Kin: {
            expect_arity(kind, dims, 3, 4);
            expect_params(kind, params, 2);
            if (!is_flag(params[0]) || !is_flag(params[1])) fail(kind, "parent flags must be 0 or 1");
            if (static_cast<std::size_t>(params[0] + params[1]) + 2 != dims.size()) {
                fail(kind, "parent flags disagree with scope arity");
            }
            return {common_dim(kind, dims), true};
        }
        case ConstraintKind::Grasp:
            expect_arity(kind, dims, 1, 1);
            expect_params(kind, params, 1);
            return {1, false};
        case ConstraintKind::Pos:
            expect_arity(kind, dims, 1, 1);
            expect_params(kind, params, 2 * static_cast<std::size_t>(dims[0]));
            return {2 * dims[0], false};
        case ConstraintKind::Collision:
            expect_arity(kind, dims, 2, 2);
            common_dim(kind, dims);
            expect_params(kind, params, 3);
            return {1, false};
        case ConstraintKind::LinearIneq: {
            int total = std::accumulate(dims.begin(), dims.end(), 0);
            expect_params(kind, params, static_cast<std::size_t>(total) + 1);
            return {1, false};
        }
        case ConstraintKind::Reach:
            expect_arity(kind, dims, 1, 1);
            expect_params(kind, params, static_cast<std::size_t>(dims[0]) + 1);
            return {1, false};
    }
    fail(kind, "unknown constraint kind");
}

bool is_convex_kind(ConstraintKind kind) { return kind != ConstraintKind::Collision; }

void evaluate(const ConstraintNode& con, std::span<const int> dims, std::span<const double> x,
              std::span<double> r, std::span<double> jac) {
    const std::size_t cols = x.size();
    const bool want_jac = !jac.empty();
    if (want_jac) std::fill(jac.begin(), jac.end(), 0.0);
    auto J = [&](int row, std::size_t col) -> double& { return jac[static_cast<std::size_t>(row) * cols + col]; };
    const int d = dims.front();
    const auto& p = con.params;

    switch (con.kind) {
        case ConstraintKind::Ref:
            for (int k = 0; k < d; ++k) {
                r[k] = x[k] - p[k];
                if (want_jac) J(k, k) = 1.0;
            }
            return;
        case ConstraintKind::Equal:
            for (int k = 0; k < d; ++k) {
                r[k] = x[k] - x[d + k];
                if (want_jac) {
                    J(k, k) = 1.0;
                    J(k, d + k) = -1.0;
                }
            }
            return;
        case ConstraintKind::PoseDiff:
            // abs - rel - parent
            for (int k = 0; k < d; ++k) {
                double v = x[k];
                if (want_jac) J(k, k) = 1.0;
                for (std::size_t s = 1; s < dims.size(); ++s) {
                    v -= x[s * d + k];
                    if (want_jac) J(k, s * d + k) = -1.0;
                }
                r[k] = v;
            }
            return;
        case ConstraintKind::Kin: {
            // prev_parent + prev_rel - new_parent - new_rel
            const bool has_prev = p[0] != 0.0;
            std::vector<double> sign;
            if (has_prev) sign.push_back(1.0);
            sign.push_back(1.0);
            if (p[1] != 0.0) sign.push_back(-1.0);
            sign.push_back(-1.0);
            for (int k = 0; k < d; ++k) {
                double v = 0.0;
                for (std::size_t s = 0; s < sign.size(); ++s) {
                    v += sign[s] * x[s * d + k];
                    if (want_jac) J(k, s * d + k) = sign[s];
                }
                r[k] = v;
            }
            return;
        }
        case ConstraintKind::Grasp: {
            double sq = 0.0;
            for (int k = 0; k < d; ++k) {
                sq += x[k] * x[k];
                if (want_jac) J(0, k) = 2.0 * x[k];
            }
            r[0] = sq - p[0] * p[0];
            return;
        }
        case ConstraintKind::Pos:
            for (int k = 0; k < d; ++k) {
                r[k] = p[k] - x[k];
                r[d + k] = x[k] - p[d + k];
                if (want_jac) {
                    J(k, k) = -1.0;
                    J(d + k, k) = 1.0;
                }
            }
            return;
        case ConstraintKind::Collision: {
            double sq = 0.0;
            for (int k = 0; k < d; ++k) {
                double diff = x[k] - x[d + k];
                sq += diff * diff;
            }
            const double dist = std::sqrt(sq);
            r[0] = p[0] + p[1] + p[2] - dist;
            if (want_jac) {
                for (int k = 0; k < d; ++k) {
                    double u = dist > 0.0 ? (x[k] - x[d + k]) / dist : (k == 0 ? 1.0 : 0.0);
                    J(0, k) = -u;
                    J(0, d + k) = u;
                }
            }
            return;
        }
        case ConstraintKind::LinearIneq: {
            double v = -p[cols];
            for (std::size_t k = 0; k < cols; ++k) {
                v += p[k] * x[k];
                if (want_jac) J(0, k) = p[k];
            }
            r[0] = v;
            return;
        }
        case ConstraintKind::Reach: {
            double sq = 0.0;
            for (int k = 0; k < d; ++k) {
                double diff = x[k] - p[k];
                sq += diff * diff;
                if (want_jac) J(0, k) = 2.0 * diff;
            }
            r[0] = sq - p[d] * p[d];
            return;
        }
    }
}

namespace {

std::vector<int> dims_and_concat(const ConstraintNode& con, const std::vector<Eigen::VectorXd>& values,
                                 std::vector<double>& x) {
    if (values.size() != con.scope.size()) throw Error("value count does not match constraint scope");
    std::vector<int> dims;
    for (const auto& v : values) {
        dims.push_back(static_cast<int>(v.size()));
        x.insert(x.end(), v.data(), v.data() + v.size());
    }
    KindShape shape = constraint_shape(con.kind, dims, con.params);
    if (shape.residual_dim != con.residual_dim) throw Error("value dimensions do not match constraint");
    return dims;
}

}  // namespace

Eigen::VectorXd residual(const ConstraintNode& con, const std::vector<Eigen::VectorXd>& values) {
    std::vector<double> x;
    auto dims = dims_and_concat(con, values, x);
    Eigen::VectorXd r(con.residual_dim);
    evaluate(con, dims, x, {r.data(), static_cast<std::size_t>(r.size())}, {});
    return r;
}

Eigen::MatrixXd jacobian(const ConstraintNode& con, const std::vector<Eigen::VectorXd>& values) {
    std::vector<double> x;
    auto dims = dims_and_concat(con, values, x);
    std::vector<double> r(static_cast<std::size_t>(con.residual_dim));
    Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> J(con.residual_dim,
                                                                             static_cast<Eigen::Index>(x.size()));
    evaluate(con, dims, x, r, {J.data(), static_cast<std::size_t>(J.size())});
    return J;
}

double violation(const ConstraintNode& con, std::span<const double> r) {
    double worst = 0.0;
    for (double v : r) worst = std::max(worst, con.is_equality ? std::abs(v) : v);
    return worst;
}

}  // namespace cnet
