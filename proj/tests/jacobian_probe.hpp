#pragma once

// Central-difference oracle for constraint Jacobians, shared by the unit and
// acceptance suites.

#include <algorithm>
#include <cmath>
#include <random>

#include "cnet/kinds.hpp"

namespace cnet_test {

struct JacobianProbeReport {
    int probes = 0;
    double max_rel_error = 0.0;
};

inline JacobianProbeReport probe_jacobians(std::mt19937_64& rng, int probes) {
    using namespace cnet;
    std::uniform_int_distribution<int> kind_pick(0, kNumConstraintKinds - 1);
    std::uniform_real_distribution<double> val(-2.0, 2.0);
    std::uniform_real_distribution<double> pos(0.05, 1.0);
    std::uniform_int_distribution<int> coin(0, 1);
    std::uniform_int_distribution<int> small_dim(1, 3);

    JacobianProbeReport report;
    while (report.probes < probes) {
        const auto kind = static_cast<ConstraintKind>(kind_pick(rng));
        std::vector<int> dims;
        std::vector<double> params;
        const int d = kind == ConstraintKind::LinearIneq ? 0 : small_dim(rng);
        switch (kind) {
            case ConstraintKind::Ref:
                dims = {d};
                for (int k = 0; k < d; ++k) params.push_back(val(rng));
                break;
            case ConstraintKind::Equal: dims = {d, d}; break;
            case ConstraintKind::PoseDiff: dims = coin(rng) ? std::vector<int>{d, d} : std::vector<int>{d, d, d}; break;
            case ConstraintKind::Kin: {
                const int hp = coin(rng), hn = coin(rng);
                dims.assign(static_cast<std::size_t>(2 + hp + hn), d);
                if (dims.size() == 2) {
                    dims.push_back(d);
                    params = {1.0, 0.0};
                } else {
                    params = {double(hp), double(hn)};
                }
                break;
            }
            case ConstraintKind::Grasp:
                dims = {d};
                params = {pos(rng)};
                break;
            case ConstraintKind::Pos:
                dims = {d};
                for (int k = 0; k < d; ++k) params.push_back(val(rng));
                for (int k = 0; k < d; ++k) params.push_back(params[static_cast<std::size_t>(k)] + pos(rng));
                break;
            case ConstraintKind::Collision:
                dims = {d, d};
                params = {pos(rng), pos(rng), pos(rng) * 0.1};
                break;
            case ConstraintKind::LinearIneq: {
                const int arity = 1 + coin(rng) + coin(rng);
                int total = 0;
                for (int k = 0; k < arity; ++k) {
                    dims.push_back(small_dim(rng));
                    total += dims.back();
                }
                for (int k = 0; k <= total; ++k) params.push_back(val(rng));
                break;
            }
            case ConstraintKind::Reach:
                dims = {d};
                for (int k = 0; k < d; ++k) params.push_back(val(rng));
                params.push_back(pos(rng));
                break;
        }
        ConstraintNode con;
        con.kind = kind;
        for (std::size_t i = 0; i < dims.size(); ++i) con.scope.push_back(static_cast<int>(i));
        const KindShape shape = constraint_shape(kind, dims, params);
        con.params = params;
        con.residual_dim = shape.residual_dim;
        con.is_equality = shape.is_equality;

        int total = 0;
        for (int k : dims) total += k;
        std::vector<double> x(static_cast<std::size_t>(total));
        for (double& xi : x) xi = val(rng);
        if (kind == ConstraintKind::Collision) {
            double sq = 0.0;
            for (int k = 0; k < d; ++k) sq += std::pow(x[static_cast<std::size_t>(k)] - x[static_cast<std::size_t>(d + k)], 2);
            if (std::sqrt(sq) < 1e-2) continue;  // non-smooth neighbourhood
        }

        const auto rd = static_cast<std::size_t>(shape.residual_dim);
        std::vector<double> r(rd), J(rd * x.size()), rp(rd), rm(rd);
        evaluate(con, dims, x, r, J);
        const double h = 1e-6;
        for (std::size_t col = 0; col < x.size(); ++col) {
            auto xp = x, xm = x;
            xp[col] += h;
            xm[col] -= h;
            evaluate(con, dims, xp, rp, {});
            evaluate(con, dims, xm, rm, {});
            for (std::size_t row = 0; row < rd; ++row) {
                const double fd = (rp[row] - rm[row]) / (2.0 * h);
                const double an = J[row * x.size() + col];
                const double err = std::abs(fd - an) / std::max({1.0, std::abs(an), std::abs(fd)});
                report.max_rel_error = std::max(report.max_rel_error, err);
            }
        }
        ++report.probes;
    }
    return report;
}

}  // namespace cnet_test
