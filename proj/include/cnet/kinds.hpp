#pragma once

#include <span>
#include <vector>

#include <Eigen/Dense>

#include "cnet/graph.hpp"

namespace cnet {

struct KindShape {
    int residual_dim = 0;
    bool is_equality = true;
};

/// Validates scope arity, dimensions and parameter layout for a constraint
/// kind and returns the residual shape. Throws Error on any mismatch.
///
/// Layouts (d = common variable dimension):
///   Ref        [x]                                 params target(d)             eq   d
///   Equal      [x, y]                              -                            eq   d
///   PoseDiff   [abs, rel] | [abs, rel, parent]     -                            eq   d
///   Kin        [prev_parent?, prev_rel, new_parent?, new_rel]
///                                                  has_prev, has_new (0/1)      eq   d
///   Grasp      [rel]                               radius                       ineq 1
///   Pos        [rel]                               lo(d), hi(d)                 ineq 2d
///   Collision  [p, q]                              r_p, r_q, clearance          ineq 1
///   LinearIneq [x1..xk]                            coeffs(sum dims), offset     ineq 1
///   Reach      [q]                                 center(d), radius            ineq 1
KindShape constraint_shape(ConstraintKind kind, std::span<const int> scope_dims, std::span<const double> params);

/// Kinds whose feasible set is convex in the scope variables.
bool is_convex_kind(ConstraintKind kind);

/// Evaluates residual and (optionally) Jacobian of `con` at the concatenated
/// scope values `x` (length = sum of scope dims). `jac` is row-major
/// residual_dim x x.size() and may be empty to skip it.
void evaluate(const ConstraintNode& con, std::span<const int> scope_dims, std::span<const double> x,
              std::span<double> residual, std::span<double> jac);

/// Residual with inequality rows <= 0 when satisfied and equality rows zero.
Eigen::VectorXd residual(const ConstraintNode& con, const std::vector<Eigen::VectorXd>& values);

/// residual_dim x (sum of scope dims). At coincident Collision centers the
/// subgradient points along the first axis.
Eigen::MatrixXd jacobian(const ConstraintNode& con, const std::vector<Eigen::VectorXd>& values);

/// Violation of one residual vector: |r| for equalities, max(0, r) otherwise.
double violation(const ConstraintNode& con, std::span<const double> residual);

}  // namespace cnet
