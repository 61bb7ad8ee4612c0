#include <doctest.h>

#include "cnet/solver.hpp"

using namespace cnet;

namespace {

int rel(FactoredNlp& g, double x = 0.0, double y = 0.0) {
    return g.add_variable(2, VarClass::ObjectRelPose, 0, {x, y, 1, 0, 0, 0, 0, 0, 0, 0});
}

}  // namespace

TEST_CASE("single anchored variable is feasible at its target") {
    FactoredNlp g;
    int x = rel(g);
    g.add_constraint(ConstraintKind::Ref, {x}, {1.5, -0.5});
    Solver solver;
    SolveOutcome out = solver.solve(g);
    REQUIRE(out.feasible);
    CHECK(out.max_violation <= solver.config().feas_tol);
    CHECK(out.assignment.values.at(x)[0] == doctest::Approx(1.5).epsilon(1e-4));
    CHECK(out.assignment.values.at(x)[1] == doctest::Approx(-0.5).epsilon(1e-4));
}

TEST_CASE("contradictory anchors are infeasible") {
    FactoredNlp g;
    int x = rel(g);
    g.add_constraint(ConstraintKind::Ref, {x}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Ref, {x}, {5.0, 0.0});
    Solver solver;
    SolveOutcome out = solver.solve(g);
    CHECK_FALSE(out.feasible);
    CHECK(out.max_violation > 1.0);
}

TEST_CASE("anchored overlapping disks are infeasible") {
    FactoredNlp g;
    int a = g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1});
    int b = g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1});
    g.add_constraint(ConstraintKind::Ref, {a}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Ref, {b}, {1.0, 0.0});
    g.add_constraint(ConstraintKind::Collision, {a, b}, {1.0, 1.0, 0.0});
    Solver solver;
    SolveOutcome out = solver.solve(g);
    CHECK_FALSE(out.feasible);
    CHECK(out.restarts_used == solver.config().restarts);
}

TEST_CASE("free disks separate") {
    FactoredNlp g;
    int a = g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1});
    int b = g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1});
    g.add_constraint(ConstraintKind::Ref, {a}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Collision, {a, b}, {1.0, 1.0, 0.0});
    Solver solver;
    SolveOutcome out = solver.solve(g);
    REQUIRE(out.feasible);
    CHECK((out.assignment.values.at(a) - out.assignment.values.at(b)).norm() >= 2.0 - 1e-4);
}

TEST_CASE("solve counter") {
    FactoredNlp g;
    int x = rel(g);
    g.add_constraint(ConstraintKind::Ref, {x}, {0.0, 0.0});
    Solver solver;
    solver.reset_count();
    CHECK(solver.count_solves() == 0);
    for (int i = 0; i < 3; ++i) solver.solve(g);
    CHECK(solver.count_solves() == 3);
    solver.solve(induced_subgraph(g, {}));
    CHECK(solver.count_solves() == 4);
}

TEST_CASE("outcomes are deterministic and cache-transparent") {
    FactoredNlp g;
    int a = g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1});
    int b = g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1});
    int c = g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1});
    g.add_constraint(ConstraintKind::Ref, {a}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Collision, {a, b}, {0.5, 0.5, 0.0});
    g.add_constraint(ConstraintKind::Collision, {b, c}, {0.5, 0.5, 0.0});
    g.add_constraint(ConstraintKind::Collision, {a, c}, {0.5, 0.5, 0.0});
    Solver s1, s2;
    ComponentCache cache;
    SolveOutcome o1 = s1.solve(g);
    SolveOutcome o2 = s2.solve(g, &cache);
    SolveOutcome o3 = s2.solve(g, &cache);
    REQUIRE(o1.feasible);
    for (int v = 0; v < 3; ++v) {
        CHECK(o1.assignment.values.at(v) == o2.assignment.values.at(v));
        CHECK(o1.assignment.values.at(v) == o3.assignment.values.at(v));
    }
    CHECK(cache.size() == 1);
}

TEST_CASE("config validation") {
    SolverConfig cfg;
    cfg.feas_tol = 0.0;
    CHECK_THROWS_AS(Solver{cfg}, Error);
    cfg = SolverConfig{};
    cfg.penalty_growth = 1.0;
    CHECK_THROWS_AS(Solver{cfg}, Error);
}

TEST_CASE("components are solved independently") {
    FactoredNlp g;
    int x = rel(g);
    int y = rel(g);
    g.add_constraint(ConstraintKind::Ref, {x}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Ref, {y}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Ref, {y}, {3.0, 0.0});
    Solver solver;
    CHECK(solver.solve(induced_subgraph(g, {x})).feasible);
    CHECK_FALSE(solver.solve(induced_subgraph(g, {y})).feasible);
    CHECK_FALSE(solver.solve(g).feasible);
}

TEST_CASE("a cache is tied to one graph until cleared") {
    FactoredNlp a, b;
    rel(a);
    rel(b);
    Solver solver;
    ComponentCache cache;
    solver.solve(a, &cache);
    CHECK_THROWS_AS(solver.solve(b, &cache), Error);
    cache.clear();
    CHECK(solver.solve(b, &cache).feasible);
}
