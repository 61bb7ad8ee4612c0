#include <doctest.h>

#include <algorithm>
#include <random>

#include "cnet/conflicts.hpp"
#include "cnet/domain.hpp"

using namespace cnet;

namespace {

int rel(FactoredNlp& g, int t = 0) { return g.add_variable(2, VarClass::ObjectRelPose, t, {0, 0, 1, 0, 0, 0, 0, 0, 0, 0}); }
int disk(FactoredNlp& g) { return g.add_variable(2, VarClass::ObjectAbsPose, 0, {1, 1}); }

void overlap(FactoredNlp& g, int a, int b) {
    g.add_constraint(ConstraintKind::Ref, {a}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Ref, {b}, {1.0, 0.0});
    g.add_constraint(ConstraintKind::Collision, {a, b}, {1.0, 1.0, 0.0});
}

// x0..x5, conflict {x2, x4} (anchored overlapping disks), the rest free or anchored alone.
FactoredNlp single_conflict() {
    FactoredNlp g;
    for (int i = 0; i < 6; ++i) (i == 2 || i == 4) ? disk(g) : rel(g);
    overlap(g, 2, 4);
    g.add_constraint(ConstraintKind::Ref, {0}, {3.0, 3.0});
    g.add_constraint(ConstraintKind::Equal, {0, 1}, {});
    g.add_constraint(ConstraintKind::Equal, {3, 5}, {});
    return g;
}

FactoredNlp two_conflicts() {
    FactoredNlp g;
    for (int i = 0; i < 4; ++i) disk(g);
    rel(g);
    rel(g);
    overlap(g, 0, 1);
    overlap(g, 2, 3);
    g.add_constraint(ConstraintKind::Equal, {4, 5}, {});
    return g;
}

// One variable per keyframe chained by Equal; x0 anchored at the origin and
// x_t anchored one unit away, so the conflict is {x0..x_t}.
FactoredNlp time_chain(int steps, int t_conflict) {
    FactoredNlp g;
    for (int t = 0; t <= steps; ++t) rel(g, t);
    for (int t = 0; t < steps; ++t) g.add_constraint(ConstraintKind::Equal, {t, t + 1}, {});
    g.add_constraint(ConstraintKind::Ref, {0}, {0.0, 0.0});
    if (t_conflict >= 0) g.add_constraint(ConstraintKind::Ref, {t_conflict}, {1.0, 0.0});
    return g;
}

std::vector<int> iota_vec(int n) {
    std::vector<int> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] = i;
    return v;
}

std::vector<std::vector<int>> variable_sets(const std::vector<Conflict>& cs) {
    std::vector<std::vector<int>> out;
    for (const auto& c : cs) out.push_back(c.variables());
    std::sort(out.begin(), out.end());
    return out;
}

PlantSpec random_spec(std::mt19937_64& rng, int max_vars) {
    PlantSpec s;
    s.rng_seed = rng();
    do {
        s.contradictory_refs = static_cast<int>(rng() % 3);
        s.unreachable_grasps = static_cast<int>(rng() % 3);
        s.blocked_placements = static_cast<int>(rng() % 2);
    } while (s.contradictory_refs + s.unreachable_grasps + s.blocked_placements == 0 ||
             s.contradictory_refs + 3 * s.unreachable_grasps + 4 * s.blocked_placements > max_vars);
    const int used = s.contradictory_refs + 3 * s.unreachable_grasps + 4 * s.blocked_placements;
    s.filler = static_cast<int>(rng() % static_cast<std::uint64_t>(max_vars - used + 1));
    return s;
}

}  // namespace

TEST_CASE("brute force examples") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};

    FactoredNlp feasible;
    rel(feasible);
    rel(feasible);
    feasible.add_constraint(ConstraintKind::Equal, {0, 1}, {});
    CHECK(brute_force_conflicts(full_subgraph(feasible), ctx).empty());

    FactoredNlp single;
    const int x = rel(single);
    rel(single);
    single.add_constraint(ConstraintKind::Ref, {x}, {0.0, 0.0});
    single.add_constraint(ConstraintKind::Ref, {x}, {2.0, 0.0});
    single.add_constraint(ConstraintKind::Equal, {0, 1}, {});
    const auto one = brute_force_conflicts(full_subgraph(single), ctx);
    REQUIRE(one.size() == 1);
    CHECK(one[0].variables() == std::vector<int>{x});
    CHECK(one[0].minimal);

    const FactoredNlp two = two_conflicts();
    CHECK(variable_sets(brute_force_conflicts(full_subgraph(two), ctx)) ==
          std::vector<std::vector<int>>{{0, 1}, {2, 3}});

    FactoredNlp big;
    for (int i = 0; i < 15; ++i) rel(big);
    CHECK_THROWS_AS(brute_force_conflicts(full_subgraph(big), ctx), Error);
}

TEST_CASE("planted conflicts are exactly the enumerated ones") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    PlantSpec two{1, 1, 0, 2, 5};
    const PlantedInstance p = planted_instance(two);
    CHECK(p.graph.num_variables() == 6);
    CHECK(variable_sets(brute_force_conflicts(full_subgraph(p.graph), ctx)) == p.conflicts);

    PlantSpec grasp{0, 1, 0, 0, 8};
    const PlantedInstance g = planted_instance(grasp);
    REQUIRE(g.conflicts.size() == 1);
    CHECK(g.conflicts[0].size() == 3);
    int robots = 0;
    for (int v : g.conflicts[0]) robots += g.graph.variable(v).class_tag == VarClass::RobotConfig;
    CHECK(robots == 1);
    CHECK(variable_sets(brute_force_conflicts(full_subgraph(g.graph), ctx)) == g.conflicts);
}

TEST_CASE("deletion filter examples") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    const FactoredNlp g = single_conflict();

    const Subgraph minimal = induced_subgraph(g, {2, 4});
    solver.reset_count();
    CHECK(deletion_filter(minimal, ctx, Precondition::Assume).variables() == std::vector<int>{2, 4});
    CHECK(solver.count_solves() == 2);
    solver.reset_count();
    deletion_filter(minimal, ctx);
    CHECK(solver.count_solves() == 3);

    CHECK(deletion_filter(induced_subgraph(g, {2, 3, 4}), ctx).variables() == std::vector<int>{2, 4});
    CHECK(deletion_filter(full_subgraph(g), ctx).variables() == std::vector<int>{2, 4});
    CHECK_THROWS_AS(deletion_filter(induced_subgraph(g, {0, 1, 2}), ctx), Error);
}

TEST_CASE("quickxplain examples") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    FactoredNlp g;
    for (int i = 0; i < 8; ++i) rel(g);
    g.add_constraint(ConstraintKind::Ref, {5}, {0.0, 0.0});
    g.add_constraint(ConstraintKind::Ref, {5}, {1.0, 1.0});
    for (int i = 0; i < 7; ++i) g.add_constraint(ConstraintKind::Equal, {i, i + 1}, {});
    const Conflict c = quickxplain(full_subgraph(g), ctx);
    CHECK(c.variables() == std::vector<int>{5});
    CHECK(check_minimal(c.sub, ctx));
    CHECK(quickxplain(full_subgraph(single_conflict()), ctx).variables() == std::vector<int>{2, 4});
    CHECK_THROWS_AS(quickxplain(induced_subgraph(g, {0, 1}), ctx), Error);
}

TEST_CASE("extractors agree with enumeration on planted micro-instances") {
    Solver solver;
    ComponentCache cache;
    const SolveContext ctx{&solver, &cache};
    std::mt19937_64 rng(2024);
    for (int i = 0; i < 40; ++i) {
        cache.clear();
        const PlantedInstance p = planted_instance(random_spec(rng, 12));
        const Subgraph full = full_subgraph(p.graph);
        const auto truth = variable_sets(brute_force_conflicts(full, ctx));
        CAPTURE(i);
        CHECK(truth == p.conflicts);
        for (ReduceMethod m : {ReduceMethod::DeletionFilter, ReduceMethod::QuickXplain}) {
            const Conflict c = make_reduce(m)(full, ctx, Precondition::Verify);
            CHECK(std::find(truth.begin(), truth.end(), c.variables()) != truth.end());
            CHECK(is_subset(c.variables(), full.variable_ids));
            CHECK(check_minimal(c.sub, ctx));
        }
    }
}

TEST_CASE("quickxplain needs fewer solves than deletion filtering on small conflicts") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    std::mt19937_64 rng(77);
    long df = 0, qx = 0;
    for (int i = 0; i < 100; ++i) {
        PlantSpec s;
        s.rng_seed = rng();
        const int kind = static_cast<int>(rng() % 3);
        s.contradictory_refs = kind == 0;
        s.unreachable_grasps = kind == 1;
        s.blocked_placements = kind == 2;
        s.filler = 20 - (kind == 0 ? 1 : kind == 1 ? 3 : 4);
        const PlantedInstance p = planted_instance(s);
        REQUIRE(p.graph.num_variables() == 20);
        const Subgraph full = full_subgraph(p.graph);
        solver.reset_count();
        const Conflict a = deletion_filter(full, ctx, Precondition::Assume);
        df += solver.count_solves();
        solver.reset_count();
        const Conflict b = quickxplain(full, ctx, Precondition::Assume);
        qx += solver.count_solves();
        CHECK(a.variables() == b.variables());
    }
    CHECK(df == 100 * 20);
    CHECK(qx < df);
}

TEST_CASE("check_minimal") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    const FactoredNlp g = single_conflict();
    CHECK(check_minimal(induced_subgraph(g, {2, 4}), ctx));
    CHECK_FALSE(check_minimal(induced_subgraph(g, {2, 3, 4}), ctx));
    CHECK_FALSE(check_minimal(induced_subgraph(g, {0, 1}), ctx));
    CHECK_FALSE(check_minimal(induced_subgraph(g, {}), ctx));
}

TEST_CASE("expert prefix scan") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    std::vector<std::vector<int>> reduced;
    const ReduceFn inner = make_reduce(ReduceMethod::DeletionFilter);
    const ReduceFn spy = [&](const Subgraph& s, const SolveContext& c, Precondition p) {
        reduced.push_back(s.variable_ids);
        return inner(s, c, p);
    };

    const auto early = expert_prefix(time_chain(6, 1), ctx, spy);
    REQUIRE(early);
    CHECK(early->variables() == std::vector<int>{0, 1});
    CHECK(reduced == std::vector<std::vector<int>>{{0, 1}});

    reduced.clear();
    solver.reset_count();
    const auto late = expert_prefix(time_chain(6, 6), ctx, spy);
    REQUIRE(late);
    CHECK(late->variables() == iota_vec(7));
    CHECK(reduced == std::vector<std::vector<int>>{iota_vec(7)});
    CHECK(solver.count_solves() == 7 + 7);  // six feasible prefixes, the full graph, then one solve per variable

    CHECK_FALSE(expert_prefix(time_chain(6, -1), ctx, spy).has_value());

    reduced.clear();
    const FactoredNlp chain = time_chain(6, 2);
    const Conflict viaexpert = expert_reduce(full_subgraph(chain), ctx, Precondition::Assume, spy);
    CHECK(viaexpert.variables() == std::vector<int>{0, 1, 2});
    CHECK(reduced == std::vector<std::vector<int>>{{0, 1, 2}});
}

TEST_CASE("labeling examples") {
    Solver solver;
    ComponentCache cache;
    const SolveContext ctx{&solver, &cache};
    const ReduceFn reduce = make_reduce(ReduceMethod::QuickXplain);

    const LabeledInstance feasible = label_variables(time_chain(4, -1), ctx, reduce);
    CHECK(feasible.conflicts.empty());
    CHECK(feasible.labels == std::vector<int>(5, 1));

    cache.clear();
    const LabeledInstance one = label_variables(single_conflict(), ctx, reduce);
    CHECK(one.conflicts == std::vector<std::vector<int>>{{2, 4}});
    CHECK(one.labels == std::vector<int>{1, 1, 0, 1, 0, 1});

    cache.clear();
    const LabeledInstance two = label_variables(two_conflicts(), ctx, reduce);
    auto sets = two.conflicts;
    std::sort(sets.begin(), sets.end());
    CHECK(sets == std::vector<std::vector<int>>{{0, 1}, {2, 3}});
    CHECK(std::count(two.labels.begin(), two.labels.end(), 0) == 4);

    CHECK(labels_from_conflicts(3, {{0}, {0, 2}}) == std::vector<int>{0, 1, 0});
    CHECK_THROWS_AS(labels_from_conflicts(3, {{3}}), Error);
}

TEST_CASE("labeling recovers every planted conflict and honors the cap") {
    Solver solver;
    ComponentCache cache;
    const SolveContext ctx{&solver, &cache};
    std::mt19937_64 rng(5);
    for (int i = 0; i < 15; ++i) {
        cache.clear();
        const PlantedInstance p = planted_instance(random_spec(rng, 14));
        LabeledInstance li = label_variables(p.graph, ctx, make_reduce(ReduceMethod::QuickXplain));
        std::sort(li.conflicts.begin(), li.conflicts.end());
        CHECK(li.conflicts == p.conflicts);
        CHECK(li.labels == labels_from_conflicts(p.graph.num_variables(), p.conflicts));
    }
    cache.clear();
    const PlantedInstance many = planted_instance({4, 0, 0, 0, 1});
    LabelConfig cap;
    cap.max_conflicts = 2;
    CHECK(label_variables(many.graph, ctx, make_reduce(ReduceMethod::DeletionFilter), cap).conflicts.size() == 2);
}

TEST_CASE("guided extraction with oracle scores costs one solve plus the reduce") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    const ReduceFn reduce = make_reduce(ReduceMethod::QuickXplain);
    const FactoredNlp g = single_conflict();
    const std::vector<double> scores = {1, 1, 0, 1, 0, 1};

    solver.reset_count();
    const auto found = gnn_extract(g, scores, ctx, reduce);
    const auto guided = solver.count_solves();
    REQUIRE(found.size() == 1);
    CHECK(found[0].variables() == std::vector<int>{2, 4});

    solver.reset_count();
    const Subgraph truth = induced_subgraph(g, {2, 4});
    REQUIRE_FALSE(ctx.feasible(truth));
    reduce(truth, ctx, Precondition::Assume);
    CHECK(guided == solver.count_solves());
}

TEST_CASE("all-ones scores degenerate to solve and reduce on the whole graph") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    for (ReduceMethod m : {ReduceMethod::DeletionFilter, ReduceMethod::QuickXplain}) {
        const ReduceFn reduce = make_reduce(m);
        for (const FactoredNlp& g : {single_conflict(), two_conflicts(), planted_instance({1, 1, 1, 4, 3}).graph}) {
            solver.reset_count();
            const auto found = gnn_extract(g, std::vector<double>(static_cast<std::size_t>(g.num_variables()), 1.0), ctx,
                                           reduce);
            const auto guided = solver.count_solves();
            REQUIRE(found.size() == 1);
            solver.reset_count();
            const Subgraph full = full_subgraph(g);
            REQUIRE_FALSE(ctx.feasible(full));
            const Conflict direct = reduce(full, ctx, Precondition::Assume);
            CHECK(guided == solver.count_solves());
            CHECK(direct.variables() == found[0].variables());
        }
    }
}

TEST_CASE("find_all recovers disjoint conflicts") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    ExtractConfig all;
    all.find_all = true;
    const FactoredNlp g = two_conflicts();
    const std::vector<double> scores = {0, 0, 0, 0, 1, 1};
    solver.reset_count();
    const auto found = gnn_extract(g, scores, ctx, make_reduce(ReduceMethod::DeletionFilter), all);
    CHECK(variable_sets(found) == std::vector<std::vector<int>>{{0, 1}, {2, 3}});
    // Two candidate solves, two per deletion filter, then the full graph split
    // into the remaining conflict-free component.
    CHECK(solver.count_solves() == 2 + 4 + 1);

    CHECK(gnn_extract(g, scores, ctx, make_reduce(ReduceMethod::DeletionFilter)).size() == 1);
}

TEST_CASE("guided extraction on feasible graphs and bad inputs") {
    Solver solver;
    const SolveContext ctx{&solver, nullptr};
    const FactoredNlp g = time_chain(3, -1);
    CHECK(gnn_extract(g, {0.1, 0.9, 0.3, 0.2}, ctx, make_reduce(ReduceMethod::QuickXplain)).empty());
    CHECK_THROWS_AS(gnn_extract(g, {0.1}, ctx, make_reduce(ReduceMethod::QuickXplain)), Error);
    ExtractConfig bad;
    bad.delta_rate = 1.0;
    CHECK_THROWS_AS(gnn_extract(g, {0, 0, 0, 0}, ctx, make_reduce(ReduceMethod::QuickXplain), bad), Error);
}
