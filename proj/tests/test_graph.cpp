#include <doctest.h>

#include <algorithm>
#include <random>
#include <set>

#include "cnet/disjoint_sets.hpp"
#include "cnet/graph.hpp"

using namespace cnet;

namespace {

std::vector<double> zeros(int n) { return std::vector<double>(static_cast<std::size_t>(n), 0.0); }

/// Six generic variables wired like the overview figure: constraints
/// {1,2} {1,3} {3,5} {2,3,4} {4,5,6} {5,6} (1-based in the figure).
FactoredNlp overview_graph() {
    FactoredNlp g;
    for (int i = 0; i < 6; ++i) g.add_variable(1, VarClass::Generic, 0, {});
    auto lin = [&](std::vector<int> scope) {
        std::vector<double> p(scope.size() + 1, 1.0);
        g.add_constraint(ConstraintKind::LinearIneq, std::move(scope), std::move(p));
    };
    lin({0, 1});
    lin({0, 2});
    lin({2, 4});
    lin({1, 2, 3});
    lin({4, 3, 5});
    lin({4, 5});
    return g;
}

FactoredNlp random_graph(std::mt19937& rng, int n_vars, int n_cons) {
    FactoredNlp g;
    std::uniform_real_distribution<double> val(-10.0, 10.0);
    std::uniform_int_distribution<int> dim(1, 3);
    for (int i = 0; i < n_vars; ++i) {
        std::vector<double> geo(static_cast<std::size_t>(i % 4));
        for (double& x : geo) x = val(rng);
        g.add_variable(dim(rng), VarClass::Generic, i % 5, geo);
    }
    std::uniform_int_distribution<int> pick(0, n_vars - 1);
    std::uniform_int_distribution<int> arity(1, 3);
    for (int c = 0; c < n_cons; ++c) {
        std::set<int> scope;
        const int k = std::min(arity(rng), n_vars);
        while (static_cast<int>(scope.size()) < k) scope.insert(pick(rng));
        std::vector<int> sc(scope.begin(), scope.end());
        std::shuffle(sc.begin(), sc.end(), rng);
        int total = 0;
        for (int v : sc) total += g.variable(v).dim;
        std::vector<double> p(static_cast<std::size_t>(total) + 1);
        for (double& x : p) x = val(rng) / 3.0;
        g.add_constraint(ConstraintKind::LinearIneq, sc, p);
    }
    return g;
}

}  // namespace

TEST_CASE("add_variable assigns dense ids and checks geometry arity") {
    FactoredNlp g;
    CHECK(g.add_variable(2, VarClass::RobotConfig, 0, {0.1, 0.2, 0.3}) == 0);
    CHECK(g.add_variable(2, VarClass::ObjectAbsPose, 0, {0.1, 0.1}) == 1);
    CHECK_THROWS_AS(g.add_variable(2, VarClass::RobotConfig, 0, zeros(5)), Error);
    CHECK_THROWS_AS(g.add_variable(0, VarClass::Generic, 0, {}), Error);
    CHECK_THROWS_AS(g.add_variable(3, VarClass::ObjectAbsPose, 0, zeros(2)), Error);
    CHECK(g.num_variables() == 2);
}

TEST_CASE("add_constraint derives residual shape and keeps incidence symmetric") {
    FactoredNlp g;
    int a = g.add_variable(2, VarClass::ObjectAbsPose, 0, {0.1, 0.1});
    int b = g.add_variable(2, VarClass::ObjectAbsPose, 0, {0.1, 0.1});
    int c = g.add_variable(2, VarClass::RobotConfig, 0, {0, 0, 0});

    int eq = g.add_constraint(ConstraintKind::Equal, {a, b}, {});
    CHECK(g.constraint(eq).residual_dim == 2);
    CHECK(g.constraint(eq).is_equality);

    int col = g.add_constraint(ConstraintKind::Collision, {a, b}, {0.1, 0.1, 0.0});
    CHECK(g.constraint(col).residual_dim == 1);
    CHECK_FALSE(g.constraint(col).is_equality);

    CHECK_THROWS_AS(g.add_constraint(ConstraintKind::Kin, {a}, {0, 0}), Error);
    CHECK_THROWS_AS(g.add_constraint(ConstraintKind::Equal, {a, 7}, {}), Error);
    CHECK_THROWS_AS(g.add_constraint(ConstraintKind::Equal, {a, a}, {}), Error);
    CHECK_THROWS_AS(kind_from_string("Teleport"), Error);

    g.add_constraint(ConstraintKind::Kin, {a, c, b}, {0, 1});
    for (const auto& con : g.constraints()) {
        for (int v : con.scope) {
            auto n = g.neighbors(v);
            CHECK(std::find(n.begin(), n.end(), con.id) != n.end());
        }
    }
    for (const auto& var : g.variables()) {
        for (int cid : g.neighbors(var.id)) {
            const auto& scope = g.constraint(cid).scope;
            CHECK(std::find(scope.begin(), scope.end(), var.id) != scope.end());
        }
    }
}

TEST_CASE("induced_subgraph edge cases") {
    FactoredNlp g = overview_graph();
    Subgraph all = induced_subgraph(g, {0, 1, 2, 3, 4, 5});
    CHECK(all == full_subgraph(g));
    Subgraph none = induced_subgraph(g, {});
    CHECK(none.variable_ids.empty());
    CHECK(none.constraint_ids.empty());
    CHECK_THROWS_AS(induced_subgraph(g, {0, 9}), Error);

    // Figure variables {1,2,5,6} are ids {0,1,4,5}: only {1,2} and {5,6} fit.
    Subgraph s = induced_subgraph(g, {0, 1, 4, 5});
    CHECK(s.constraint_ids == std::vector<int>{0, 5});
}

TEST_CASE("induced_subgraph matches an exhaustive scope scan and is monotone") {
    std::mt19937 rng(11);
    for (int trial = 0; trial < 30; ++trial) {
        FactoredNlp g = random_graph(rng, 5 + trial, 2 * (5 + trial));
        std::bernoulli_distribution coin(0.6);
        std::vector<int> xs, xl;
        for (int v = 0; v < g.num_variables(); ++v) {
            bool in_small = coin(rng);
            if (in_small) xs.push_back(v);
            if (in_small || coin(rng)) xl.push_back(v);
        }
        Subgraph s = induced_subgraph(g, xs);
        std::vector<int> expected;
        for (const auto& con : g.constraints()) {
            bool inside = std::all_of(con.scope.begin(), con.scope.end(), [&](int v) {
                return std::find(xs.begin(), xs.end(), v) != xs.end();
            });
            if (inside) expected.push_back(con.id);
        }
        CHECK(s.constraint_ids == expected);
        Subgraph l = induced_subgraph(g, xl);
        CHECK(is_subset(s.constraint_ids, l.constraint_ids));
    }
}

TEST_CASE("connected_components basic cases") {
    FactoredNlp g = overview_graph();
    CHECK(connected_components(induced_subgraph(g, {})).empty());

    FactoredNlp one;
    for (int i = 0; i < 4; ++i) one.add_variable(1, VarClass::Generic, 0, {});
    one.add_constraint(ConstraintKind::LinearIneq, {2, 0, 3, 1}, {1, 1, 1, 1, 0});
    CHECK(connected_components(full_subgraph(one)).size() == 1);

    // Labeled {1,2} and {5,6}: two pieces in order of their smallest id.
    auto comps = connected_components(induced_subgraph(g, {0, 1, 4, 5}));
    REQUIRE(comps.size() == 2);
    CHECK(comps[0].variable_ids == std::vector<int>{0, 1});
    CHECK(comps[0].constraint_ids == std::vector<int>{0});
    CHECK(comps[1].variable_ids == std::vector<int>{4, 5});
    CHECK(comps[1].constraint_ids == std::vector<int>{5});
}

TEST_CASE("connected_components partitions the input and agrees with an edge-list union-find") {
    std::mt19937 rng(5);
    for (int trial = 0; trial < 30; ++trial) {
        FactoredNlp g = random_graph(rng, 12 + trial, 8 + trial / 2);
        std::bernoulli_distribution coin(0.7);
        std::vector<int> xs;
        for (int v = 0; v < g.num_variables(); ++v) {
            if (coin(rng)) xs.push_back(v);
        }
        Subgraph sub = induced_subgraph(g, xs);
        auto comps = connected_components(sub);

        // Oracle: union-find over explicit (variable, constraint) edges.
        const int nv = g.num_variables();
        DisjointSets uf(static_cast<std::size_t>(nv + g.num_constraints()));
        for (int c : sub.constraint_ids) {
            for (int v : g.constraint(c).scope) uf.unite(v, nv + c);
        }
        std::vector<int> all_v, all_c;
        int prev_min = -1;
        for (const auto& comp : comps) {
            CHECK(comp.variable_ids.front() > prev_min);
            prev_min = comp.variable_ids.front();
            const int root = uf.find(comp.variable_ids.front());
            for (int v : comp.variable_ids) CHECK(uf.find(v) == root);
            for (int c : comp.constraint_ids) {
                CHECK(uf.find(nv + c) == root);
                CHECK(is_subset([&] {
                    auto s = g.constraint(c).scope;
                    std::sort(s.begin(), s.end());
                    return s;
                }(), comp.variable_ids));
            }
            all_v.insert(all_v.end(), comp.variable_ids.begin(), comp.variable_ids.end());
            all_c.insert(all_c.end(), comp.constraint_ids.begin(), comp.constraint_ids.end());
        }
        for (std::size_t i = 0; i < comps.size(); ++i) {
            for (std::size_t j = i + 1; j < comps.size(); ++j) {
                CHECK(uf.find(comps[i].variable_ids.front()) != uf.find(comps[j].variable_ids.front()));
            }
        }
        std::sort(all_v.begin(), all_v.end());
        std::sort(all_c.begin(), all_c.end());
        CHECK(all_v == sub.variable_ids);
        CHECK(all_c == sub.constraint_ids);
    }
}

TEST_CASE("is_supergraph") {
    FactoredNlp g = overview_graph();
    Subgraph a = induced_subgraph(g, {0, 1, 2});
    CHECK(is_supergraph(a, a));
    CHECK(is_supergraph(a, induced_subgraph(g, {})));
    CHECK_FALSE(is_supergraph(a, induced_subgraph(g, {3, 4})));
    CHECK(is_supergraph(a, induced_subgraph(g, {1})));
    FactoredNlp other = overview_graph();
    CHECK_THROWS_AS(is_supergraph(a, induced_subgraph(other, {1})), Error);
}

TEST_CASE("serialization round-trips bit-exactly") {
    std::mt19937 rng(3);
    FactoredNlp g = random_graph(rng, 50, 80);
    std::string text = serialize(g);
    FactoredNlp back = deserialize(text);
    CHECK(back == g);
    CHECK(serialize(back) == text);

    FactoredNlp empty;
    CHECK(deserialize(serialize(empty)) == empty);

    FactoredNlp tricky;
    tricky.add_variable(2, VarClass::RobotConfig, 3, {0.1 + 0.2, 1.0 / 3.0, -5e-324});
    tricky.add_constraint(ConstraintKind::Ref, {0}, {std::nextafter(1.0, 2.0), 1e300});
    CHECK(deserialize(serialize(tricky)) == tricky);
}

TEST_CASE("malformed graph documents raise positioned errors") {
    std::mt19937 rng(4);
    std::string text = serialize(random_graph(rng, 6, 6));
    try {
        deserialize(text.substr(0, text.size() / 2));
        FAIL("expected a parse error");
    } catch (const ParseError& e) {
        CHECK(e.position() > 0);
    }
    CHECK_THROWS_AS(deserialize(R"({"variables": [{"id": 1, "dim": 1, "class": "generic", "time": 0, "geometry": []}], "constraints": []})"),
                    ParseError);
    CHECK_THROWS_AS(deserialize(R"({"variables": [], "constraints": [{"id": 0, "kind": "Ref", "scope": [0], "params": [1]}]})"),
                    ParseError);
    CHECK_THROWS_AS(deserialize(R"({"variables": []})"), ParseError);
}
