#include "cnet/domain.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <set>

namespace cnet {

const Object& Scene::object(int i) const {
    if (i < 0 || i >= num_objects()) throw Error("scene: object index " + std::to_string(i) + " out of range");
    return is_block(i) ? blocks[static_cast<std::size_t>(i)] : obstacles[static_cast<std::size_t>(i) - blocks.size()];
}

std::string to_string(const Action& a) {
    std::string s;
    switch (a.verb) {
        case Verb::Pick: s = "pick"; break;
        case Verb::Place: s = "place"; break;
        case Verb::Handover: s = "handover"; break;
    }
    s += " o" + std::to_string(a.object) + " r" + std::to_string(a.robot);
    switch (a.target_kind) {
        case TargetKind::None: break;
        case TargetKind::Table: s += " table" + std::to_string(a.target); break;
        case TargetKind::Object: s += " on o" + std::to_string(a.target); break;
        case TargetKind::Robot: s += " to r" + std::to_string(a.target); break;
    }
    return s;
}

namespace {

double uniform(std::mt19937_64& rng, double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng); }
int pick_index(std::mt19937_64& rng, std::size_t n) {
    return std::uniform_int_distribution<int>(0, static_cast<int>(n) - 1)(rng);
}

}  // namespace

Scene random_scene(int n_blocks, int n_obstacles, int n_robots, std::uint64_t rng_seed) {
    if (n_blocks < 0 || n_obstacles < 0 || n_robots < 0) throw Error("random_scene: negative count");
    std::mt19937_64 rng(rng_seed);
    Scene scene;
    scene.rng_seed = rng_seed;

    for (int k = 0; k < 3; ++k) {
        const double cx = -0.75 + 0.75 * k + uniform(rng, -0.08, 0.08);
        const double cy = uniform(rng, -0.08, 0.08);
        const double hw = uniform(rng, 0.2, 0.25);
        const double hh = uniform(rng, 0.25, 0.32);
        scene.tables.push_back({cx - hw, cy - hh, cx + hw, cy + hh});
    }
    for (int r = 0; r < n_robots; ++r) {
        Robot robot;
        const double side = r % 2 == 0 ? -1.0 : 1.0;
        robot.x = uniform(rng, -0.9, 0.9);
        robot.y = side * uniform(rng, 0.5, 0.6);
        robot.theta = -side * std::numbers::pi / 2 + uniform(rng, -0.3, 0.3);
        scene.robots.push_back(robot);
    }

    std::vector<Object> placed;
    auto place = [&](double half_lo, double half_hi) {
        for (int attempt = 0; attempt < 2000; ++attempt) {
            Object o;
            o.half = uniform(rng, half_lo, half_hi);
            o.table = pick_index(rng, scene.tables.size());
            const Table& t = scene.tables[static_cast<std::size_t>(o.table)];
            o.x = uniform(rng, t.xmin + o.half, t.xmax - o.half);
            o.y = uniform(rng, t.ymin + o.half, t.ymax - o.half);
            bool clear = std::all_of(placed.begin(), placed.end(), [&](const Object& p) {
                return std::hypot(p.x - o.x, p.y - o.y) >= p.half + o.half + 0.02;
            });
            if (clear) {
                placed.push_back(o);
                return o;
            }
        }
        throw Error("random_scene: sampling budget exhausted");
    };
    for (int i = 0; i < n_blocks; ++i) scene.blocks.push_back(place(0.04, 0.05));
    for (int i = 0; i < n_obstacles; ++i) scene.obstacles.push_back(place(0.08, 0.1));
    return scene;
}

namespace {

/// Symbolic world state threaded through action generation and compilation.
struct SymbolicState {
    std::vector<int> holder;   // robot holding the object, or -1
    std::vector<int> support;  // object the object rests on, or -1
    std::vector<int> table;    // table the object rests on, or -1
    std::vector<int> held;     // object held by each robot, or -1
    std::vector<bool> moved;

    SymbolicState(const Scene& s)
        : holder(static_cast<std::size_t>(s.num_objects()), -1),
          support(static_cast<std::size_t>(s.num_objects()), -1),
          table(static_cast<std::size_t>(s.num_objects())),
          held(s.robots.size(), -1),
          moved(static_cast<std::size_t>(s.num_objects()), false) {
        for (int o = 0; o < s.num_objects(); ++o) table[static_cast<std::size_t>(o)] = s.object(o).table;
    }

    bool clear(int o) const {
        if (holder[static_cast<std::size_t>(o)] >= 0) return false;
        return std::find(support.begin(), support.end(), o) == support.end();
    }

    /// Validates and applies an action; throws Error on symbolic violations.
    void apply(const Scene& s, const Action& a) {
        const int n = s.num_objects();
        const int nr = static_cast<int>(s.robots.size());
        auto bad = [&](const std::string& why) { throw Error("invalid action '" + to_string(a) + "': " + why); };
        if (a.object < 0 || a.object >= n) bad("unknown object");
        if (a.robot < 0 || a.robot >= nr) bad("unknown robot");
        const auto o = static_cast<std::size_t>(a.object);
        const auto r = static_cast<std::size_t>(a.robot);
        switch (a.verb) {
            case Verb::Pick:
                if (held[r] >= 0) bad("robot already holds an object");
                if (!clear(a.object)) bad("object is not clear");
                holder[o] = a.robot;
                held[r] = a.object;
                support[o] = -1;
                table[o] = -1;
                moved[o] = true;
                break;
            case Verb::Place:
                if (holder[o] != a.robot) bad("robot does not hold the object");
                if (a.target_kind == TargetKind::Table) {
                    if (a.target < 0 || a.target >= static_cast<int>(s.tables.size())) bad("unknown table");
                    table[o] = a.target;
                } else if (a.target_kind == TargetKind::Object) {
                    if (a.target < 0 || a.target >= n || a.target == a.object) bad("bad support");
                    if (!s.is_block(a.target)) bad("only blocks can support objects");
                    if (!clear(a.target)) bad("support is not clear");
                    support[o] = a.target;
                } else {
                    bad("place needs a table or object target");
                }
                holder[o] = -1;
                held[r] = -1;
                break;
            case Verb::Handover:
                if (holder[o] != a.robot) bad("robot does not hold the object");
                if (a.target_kind != TargetKind::Robot || a.target < 0 || a.target >= nr || a.target == a.robot) {
                    bad("handover needs another robot");
                }
                if (held[static_cast<std::size_t>(a.target)] >= 0) bad("receiving robot is busy");
                holder[o] = a.target;
                held[static_cast<std::size_t>(a.target)] = a.object;
                held[r] = -1;
                break;
        }
    }
};

/// Rough world position of an object for reachability-biased sampling.
std::pair<double, double> estimate(const Scene& s, const SymbolicState& st, int o) {
    const auto oi = static_cast<std::size_t>(o);
    if (!st.moved[oi]) return {s.object(o).x, s.object(o).y};
    if (st.holder[oi] >= 0) {
        const Robot& r = s.robots[static_cast<std::size_t>(st.holder[oi])];
        return {r.x, r.y};
    }
    if (st.support[oi] >= 0) return estimate(s, st, st.support[oi]);
    const Table& t = s.tables[static_cast<std::size_t>(st.table[oi])];
    return {0.5 * (t.xmin + t.xmax), 0.5 * (t.ymin + t.ymax)};
}

bool reaches(const Robot& r, std::pair<double, double> p) { return std::hypot(p.first - r.x, p.second - r.y) <= r.reach; }

}  // namespace

ActionSequence random_actions(const Scene& scene, int length, std::uint64_t rng_seed) {
    if (length < 1) throw Error("random_actions: length must be >= 1");
    if (scene.robots.empty() || scene.num_objects() == 0) throw Error("random_actions: scene needs robots and objects");
    std::mt19937_64 rng(rng_seed);
    std::bernoulli_distribution coin(0.5);
    SymbolicState st(scene);
    ActionSequence seq;
    const int n = scene.num_objects();
    const int nr = static_cast<int>(scene.robots.size());

    while (static_cast<int>(seq.size()) < length) {
        std::vector<int> holding, free;
        for (int r = 0; r < nr; ++r) (st.held[static_cast<std::size_t>(r)] >= 0 ? holding : free).push_back(r);
        Action a;
        const bool release = !holding.empty() && (free.empty() || uniform(rng, 0, 1) < 0.7);
        if (release) {
            a.robot = holding[static_cast<std::size_t>(pick_index(rng, holding.size()))];
            a.object = st.held[static_cast<std::size_t>(a.robot)];
            if (!free.empty() && uniform(rng, 0, 1) < 0.2) {
                a.verb = Verb::Handover;
                a.target_kind = TargetKind::Robot;
                a.target = free[static_cast<std::size_t>(pick_index(rng, free.size()))];
            } else {
                a.verb = Verb::Place;
                std::vector<int> supports;
                if (scene.is_block(a.object)) {
                    for (int b = 0; b < static_cast<int>(scene.blocks.size()); ++b) {
                        if (b != a.object && st.clear(b)) supports.push_back(b);
                    }
                }
                if (!supports.empty() && uniform(rng, 0, 1) < 0.6) {
                    a.target_kind = TargetKind::Object;
                    a.target = supports[static_cast<std::size_t>(pick_index(rng, supports.size()))];
                } else {
                    a.target_kind = TargetKind::Table;
                    const Robot& rb = scene.robots[static_cast<std::size_t>(a.robot)];
                    std::vector<int> near;
                    for (int t = 0; t < static_cast<int>(scene.tables.size()); ++t) {
                        const Table& tb = scene.tables[static_cast<std::size_t>(t)];
                        if (reaches(rb, {0.5 * (tb.xmin + tb.xmax), 0.5 * (tb.ymin + tb.ymax)})) near.push_back(t);
                    }
                    if (!near.empty() && coin(rng)) {
                        a.target = near[static_cast<std::size_t>(pick_index(rng, near.size()))];
                    } else {
                        a.target = pick_index(rng, scene.tables.size());
                    }
                }
            }
        } else {
            a.verb = Verb::Pick;
            std::vector<int> candidates;
            std::vector<double> weights;
            for (int o = 0; o < n; ++o) {
                if (!st.clear(o)) continue;
                candidates.push_back(o);
                weights.push_back(scene.is_block(o) ? 3.0 : 1.0);
            }
            std::discrete_distribution<int> pick(weights.begin(), weights.end());
            a.object = candidates[static_cast<std::size_t>(pick(rng))];
            std::vector<int> near;
            for (int r : free) {
                if (reaches(scene.robots[static_cast<std::size_t>(r)], estimate(scene, st, a.object))) near.push_back(r);
            }
            if (!near.empty() && coin(rng)) {
                a.robot = near[static_cast<std::size_t>(pick_index(rng, near.size()))];
            } else {
                a.robot = free[static_cast<std::size_t>(pick_index(rng, free.size()))];
            }
        }
        st.apply(scene, a);
        seq.push_back(a);
    }
    return seq;
}

FactoredNlp compile(const Scene& scene, const ActionSequence& actions, std::vector<std::string>* names) {
    const int n = scene.num_objects();
    const int nr = static_cast<int>(scene.robots.size());
    const int frames = static_cast<int>(actions.size()) + 1;
    FactoredNlp g;
    if (names) names->clear();
    auto label = [&](const std::string& s) {
        if (names) names->push_back(s);
    };
    auto oname = [&](int o) { return (scene.is_block(o) ? "b" : "x") + std::to_string(scene.is_block(o) ? o : o - static_cast<int>(scene.blocks.size())); };

    std::vector<std::vector<int>> q(static_cast<std::size_t>(frames)), rel(q.size()), abs(q.size());
    SymbolicState st(scene);
    SymbolicState prev = st;

    for (int t = 0; t < frames; ++t) {
        const auto ti = static_cast<std::size_t>(t);
        const Action* act = t > 0 ? &actions[ti - 1] : nullptr;
        prev = st;
        if (act) st.apply(scene, *act);
        const int switched = act ? act->object : -1;

        for (int r = 0; r < nr; ++r) {
            const Robot& rb = scene.robots[static_cast<std::size_t>(r)];
            q[ti].push_back(g.add_variable(2, VarClass::RobotConfig, t, {rb.x, rb.y, rb.theta}));
            label("q" + std::to_string(r) + "@" + std::to_string(t));
        }

        // Unary information for each relative pose, folded into its geometry.
        struct RelInfo {
            bool ref = false, grasp = false, on_table = false, on_object = false;
            double box[4] = {0, 0, 0, 0};
        };
        std::vector<RelInfo> info(static_cast<std::size_t>(n));
        for (int o = 0; o < n; ++o) {
            const auto oi = static_cast<std::size_t>(o);
            const Object& ob = scene.object(o);
            RelInfo& ri = info[oi];
            ri.ref = !st.moved[oi];
            if (o == switched) {
                ri.grasp = act->verb != Verb::Place;
                if (act->verb == Verb::Place && act->target_kind == TargetKind::Table) {
                    const Table& tb = scene.tables[static_cast<std::size_t>(act->target)];
                    ri.on_table = true;
                    ri.box[0] = tb.xmin + ob.half;
                    ri.box[1] = tb.ymin + ob.half;
                    ri.box[2] = tb.xmax - ob.half;
                    ri.box[3] = tb.ymax - ob.half;
                } else if (act->verb == Verb::Place) {
                    const double h = 0.5 * scene.object(act->target).half;
                    ri.on_object = true;
                    ri.box[0] = -h;
                    ri.box[1] = -h;
                    ri.box[2] = h;
                    ri.box[3] = h;
                }
            }
            rel[ti].push_back(g.add_variable(2, VarClass::ObjectRelPose, t,
                                             {ob.x, ob.y, double(ri.ref), double(ri.grasp), double(ri.on_table),
                                              double(ri.on_object), ri.box[0], ri.box[1], ri.box[2], ri.box[3]}));
            label(oname(o) + ".rel@" + std::to_string(t));
        }
        for (int o = 0; o < n; ++o) {
            const Object& ob = scene.object(o);
            abs[ti].push_back(g.add_variable(2, VarClass::ObjectAbsPose, t, {ob.half, ob.half}));
            label(oname(o) + ".abs@" + std::to_string(t));
        }

        for (int r = 0; r < nr; ++r) {
            const Robot& rb = scene.robots[static_cast<std::size_t>(r)];
            if (t == 0) {
                g.add_constraint(ConstraintKind::Ref, {q[ti][static_cast<std::size_t>(r)]}, {rb.x, rb.y});
            } else {
                g.add_constraint(ConstraintKind::Reach, {q[ti][static_cast<std::size_t>(r)]}, {rb.x, rb.y, rb.reach});
            }
        }

        // Parent variable of an object at keyframe t under a given state.
        auto parent_var = [&](const SymbolicState& s, int o) -> int {
            const auto oi = static_cast<std::size_t>(o);
            if (s.holder[oi] >= 0) return q[ti][static_cast<std::size_t>(s.holder[oi])];
            if (s.support[oi] >= 0) return abs[ti][static_cast<std::size_t>(s.support[oi])];
            return -1;
        };

        for (int o = 0; o < n; ++o) {
            const auto oi = static_cast<std::size_t>(o);
            const Object& ob = scene.object(o);
            const int a_t = rel[ti][oi];
            if (info[oi].ref) g.add_constraint(ConstraintKind::Ref, {a_t}, {ob.x, ob.y});
            if (t > 0) {
                const int a_prev = rel[ti - 1][oi];
                if (o != switched) {
                    g.add_constraint(ConstraintKind::Equal, {a_prev, a_t}, {});
                } else {
                    const int pp = parent_var(prev, o);
                    const int np = parent_var(st, o);
                    std::vector<int> scope;
                    if (pp >= 0) scope.push_back(pp);
                    scope.push_back(a_prev);
                    if (np >= 0) scope.push_back(np);
                    scope.push_back(a_t);
                    g.add_constraint(ConstraintKind::Kin, scope, {double(pp >= 0), double(np >= 0)});
                    if (info[oi].grasp) g.add_constraint(ConstraintKind::Grasp, {a_t}, {kGraspTolerance});
                    if (info[oi].on_table || info[oi].on_object) {
                        const auto& b = info[oi].box;
                        g.add_constraint(ConstraintKind::Pos, {a_t}, {b[0], b[1], b[2], b[3]});
                    }
                }
            }
            const int parent = parent_var(st, o);
            if (parent >= 0) {
                g.add_constraint(ConstraintKind::PoseDiff, {abs[ti][oi], a_t, parent}, {});
            } else {
                g.add_constraint(ConstraintKind::PoseDiff, {abs[ti][oi], a_t}, {});
            }
        }

        // Collision among objects and grippers, skipping pairs that touch by design:
        // an object with its ancestors (and, at a switch, its previous ancestors).
        const int entities = n + nr;  // objects first, then robots
        std::vector<std::vector<bool>> exempt(static_cast<std::size_t>(entities),
                                              std::vector<bool>(static_cast<std::size_t>(entities), false));
        auto ancestors = [&](const SymbolicState& s, int o, std::vector<int>& out) {
            int cur = o;
            while (true) {
                const auto ci = static_cast<std::size_t>(cur);
                if (s.holder[ci] >= 0) {
                    out.push_back(n + s.holder[ci]);
                    return;
                }
                if (s.support[ci] < 0) return;
                cur = s.support[ci];
                out.push_back(cur);
            }
        };
        for (int o = 0; o < n; ++o) {
            std::vector<int> group{o};
            ancestors(st, o, group);
            if (o == switched) ancestors(prev, o, group);
            for (int a : group) {
                for (int b : group) exempt[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] = true;
            }
        }
        auto entity_var = [&](int e) { return e < n ? abs[ti][static_cast<std::size_t>(e)] : q[ti][static_cast<std::size_t>(e - n)]; };
        auto radius = [&](int e) { return e < n ? scene.object(e).half : kGripperRadius; };
        for (int a = 0; a < entities; ++a) {
            for (int b = a + 1; b < entities; ++b) {
                if (exempt[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)]) continue;
                g.add_constraint(ConstraintKind::Collision, {entity_var(a), entity_var(b)}, {radius(a), radius(b), 0.0});
            }
        }
    }
    return g;
}

PlantedInstance planted_instance(const PlantSpec& spec) {
    std::mt19937_64 rng(spec.rng_seed);
    PlantedInstance out;
    FactoredNlp& g = out.graph;
    std::vector<int> anchors;  // variables fillers may attach to
    auto rel_var = [&](double x, double y, bool ref, bool grasp, const double* box) {
        std::vector<double> geo{x, y, double(ref), double(grasp), box ? 1.0 : 0.0, 0.0, 0, 0, 0, 0};
        if (box) std::copy(box, box + 4, geo.begin() + 6);
        return g.add_variable(2, VarClass::ObjectRelPose, 0, geo);
    };

    // Plant kinds are interleaved so variable ids of different plants mix.
    std::vector<int> order;
    order.insert(order.end(), static_cast<std::size_t>(spec.contradictory_refs), 0);
    order.insert(order.end(), static_cast<std::size_t>(spec.unreachable_grasps), 1);
    order.insert(order.end(), static_cast<std::size_t>(spec.blocked_placements), 2);
    std::shuffle(order.begin(), order.end(), rng);

    for (int kind : order) {
        std::vector<int> conflict;
        if (kind == 0) {
            const double x = uniform(rng, -1, 1), y = uniform(rng, -1, 1);
            const double ang = uniform(rng, 0, 2 * std::numbers::pi), d = uniform(rng, 0.5, 1.0);
            const int v = rel_var(x, y, true, false, nullptr);
            g.add_constraint(ConstraintKind::Ref, {v}, {x, y});
            g.add_constraint(ConstraintKind::Ref, {v}, {x + d * std::cos(ang), y + d * std::sin(ang)});
            conflict = {v};
        } else if (kind == 1) {
            const double bx = uniform(rng, -1, 1), by = uniform(rng, -1, 1);
            const double ang = uniform(rng, 0, 2 * std::numbers::pi), d = kReachRadius + uniform(rng, 0.2, 0.6);
            const double ox = bx + d * std::cos(ang), oy = by + d * std::sin(ang);
            const int start = rel_var(ox, oy, true, false, nullptr);
            g.add_constraint(ConstraintKind::Ref, {start}, {ox, oy});
            const int robot = g.add_variable(2, VarClass::RobotConfig, 0, {bx, by, uniform(rng, -3, 3)});
            g.add_constraint(ConstraintKind::Reach, {robot}, {bx, by, kReachRadius});
            const int held = rel_var(ox, oy, false, true, nullptr);
            g.add_constraint(ConstraintKind::Grasp, {held}, {kGraspTolerance});
            g.add_constraint(ConstraintKind::Kin, {start, robot, held}, {0.0, 1.0});
            conflict = {start, robot, held};
        } else {
            const double cx = uniform(rng, -1, 1), cy = uniform(rng, -1, 1);
            const double big = uniform(rng, 0.08, 0.1), small = uniform(rng, 0.04, 0.05);
            const int obst_rel = rel_var(cx, cy, true, false, nullptr);
            g.add_constraint(ConstraintKind::Ref, {obst_rel}, {cx, cy});
            const int obst_abs = g.add_variable(2, VarClass::ObjectAbsPose, 0, {big, big});
            g.add_constraint(ConstraintKind::PoseDiff, {obst_abs, obst_rel}, {});
            const double box[4] = {cx - 0.02, cy - 0.02, cx + 0.02, cy + 0.02};
            const int obj_rel = rel_var(cx + 0.3, cy, false, false, box);
            g.add_constraint(ConstraintKind::Pos, {obj_rel}, {box[0], box[1], box[2], box[3]});
            const int obj_abs = g.add_variable(2, VarClass::ObjectAbsPose, 0, {small, small});
            g.add_constraint(ConstraintKind::PoseDiff, {obj_abs, obj_rel}, {});
            g.add_constraint(ConstraintKind::Collision, {obst_abs, obj_abs}, {big, small, 0.0});
            conflict = {obst_rel, obst_abs, obj_rel, obj_abs};
        }
        std::sort(conflict.begin(), conflict.end());
        anchors.insert(anchors.end(), conflict.begin(), conflict.end());
        out.conflicts.push_back(conflict);
    }

    // Fillers form a forest of otherwise unconstrained variables, so they can
    // never take part in a conflict.
    for (int k = 0; k < spec.filler; ++k) {
        if (anchors.empty()) {
            anchors.push_back(rel_var(uniform(rng, -1, 1), uniform(rng, -1, 1), false, false, nullptr));
            continue;
        }
        const int to = anchors[static_cast<std::size_t>(pick_index(rng, anchors.size()))];
        if (uniform(rng, 0, 1) < 0.5) {
            const int f = rel_var(uniform(rng, -1, 1), uniform(rng, -1, 1), false, false, nullptr);
            g.add_constraint(ConstraintKind::Equal, {f, to}, {});
            anchors.push_back(f);
        } else {
            const double h = uniform(rng, 0.04, 0.1);
            const int f = g.add_variable(2, VarClass::ObjectAbsPose, 0, {h, h});
            g.add_constraint(ConstraintKind::Collision, {to, f}, {0.05, h, 0.0});
            anchors.push_back(f);
        }
    }
    std::sort(out.conflicts.begin(), out.conflicts.end());
    return out;
}

Regime regime_by_name(const std::string& name) {
    if (name == "train") return {"train", 3, 2, 2, 4, 7};
    if (name == "+blocks") return {"+blocks", 5, 2, 2, 4, 7};
    if (name == "+robots") return {"+robots", 3, 2, 3, 4, 7};
    if (name == "+actions") return {"+actions", 3, 2, 2, 8, 10};
    throw Error("unknown regime '" + name + "' (expected train, +blocks, +robots or +actions)");
}

std::vector<std::string> regime_names() { return {"train", "+blocks", "+robots", "+actions"}; }

}  // namespace cnet
