#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cnet/graph.hpp"

namespace cnet {

// Planar desk world. Robots are base-anchored grippers whose reachable set is
// a disc; objects are axis-aligned squares; tables are rectangles.

inline constexpr double kReachRadius = 0.8;
inline constexpr double kGripperRadius = 0.02;
inline constexpr double kGraspTolerance = 0.02;

struct Robot {
    double x = 0.0, y = 0.0, theta = 0.0;
    double reach = kReachRadius;
};

struct Object {
    double x = 0.0, y = 0.0;
    double half = 0.05;
    int table = 0;  // table the object starts on
};

struct Table {
    double xmin = 0.0, ymin = 0.0, xmax = 0.0, ymax = 0.0;
};

struct Scene {
    std::vector<Robot> robots;
    std::vector<Object> blocks;
    std::vector<Object> obstacles;
    std::vector<Table> tables;
    std::uint64_t rng_seed = 0;

    int num_objects() const { return static_cast<int>(blocks.size() + obstacles.size()); }
    /// Blocks first, then obstacles.
    const Object& object(int i) const;
    bool is_block(int i) const { return i < static_cast<int>(blocks.size()); }
};

enum class Verb { Pick, Place, Handover };
enum class TargetKind { None, Table, Object, Robot };

struct Action {
    Verb verb = Verb::Pick;
    int object = 0;
    int robot = 0;
    TargetKind target_kind = TargetKind::None;
    int target = -1;

    bool operator==(const Action&) const = default;
};

using ActionSequence = std::vector<Action>;

std::string to_string(const Action& a);

/// Rejection-sampled scene; throws Error when the sampling budget runs out.
Scene random_scene(int n_blocks, int n_obstacles, int n_robots, std::uint64_t rng_seed);

/// Symbolically valid sequence of `length` actions, biased toward stacking
/// blocks into towers.
ActionSequence random_actions(const Scene& scene, int length, std::uint64_t rng_seed);

/// Keyframe Factored-NLP of an action sequence: L actions give L+1 keyframes.
/// `names`, when given, receives a readable name per variable id.
FactoredNlp compile(const Scene& scene, const ActionSequence& actions, std::vector<std::string>* names = nullptr);

/// Micro-instance recipe with conflicts known by construction.
struct PlantSpec {
    int contradictory_refs = 0;
    int unreachable_grasps = 0;
    int blocked_placements = 0;
    int filler = 0;  // feasible variables attached to the plants
    std::uint64_t rng_seed = 0;
};

struct PlantedInstance {
    FactoredNlp graph;
    std::vector<std::vector<int>> conflicts;  // sorted variable ids
};

PlantedInstance planted_instance(const PlantSpec& spec);

/// Dataset regime: scene counts and action-length range.
struct Regime {
    std::string name;
    int n_blocks = 3;
    int n_obstacles = 2;
    int n_robots = 2;
    int min_length = 4;
    int max_length = 7;
};

/// train, +blocks, +robots, +actions.
Regime regime_by_name(const std::string& name);
std::vector<std::string> regime_names();

}  // namespace cnet
