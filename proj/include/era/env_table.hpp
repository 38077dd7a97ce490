#pragma once

#include <array>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "era/env_common.hpp"
#include "era/response.hpp"
#include "era/vocab.hpp"

namespace era {

// MiniTable: a deterministic tabletop workspace with integer coordinates,
// teleport-to-pose gripper motion, and 7-component discrete actions.

struct TableObject {
    std::string name;       // simulator name, e.g. "Shape_3"
    std::string real_name;  // e.g. "small star", "sponge", "shape sorter"
    std::array<double, 3> rgb{};
    Shape shape = Shape::Cube;
    std::array<int, 3> coord{};
    bool container = false;

    bool operator==(const TableObject&) const = default;
};

struct GripperState {
    std::array<int, 3> coord{50, 50, 40};
    std::array<int, 3> orientation{0, 60, 0};
    bool closed = false;
    std::string held;  // object name, empty when free

    bool operator==(const GripperState&) const = default;
};

struct TableState {
    std::vector<TableObject> objects;  // insertion order; rendering sorts by Y
    GripperState gripper;
    int step = 0;
    std::set<std::string> approached;  // target objects already approached

    const TableObject* find_object(const std::string& name) const;
    bool operator==(const TableState&) const = default;
};

enum class ManipTemplate : uint8_t { PlaceContainer, PlaceSorter };

struct ManipGoal {
    std::string target;
    std::string container;
    int xy_radius = 5;
};

struct ManipTask {
    std::string instruction;
    ManipTemplate tmpl = ManipTemplate::PlaceContainer;
    int paraphrase = 0;
    std::vector<std::string> target_objects;  // instruction-referenced object names
    ManipGoal goal;
    int horizon = 15;
    Split split = Split::Seen;
    uint64_t seed = 0;
    // Slot fillers for the token form.
    int target_color = 0;
    Shape target_shape = Shape::Star;
    int container_color = 0;

    std::string to_json() const;
    static ManipTask from_json(const std::string& text);
    TokenSeq tokens(const Vocabulary& v) const;
};

struct TableStepResult {
    TableState state;
    Feedback feedback;
    bool done = false;
    TerminalKind terminal = TerminalKind::None;
    std::vector<std::string> approach_events;  // first approach per target object
};

struct SceneEntry {
    int color = 0;
    Shape shape = Shape::Cube;
    std::array<int, 3> coord{};

    bool operator==(const SceneEntry&) const = default;
};

inline constexpr int kGraspRadius = 3;
inline constexpr int kHoverOffset = 10;

std::pair<TableState, Observation> reset_table(const Vocabulary& v, const ManipTask& task,
                                               uint64_t seed);
TableStepResult step_table(const Vocabulary& v, const TableState& s, const ManipTask& task,
                           const LowLevelAction& a, int approach_radius = 20);
TableStepResult step_table_unparsed(const Vocabulary& v, const TableState& s,
                                    const ManipTask& task);

// Objects sorted by Y ascending, colors classified from RGB.
std::vector<SceneEntry> ground_truth_scene(const TableState& s);

// The additional_info JSON body: {"object 1": [x, y, z], ...} in Y order.
std::string additional_info_json(const TableState& s);

Observation render_observation_table(const Vocabulary& v, const TableState& s);

std::vector<LowLevelAction> expert_plan_low(const ManipTask& task, const TableState& s);

bool manip_goal_satisfied(const TableState& s, const ManipTask& task);

std::vector<ManipTask> manip_task_suite(Split split, int count, uint64_t seed);

}  // namespace era
