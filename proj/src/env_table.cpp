#include "era/env_table.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

namespace era {

namespace {

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a * 0x9E3779B97F4A7C15ull + b + 0x2545F4914F6CDD1Dull;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

uint64_t fnv1a(std::string_view s, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

const char* kValidFeedback = "Last action was successful.";

double dist3(const std::array<int, 3>& a, const std::array<int, 3>& b) {
    double s = 0;
    for (int i = 0; i < 3; ++i) {
        double d = a[static_cast<size_t>(i)] - b[static_cast<size_t>(i)];
        s += d * d;
    }
    return std::sqrt(s);
}

double dist_xy(const std::array<int, 3>& a, const std::array<int, 3>& b) {
    double dx = a[0] - b[0];
    double dy = a[1] - b[1];
    return std::sqrt(dx * dx + dy * dy);
}

struct ObjSpec {
    std::string name;
    std::string real_name;
    int color;
    Shape shape;
    bool container;
};

// Scene composition (roles, shapes, colors, ordering) is a pure function of
// the task seed; only geometry varies with the reset seed.
struct Composition {
    std::vector<ObjSpec> objects;  // insertion order
    int target_index = -1;
    int container_index = -1;
};

const std::vector<Shape>& graspable_shapes() {
    static const std::vector<Shape> s = {Shape::Cube, Shape::Star, Shape::Moon,
                                         Shape::Cylinder, Shape::Triangular};
    return s;
}

Composition compose_scene(const ManipTask& task) {
    std::mt19937_64 rng(mix_seed(task.seed, 0xC0FFEE));
    Composition comp;
    std::uniform_int_distribution<int> n_extra(3, 5);
    const int extras = n_extra(rng);

    std::vector<ObjSpec> specs;
    auto size_word = [&rng]() {
        std::uniform_int_distribution<int> d(0, 1);
        return d(rng) == 0 ? std::string("small") : std::string("big");
    };
    // Target object.
    ObjSpec target{"?", size_word() + " " + std::string(shape_name(task.target_shape)),
                   task.target_color, task.target_shape, false};
    // Container object.
    const bool sorter = task.tmpl == ManipTemplate::PlaceSorter;
    ObjSpec container{"?", sorter ? "shape sorter" : size_word() + " container",
                      task.container_color, sorter ? Shape::ShapeSorter : Shape::Container,
                      true};
    specs.push_back(target);
    specs.push_back(container);

    std::uniform_int_distribution<int> color_d(0, kNumColors - 1);
    std::uniform_int_distribution<size_t> shape_d(0, graspable_shapes().size() - 1);
    std::uniform_int_distribution<int> sponge_d(0, 9);
    for (int i = 0; i < extras; ++i) {
        if (sponge_d(rng) < 2) {
            specs.push_back({"?", "sponge", color_d(rng), Shape::Sponge, false});
            continue;
        }
        Shape sh = graspable_shapes()[shape_d(rng)];
        int col = color_d(rng);
        // Keep the instruction reference unambiguous: no distractor shares the
        // target shape, and no second container shares the container color.
        while (sh == task.target_shape) sh = graspable_shapes()[shape_d(rng)];
        specs.push_back({"?", size_word() + " " + std::string(shape_name(sh)), col, sh, false});
    }

    std::shuffle(specs.begin(), specs.end(), rng);
    for (size_t i = 0; i < specs.size(); ++i) {
        specs[i].name = "Shape_" + std::to_string(i + 1);
        if (specs[i].container) comp.container_index = static_cast<int>(i);
        else if (specs[i].shape == task.target_shape && specs[i].color == task.target_color)
            comp.target_index = static_cast<int>(i);
    }
    comp.objects = std::move(specs);
    return comp;
}

struct ManipTemplateDef {
    std::vector<std::string_view> patterns;  // {tc} target color, {ts} target shape, {cc} container color
};

const ManipTemplateDef& manip_template_def(ManipTemplate t) {
    static const ManipTemplateDef place_container = {{
        "Pick up the {ts} and place it into the {cc} container.",
        "Put the {tc} {ts} into the {cc} container.",
        "Move the {ts} into the {cc} container.",
        "Grab the {tc} {ts} and drop it into the {cc} container.",
        "Transfer the {ts} over into the {cc} container.",
        "Set the {tc} {ts} down inside the {cc} container.",
    }};
    static const ManipTemplateDef place_sorter = {{
        "Pick up the {ts} and place it into the shape sorter.",
        "Put the {tc} {ts} into the shape sorter.",
        "Move the {ts} into the shape sorter.",
        "Grab the {tc} {ts} and drop it into the shape sorter.",
        "Transfer the {ts} over into the shape sorter.",
        "Set the {tc} {ts} down inside the shape sorter.",
    }};
    return t == ManipTemplate::PlaceSorter ? place_sorter : place_container;
}

std::string expand_manip_pattern(std::string_view pattern, const ManipTask& t) {
    std::string out;
    for (size_t i = 0; i < pattern.size();) {
        if (pattern.substr(i, 4) == "{tc}") {
            out += color_name(t.target_color);
            i += 4;
        } else if (pattern.substr(i, 4) == "{ts}") {
            out += shape_name(t.target_shape);
            i += 4;
        } else if (pattern.substr(i, 4) == "{cc}") {
            out += color_name(t.container_color);
            i += 4;
        } else {
            out += pattern[i++];
        }
    }
    return out;
}

}  // namespace

const TableObject* TableState::find_object(const std::string& name) const {
    for (const auto& o : objects)
        if (o.name == name) return &o;
    return nullptr;
}

std::string ManipTask::to_json() const {
    nlohmann::json j;
    j["instruction"] = instruction;
    j["template"] = tmpl == ManipTemplate::PlaceSorter ? "place_sorter" : "place_container";
    j["paraphrase"] = paraphrase;
    j["target_objects"] = target_objects;
    j["goal"] = {{"target", goal.target}, {"container", goal.container}, {"xy_radius", goal.xy_radius}};
    j["horizon"] = horizon;
    j["split"] = std::string(split_name(split));
    j["seed"] = seed;
    j["target_color"] = std::string(color_name(target_color));
    j["target_shape"] = std::string(shape_name(target_shape));
    j["container_color"] = std::string(color_name(container_color));
    return j.dump(2);
}

ManipTask ManipTask::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ManipTask t;
    t.instruction = j.at("instruction").get<std::string>();
    t.tmpl = j.at("template").get<std::string>() == "place_sorter" ? ManipTemplate::PlaceSorter
                                                                   : ManipTemplate::PlaceContainer;
    t.paraphrase = j.value("paraphrase", 0);
    t.target_objects = j.at("target_objects").get<std::vector<std::string>>();
    t.goal.target = j.at("goal").at("target").get<std::string>();
    t.goal.container = j.at("goal").at("container").get<std::string>();
    t.goal.xy_radius = j.at("goal").value("xy_radius", 5);
    t.horizon = j.value("horizon", 15);
    t.split = j.value("split", "seen") == std::string("unseen") ? Split::Unseen : Split::Seen;
    t.seed = j.value("seed", 0ull);
    t.target_color = color_index(j.at("target_color").get<std::string>());
    int sh = shape_index_of(j.at("target_shape").get<std::string>());
    if (sh < 0 || t.target_color < 0) throw UnknownTaskError("bad manip task slots");
    t.target_shape = static_cast<Shape>(sh);
    t.container_color = color_index(j.at("container_color").get<std::string>());
    return t;
}

TokenSeq ManipTask::tokens(const Vocabulary& v) const {
    TokenSeq out;
    out.push_back(v.require("instruction:"));
    out.push_back(v.require(tmpl == ManipTemplate::PlaceSorter ? "task:place_sorter"
                                                               : "task:place_container"));
    out.push_back(v.require("phr:" + std::to_string(paraphrase)));
    out.push_back(v.color_token(target_color));
    out.push_back(v.shape_token(target_shape));
    out.push_back(v.color_token(container_color));
    out.push_back(v.shape_token(tmpl == ManipTemplate::PlaceSorter ? Shape::ShapeSorter
                                                                   : Shape::Container));
    return out;
}

std::pair<TableState, Observation> reset_table(const Vocabulary& v, const ManipTask& task,
                                               uint64_t seed) {
    Composition comp = compose_scene(task);
    if (comp.target_index < 0 || comp.container_index < 0)
        throw UnknownTaskError("scene composition failed for task");

    std::mt19937_64 rng(mix_seed(task.seed, mix_seed(seed, 0x7AB1E)));
    const int n = static_cast<int>(comp.objects.size());

    // Distinct Y lanes so the left-to-right order is unambiguous.
    std::vector<int> lanes;
    for (int y = 10; y <= 95; y += 5) lanes.push_back(y);
    std::shuffle(lanes.begin(), lanes.end(), rng);
    lanes.resize(static_cast<size_t>(n));

    std::uniform_int_distribution<int> x_d(20, 85);
    std::uniform_int_distribution<int> jitter_d(0, 3);
    std::uniform_int_distribution<int> z_d(16, 18);
    std::uniform_real_distribution<double> rgb_j(-0.04, 0.04);

    TableState s;
    for (int i = 0; i < n; ++i) {
        const auto& spec = comp.objects[static_cast<size_t>(i)];
        TableObject o;
        o.name = spec.name;
        o.real_name = spec.real_name;
        o.shape = spec.shape;
        o.container = spec.container;
        const auto& base = color_palette()[static_cast<size_t>(spec.color)].rgb;
        for (int c = 0; c < 3; ++c)
            o.rgb[static_cast<size_t>(c)] =
                std::clamp(base[static_cast<size_t>(c)] + rgb_j(rng), 0.0, 1.0);
        o.coord = {x_d(rng), lanes[static_cast<size_t>(i)] + jitter_d(rng),
                   spec.container ? 17 : z_d(rng)};
        s.objects.push_back(std::move(o));
    }
    // The task must not start solved: keep the target well outside the goal
    // radius of the container.
    {
        const std::string& target_name =
            comp.objects[static_cast<size_t>(comp.target_index)].name;
        const std::string& container_name =
            comp.objects[static_cast<size_t>(comp.container_index)].name;
        const TableObject* container = s.find_object(container_name);
        for (auto& o : s.objects) {
            if (o.name != target_name) continue;
            if (dist_xy(o.coord, container->coord) <= task.goal.xy_radius + 8)
                o.coord[0] = container->coord[0] >= 52 ? container->coord[0] - 20
                                                       : container->coord[0] + 20;
        }
    }
    s.gripper = GripperState{};
    std::uniform_int_distribution<int> yaw_d(0, 3);
    s.gripper.orientation = {0, 60, yaw_d(rng) * 30};
    s.step = 0;
    return {s, render_observation_table(v, s)};
}

std::vector<SceneEntry> ground_truth_scene(const TableState& s) {
    std::vector<const TableObject*> order;
    for (const auto& o : s.objects) order.push_back(&o);
    std::stable_sort(order.begin(), order.end(),
                     [](const TableObject* a, const TableObject* b) {
                         return a->coord[1] < b->coord[1];
                     });
    std::vector<SceneEntry> out;
    for (const auto* o : order)
        out.push_back(SceneEntry{classify_color(o->rgb), o->shape, o->coord});
    return out;
}

std::string additional_info_json(const TableState& s) {
    auto scene = ground_truth_scene(s);
    std::ostringstream os;
    os << "{";
    for (size_t i = 0; i < scene.size(); ++i) {
        if (i > 0) os << ", ";
        os << "\"object " << (i + 1) << "\": [" << scene[i].coord[0] << ", "
           << scene[i].coord[1] << ", " << scene[i].coord[2] << "]";
    }
    os << "}";
    return os.str();
}

Observation render_observation_table(const Vocabulary& v, const TableState& s) {
    Observation obs;
    obs.text = additional_info_json(s);
    obs.tokens.push_back(v.require("observation:"));
    for (const auto& e : ground_truth_scene(s)) {
        obs.tokens.push_back(v.color_token(e.color));
        obs.tokens.push_back(v.shape_token(e.shape));
        for (int c : e.coord) obs.tokens.push_back(v.int_token(c));
    }
    obs.tokens.push_back(v.require("gripper:"));
    for (int c : s.gripper.coord) obs.tokens.push_back(v.int_token(c));
    obs.tokens.push_back(v.require(s.gripper.closed ? "grip:closed" : "grip:open"));
    return obs;
}

TableStepResult step_table(const Vocabulary& v, const TableState& prev, const ManipTask& task,
                           const LowLevelAction& a, int approach_radius) {
    (void)v;
    TableStepResult res;
    res.state = prev;
    TableState& s = res.state;
    s.step = prev.step + 1;

    if (!a.in_range()) {
        res.feedback = Feedback{"Last action is invalid. Action component out of range.", false,
                                InvalidReason::Range, ""};
    } else {
        const bool was_closed = s.gripper.closed;
        s.gripper.coord = {a.v[0], a.v[1], a.v[2]};
        s.gripper.orientation = {a.v[3], a.v[4], a.v[5]};
        s.gripper.closed = a.gripper() == 0;

        if (!s.gripper.held.empty()) {
            for (auto& o : s.objects)
                if (o.name == s.gripper.held) o.coord = s.gripper.coord;
        }
        if (!was_closed && s.gripper.closed && s.gripper.held.empty()) {
            // Closing attaches the nearest graspable object within reach.
            const TableObject* best = nullptr;
            double best_d = kGraspRadius + 1e-9;
            for (const auto& o : s.objects) {
                if (o.container) continue;
                double d = dist3(o.coord, s.gripper.coord);
                if (d <= best_d) {
                    best_d = d;
                    best = &o;
                }
            }
            if (best) {
                s.gripper.held = best->name;
                for (auto& o : s.objects)
                    if (o.name == s.gripper.held) o.coord = s.gripper.coord;
            }
        } else if (was_closed && !s.gripper.closed) {
            s.gripper.held.clear();
        }
        res.feedback = Feedback{kValidFeedback, true, InvalidReason::None, ""};
    }

    // First-approach bookkeeping mirrors the per-object status walk: at most
    // one un-approached target is marked per step.
    for (const auto& name : task.target_objects) {
        if (s.approached.count(name)) continue;
        const auto* o = s.find_object(name);
        if (!o) continue;
        if (dist3(o->coord, s.gripper.coord) <= approach_radius) {
            s.approached.insert(name);
            res.approach_events.push_back(name);
            break;
        }
    }

    if (manip_goal_satisfied(s, task)) {
        res.done = true;
        res.terminal = TerminalKind::Success;
    } else if (s.step >= task.horizon) {
        res.done = true;
        res.terminal = TerminalKind::StepLimit;
    }
    return res;
}

TableStepResult step_table_unparsed(const Vocabulary& v, const TableState& prev,
                                    const ManipTask& task) {
    (void)v;
    TableStepResult res;
    res.state = prev;
    res.state.step = prev.step + 1;
    res.feedback = Feedback{"Last action is invalid. The action could not be parsed.", false,
                            InvalidReason::Parse, ""};
    if (res.state.step >= task.horizon) {
        res.done = true;
        res.terminal = TerminalKind::StepLimit;
    }
    return res;
}

bool manip_goal_satisfied(const TableState& s, const ManipTask& task) {
    const auto* target = s.find_object(task.goal.target);
    const auto* container = s.find_object(task.goal.container);
    if (!target || !container) return false;
    if (s.gripper.held == target->name) return false;
    return dist_xy(target->coord, container->coord) <= task.goal.xy_radius;
}

std::vector<LowLevelAction> expert_plan_low(const ManipTask& task, const TableState& s) {
    const auto* target = s.find_object(task.goal.target);
    const auto* container = s.find_object(task.goal.container);
    if (!target || !container) throw UnsolvableError("goal objects missing from scene");
    const auto& ori = s.gripper.orientation;
    const int tx = target->coord[0], ty = target->coord[1], tz = target->coord[2];
    const int cx = container->coord[0], cy = container->coord[1], cz = container->coord[2];
    const int hover = std::min(tz + kHoverOffset, 100);
    auto act = [&](int x, int y, int z, int grip) {
        return LowLevelAction{{x, y, z, ori[0], ori[1], ori[2], grip}};
    };
    return {
        act(tx, ty, hover, 1),  // hover above the target, gripper open
        act(tx, ty, tz, 0),     // descend and close
        act(tx, ty, hover, 0),  // lift
        act(cx, cy, hover, 0),  // carry over the container
        act(cx, cy, cz, 1),     // lower and release
    };
}

std::vector<ManipTask> manip_task_suite(Split split, int count, uint64_t seed) {
    std::vector<ManipTask> out;
    std::mt19937_64 rng(mix_seed(seed, 0xBEEF));
    std::uniform_int_distribution<int> color_d(0, kNumColors - 1);
    std::uniform_int_distribution<size_t> shape_d(0, graspable_shapes().size() - 1);
    std::uniform_int_distribution<int> tmpl_d(0, 3);
    int tries = 0;
    while (static_cast<int>(out.size()) < count && tries < count * 400) {
        ++tries;
        ManipTask t;
        t.tmpl = tmpl_d(rng) == 0 ? ManipTemplate::PlaceSorter : ManipTemplate::PlaceContainer;
        t.target_color = color_d(rng);
        t.target_shape = graspable_shapes()[shape_d(rng)];
        t.container_color = color_d(rng);
        if (t.tmpl == ManipTemplate::PlaceContainer && t.container_color == t.target_color)
            continue;
        std::string key = std::string(shape_name(t.target_shape)) + "|" +
                          std::string(color_name(t.target_color)) + "|" +
                          std::string(color_name(t.container_color)) +
                          (t.tmpl == ManipTemplate::PlaceSorter ? "|sorter" : "");
        bool unseen_combo = (fnv1a(key) % 5) == 4;
        if ((split == Split::Unseen) != unseen_combo) continue;
        std::uniform_int_distribution<int> pd(split == Split::Seen ? 0 : 4,
                                              split == Split::Seen ? 3 : 5);
        t.paraphrase = pd(rng);
        t.split = split;
        t.seed = mix_seed(seed, out.size() + 0x51);
        t.instruction = expand_manip_pattern(
            manip_template_def(t.tmpl).patterns[static_cast<size_t>(t.paraphrase)], t);
        Composition comp = compose_scene(t);
        if (comp.target_index < 0 || comp.container_index < 0) continue;
        t.goal.target = comp.objects[static_cast<size_t>(comp.target_index)].name;
        t.goal.container = comp.objects[static_cast<size_t>(comp.container_index)].name;
        t.target_objects = {t.goal.target, t.goal.container};
        out.push_back(std::move(t));
    }
    if (static_cast<int>(out.size()) < count) throw UnknownTaskError("could not fill manip suite");
    return out;
}

}  // namespace era
