#include "era/rewards.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace era {

std::string RewardConfig::to_json() const {
    nlohmann::json j;
    j["success_high"] = success_high;
    j["success_low"] = success_low;
    j["subgoal_unit"] = subgoal_unit;
    j["invalid_penalty"] = invalid_penalty;
    j["desc_bonus"] = desc_bonus;
    j["desc_penalty"] = desc_penalty;
    j["q_hi"] = q_hi;
    j["q_lo"] = q_lo;
    j["approach_radius"] = approach_radius;
    j["use_subgoal"] = use_subgoal;
    j["use_behavior"] = use_behavior;
    return j.dump(2);
}

RewardConfig RewardConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RewardConfig c;
    c.success_high = j.value("success_high", c.success_high);
    c.success_low = j.value("success_low", c.success_low);
    c.subgoal_unit = j.value("subgoal_unit", c.subgoal_unit);
    c.invalid_penalty = j.value("invalid_penalty", c.invalid_penalty);
    c.desc_bonus = j.value("desc_bonus", c.desc_bonus);
    c.desc_penalty = j.value("desc_penalty", c.desc_penalty);
    c.q_hi = j.value("q_hi", c.q_hi);
    c.q_lo = j.value("q_lo", c.q_lo);
    c.approach_radius = j.value("approach_radius", c.approach_radius);
    c.use_subgoal = j.value("use_subgoal", c.use_subgoal);
    c.use_behavior = j.value("use_behavior", c.use_behavior);
    return c;
}

double success_reward(bool done_success, EnvKind kind, const RewardConfig& cfg) {
    if (!done_success) return 0.0;
    return kind == EnvKind::House ? cfg.success_high : cfg.success_low;
}

double subgoal_reward_high(const std::vector<Predicate>& events, SubgoalLedger& ledger,
                           const RewardConfig& cfg) {
    double r = 0.0;
    for (const auto& e : events) {
        const std::string key = e.sexpr();
        if (ledger.granted.count(key)) continue;
        ledger.granted.insert(key);
        r += cfg.subgoal_unit;
    }
    return r;
}

double subgoal_reward_low(const TableState& state, const ManipTask& task, SubgoalLedger& ledger,
                          const RewardConfig& cfg) {
    for (const auto& name : task.target_objects) {
        if (ledger.granted.count(name)) continue;
        const auto* o = state.find_object(name);
        if (!o) continue;
        double d2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            double d = o->coord[static_cast<size_t>(i)] -
                       state.gripper.coord[static_cast<size_t>(i)];
            d2 += d * d;
        }
        if (std::sqrt(d2) <= cfg.approach_radius) {
            ledger.granted.insert(name);
            return cfg.subgoal_unit;
        }
    }
    return 0.0;
}

double behavior_reward_high(const Feedback& feedback, const RewardConfig& cfg) {
    return feedback.valid ? 0.0 : cfg.invalid_penalty;
}

double matching_ratio(const std::vector<DescPair>& predicted,
                      const std::vector<DescPair>& truth) {
    if (truth.empty()) return 0.0;
    const size_t n = std::min(predicted.size(), truth.size());
    int matches = 0;
    for (size_t i = 0; i < n; ++i)
        if (predicted[i] == truth[i]) ++matches;
    return static_cast<double>(matches) / static_cast<double>(truth.size());
}

double behavior_reward_low(double q, const RewardConfig& cfg) {
    if (q > cfg.q_hi) return cfg.desc_bonus;
    if (q < cfg.q_lo) return cfg.desc_penalty;
    return 0.0;
}

RewardBreakdown total_reward(double success, double subgoal, double behavior) {
    RewardBreakdown b;
    b.success = success;
    b.subgoal = subgoal;
    b.behavior = behavior;
    b.total = success + subgoal + behavior;
    return b;
}

RewardBreakdown turn_reward_house(bool parsed, const Feedback& feedback,
                                  const std::vector<Predicate>& subgoal_events,
                                  bool done_success, SubgoalLedger& ledger,
                                  const RewardConfig& cfg) {
    const double success = success_reward(done_success, EnvKind::House, cfg);
    const double subgoal =
        cfg.use_subgoal ? subgoal_reward_high(subgoal_events, ledger, cfg) : 0.0;
    double behavior = 0.0;
    if (cfg.use_behavior) {
        // An unparsable response counts as an invalid action.
        behavior = (!parsed || !feedback.valid) ? cfg.invalid_penalty : 0.0;
    }
    return total_reward(success, subgoal, behavior);
}

RewardBreakdown turn_reward_table(TableTurnInfo& info, const TableState& post_state,
                                  const ManipTask& task, SubgoalLedger& ledger,
                                  const RewardConfig& cfg) {
    const double success = success_reward(info.done_success, EnvKind::Table, cfg);
    const double subgoal =
        cfg.use_subgoal ? subgoal_reward_low(post_state, task, ledger, cfg) : 0.0;
    double behavior = 0.0;
    info.q = info.parsed ? matching_ratio(info.predicted, info.scene_truth) : 0.0;
    if (cfg.use_behavior) {
        if (!info.parsed) {
            behavior = cfg.desc_penalty;  // unparsable description: q pinned to 0
        } else if (!info.scene_truth.empty()) {
            behavior = behavior_reward_low(info.q, cfg);
        }
    }
    return total_reward(success, subgoal, behavior);
}

std::vector<DescPair> scene_desc_pairs(const std::vector<SceneEntry>& scene) {
    std::vector<DescPair> out;
    out.reserve(scene.size());
    for (const auto& e : scene) out.emplace_back(e.color, e.shape);
    return out;
}

std::vector<DescPair> visual_desc_pairs(const std::vector<VisualEntry>& visual) {
    std::vector<DescPair> out;
    out.reserve(visual.size());
    for (const auto& e : visual) out.emplace_back(e.color, e.shape);
    return out;
}

}  // namespace era
