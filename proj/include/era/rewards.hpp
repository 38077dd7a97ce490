#pragma once

#include <set>
#include <string>
#include <utility>
#include <vector>

#include "era/env_house.hpp"
#include "era/env_table.hpp"

namespace era {

enum class EnvKind : uint8_t { House, Table };

struct RewardConfig {
    double success_high = 4.0;
    double success_low = 3.0;
    double subgoal_unit = 1.0;
    double invalid_penalty = -0.5;
    double desc_bonus = 0.5;
    double desc_penalty = -0.5;
    double q_hi = 0.75;
    double q_lo = 0.25;
    int approach_radius = 20;  // workspace units
    bool use_subgoal = true;
    bool use_behavior = true;

    std::string to_json() const;
    static RewardConfig from_json(const std::string& text);
};

// First-time-only grant bookkeeping. High-level entries are predicate
// s-expressions, low-level entries are object names.
struct SubgoalLedger {
    std::set<std::string> granted;
};

struct RewardBreakdown {
    double success = 0.0;
    double subgoal = 0.0;
    double behavior = 0.0;
    double total = 0.0;
};

double success_reward(bool done_success, EnvKind kind, const RewardConfig& cfg);

double subgoal_reward_high(const std::vector<Predicate>& events, SubgoalLedger& ledger,
                           const RewardConfig& cfg);

// Walks un-approached targets in task order and grants at most one approach
// per turn, matching the per-object status dictionary semantics.
double subgoal_reward_low(const TableState& state, const ManipTask& task, SubgoalLedger& ledger,
                          const RewardConfig& cfg);

double behavior_reward_high(const Feedback& feedback, const RewardConfig& cfg);

using DescPair = std::pair<int, Shape>;  // (color, type)

// Positional matching ratio; N is the ground-truth count, extra predictions
// are ignored.
double matching_ratio(const std::vector<DescPair>& predicted, const std::vector<DescPair>& truth);

double behavior_reward_low(double q, const RewardConfig& cfg);

RewardBreakdown total_reward(double success, double subgoal, double behavior);

// Composite per-turn rewards, one per environment.
RewardBreakdown turn_reward_house(bool parsed, const Feedback& feedback,
                                  const std::vector<Predicate>& subgoal_events,
                                  bool done_success, SubgoalLedger& ledger,
                                  const RewardConfig& cfg);

struct TableTurnInfo {
    bool parsed = false;
    std::vector<DescPair> predicted;   // from the response's visual entries
    std::vector<DescPair> scene_truth; // pre-action ground truth
    bool done_success = false;
    double q = 0.0;  // filled by turn_reward_table
};

RewardBreakdown turn_reward_table(TableTurnInfo& info, const TableState& post_state,
                                  const ManipTask& task, SubgoalLedger& ledger,
                                  const RewardConfig& cfg);

std::vector<DescPair> scene_desc_pairs(const std::vector<SceneEntry>& scene);
std::vector<DescPair> visual_desc_pairs(const std::vector<VisualEntry>& visual);

}  // namespace era
