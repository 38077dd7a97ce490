#pragma once

#include <vector>

#include "era/env_common.hpp"
#include "era/response.hpp"
#include "era/rewards.hpp"

namespace era {

// One environment interaction: what the policy saw, what it generated, and
// what came back.
struct Turn {
    TokenSeq state_input;          // x_t
    TokenSeq response;             // y_t
    ParseResult parsed = ParseFailure{ParseError::EmptyAction, ""};
    Feedback feedback;
    TokenSeq obs_tokens;           // observation part used to build x_t
    RewardBreakdown reward;
    double turn_value = 0.0;               // V(x_t) at rollout time
    std::vector<double> token_values;      // token-level mode only
    double advantage = 0.0;
    std::vector<double> token_advantages;  // token-level mode only
    double value_target = 0.0;
    std::vector<double> token_value_targets;
    std::vector<double> old_logps;         // per response token
    double q = 0.0;                        // description match ratio (table env)
    bool done_success = false;
};

struct Trajectory {
    std::vector<Turn> turns;
    TerminalKind terminal = TerminalKind::None;
    double episode_return = 0.0;
    int subgoals_hit = 0;
    int subgoals_total = 0;
};

}  // namespace era
