#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "era/context.hpp"
#include "era/env_house.hpp"
#include "era/env_table.hpp"
#include "era/policy.hpp"
#include "era/rewards.hpp"
#include "era/turn.hpp"

namespace era {

struct LengthMismatchError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class GAEMode : uint8_t { TurnLevel, TokenLevel };

struct GAEConfig {
    double gamma = 0.99;
    double lambda = 0.99;
    GAEMode mode = GAEMode::TurnLevel;
};

struct PPOConfig {
    double clip_eps = 0.2;
    double value_clip = 0.5;
    double entropy_coef = 0.001;
    double grad_clip_norm = 1.0;
    int epochs_per_batch = 1;
    int minibatch = 16;
    int critic_warmup_iters = 3;
    int rollout_envs = 50;
    int total_iters = 15;
    double actor_lr = 1e-3;
    double critic_lr = 1e-2;
    bool advantage_norm = false;
    double kl_coef = 0.0;  // regularization toward the cloned policy; off by default
    double temperature = 1.0;
};

// delta_t = r_t + gamma * V(x_{t+1}) - V(x_t), with V past the end pinned to 0.
std::vector<double> td_residuals(const std::vector<double>& rewards,
                                 const std::vector<double>& values, double gamma);

// Summation form: A_t = sum_l (gamma*lambda)^l delta_{t+l}.
std::vector<double> gae_turn(const std::vector<double>& deltas, double gamma, double lambda);

// Token chain: the turn reward sits on the final token of each turn.
std::vector<double> gae_token(const std::vector<double>& token_rewards,
                              const std::vector<double>& token_values, double gamma,
                              double lambda);

// Copies each turn's advantage onto all of its response tokens.
void broadcast_advantage(Trajectory& traj);

// Fills advantages and value-regression targets in place.
void compute_advantages(Trajectory& traj, const GAEConfig& gae);

struct TurnRecord {
    const Turn* turn = nullptr;
};

struct PolicyLossResult {
    double objective = 0.0;     // maximized clipped-surrogate value
    double mean_entropy = 0.0;  // per-token entropy average
};

// Clipped-surrogate objective over a minibatch; also accumulates the ascent
// gradient when grad != nullptr. ref_params enables the optional KL term.
PolicyLossResult ppo_policy_loss(const ModelConfig& model, const Params& params,
                                 const std::vector<TurnRecord>& batch, GAEMode mode,
                                 const PPOConfig& cfg, Params* grad,
                                 const Params* ref_params = nullptr);

// Half mean squared error against detached targets with a clipped update.
double value_loss_turn(const ModelConfig& model, const Params& vparams,
                       const std::vector<TurnRecord>& batch, double value_clip, Params* grad);
double value_loss_token(const ModelConfig& model, const Params& vtparams,
                        const std::vector<TurnRecord>& batch, double value_clip, Params* grad);

struct EpisodeSpec {
    EnvKind env = EnvKind::House;
    const HouseTask* house = nullptr;
    const ManipTask* manip = nullptr;
    ContextPolicy context;
    RewardConfig reward;
    double temperature = 1.0;
    uint64_t seed = 0;
    bool want_values = true;  // fill turn/token values from the critics
    GAEMode gae_mode = GAEMode::TurnLevel;
};

Trajectory run_episode(const Vocabulary& v, const ModelConfig& model, const Params& params,
                       const Params* vturn, const Params* vtok, const EpisodeSpec& spec);

struct TrainSetup {
    EnvKind env = EnvKind::House;
    std::vector<HouseTask> house_tasks;
    std::vector<ManipTask> manip_tasks;
    ContextPolicy context{ContextKind::SelfSummarization, 1};
    RewardConfig reward;
    GAEConfig gae;
    PPOConfig ppo;
    ModelConfig model;
};

struct IterationMetrics {
    int iter = 0;
    double mean_return = 0.0;
    double success_rate = 0.0;
    double subgoal_rate = 0.0;
    double invalid_rate = 0.0;
    double mean_q = 0.0;
    double mean_input_tokens = 0.0;
    double policy_loss = 0.0;
    double value_loss = 0.0;
    double entropy = 0.0;
};

std::string metrics_csv_header();
std::string metrics_csv_row(const IterationMetrics& m);

// Full PPO loop: per iteration, one episode per rollout worker from a frozen
// parameter snapshot, then minibatched updates. The actor is held constant
// during the critic warmup iterations. Deterministic per (setup, seed).
std::vector<IterationMetrics> train(const Vocabulary& v, const TrainSetup& setup, Params& params,
                                    Params& vturn, Params& vtok, uint64_t seed,
                                    const Params* ref_params = nullptr);

}  // namespace era
