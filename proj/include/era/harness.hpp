#pragma once

#include <optional>
#include <string>
#include <vector>

#include "era/priors.hpp"
#include "era/rl.hpp"

namespace era {

enum class EplPreset : uint8_t { None, RawOnly, TrajAug, EnvAncRaw, EnvAncTrajAug };

std::string_view epl_preset_name(EplPreset p);
std::optional<EplPreset> epl_preset_from_name(std::string_view name);

struct ExperimentConfig {
    std::string id = "exp";
    EnvKind env = EnvKind::House;
    int train_tasks = 24;
    int eval_episodes = 20;
    uint64_t task_seed = 1;
    ContextPolicy context{ContextKind::SelfSummarization, 1};
    RewardConfig reward;
    GAEConfig gae;
    PPOConfig ppo;
    ModelConfig model;  // vocab_size filled from the vocabulary when 0
    EplPreset epl = EplPreset::TrajAug;
    int epl_episodes = 72;
    int epl_traj_epochs = 2;
    int epl_anchored_epochs = 1;
    double epl_lr = 1e-3;
    int epl_anchored_samples = 300;
    std::vector<uint64_t> seeds = {1, 2, 3, 4, 5};

    std::string to_json() const;
    static ExperimentConfig from_json_text(const std::string& text);
    static ExperimentConfig load(const std::string& path);
    uint64_t config_hash() const;
};

struct MetricsRow {
    std::string experiment_id;
    uint64_t seed = 0;
    Split split = Split::Seen;
    double success_rate = 0.0;
    double subgoal_rate = 0.0;
    double invalid_action_rate = 0.0;
    double mean_q = 0.0;
    double mean_input_tokens = 0.0;
    int iterations = 0;
    double wall_time = 0.0;

    static std::string csv_header();
    std::string csv_row() const;
};

struct TrainedAgent {
    ModelConfig model;
    Params params;
    Params vturn;
    Params vtok;
};

// Greedy evaluation over a task suite; deterministic apart from wall_time.
MetricsRow run_eval(const Vocabulary& v, const ExperimentConfig& cfg, const TrainedAgent& agent,
                    Split split, uint64_t seed, std::vector<Trajectory>* out_trajs = nullptr);

// Supervised pretraining per the named preset; returns the cloned agent.
TrainedAgent run_epl(const Vocabulary& v, const ExperimentConfig& cfg, uint64_t seed);

// EPL (per preset) then PPO. Metrics rows per iteration land in iter_metrics.
TrainedAgent run_pipeline(const Vocabulary& v, const ExperimentConfig& cfg, uint64_t seed,
                          std::vector<IterationMetrics>* iter_metrics);

struct ErrorProxyCounts {
    int perception = 0;
    int reasoning = 0;
    int planning = 0;
};

ErrorProxyCounts error_proxy_counts(const std::vector<Trajectory>& trajs);

// Expands one named ablation grid, runs every cell over the config's seeds,
// and writes one CSV (plus per-cell deterministic iteration CSVs) under
// out_dir. Cells already on disk for the same (config hash, seed) are reused.
std::string run_ablation_suite(const Vocabulary& v, const std::string& suite,
                               const ExperimentConfig& base, const std::string& out_dir);

// Checkpoint serialization for the CLI.
std::string agent_to_json(const TrainedAgent& agent, const Vocabulary& v);
TrainedAgent agent_from_json(const std::string& text, const Vocabulary& v);

}  // namespace era
