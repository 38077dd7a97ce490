#include "era/harness.hpp"

#include <nlohmann/json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace era {

namespace {

using nlohmann::json;

uint64_t fnv1a(std::string_view s, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

double now_seconds() {
    return std::chrono::duration<double>(
               std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

std::string_view epl_preset_name(EplPreset p) {
    switch (p) {
        case EplPreset::None: return "none";
        case EplPreset::RawOnly: return "raw";
        case EplPreset::TrajAug: return "traj_aug";
        case EplPreset::EnvAncRaw: return "env_anchored_raw";
        case EplPreset::EnvAncTrajAug: return "env_anchored_traj_aug";
    }
    return "none";
}

std::optional<EplPreset> epl_preset_from_name(std::string_view name) {
    for (int i = 0; i <= static_cast<int>(EplPreset::EnvAncTrajAug); ++i) {
        auto p = static_cast<EplPreset>(i);
        if (epl_preset_name(p) == name) return p;
    }
    return std::nullopt;
}

std::string ExperimentConfig::to_json() const {
    json j;
    j["id"] = id;
    j["env"] = env == EnvKind::House ? "house" : "table";
    j["train_tasks"] = train_tasks;
    j["eval_episodes"] = eval_episodes;
    j["task_seed"] = task_seed;
    j["context"] = context.name();
    j["reward"] = json::parse(reward.to_json());
    j["gae"] = {{"gamma", gae.gamma},
                {"lambda", gae.lambda},
                {"mode", gae.mode == GAEMode::TurnLevel ? "turn" : "token"}};
    j["ppo"] = {{"clip_eps", ppo.clip_eps},
                {"value_clip", ppo.value_clip},
                {"entropy_coef", ppo.entropy_coef},
                {"grad_clip_norm", ppo.grad_clip_norm},
                {"epochs_per_batch", ppo.epochs_per_batch},
                {"minibatch", ppo.minibatch},
                {"critic_warmup_iters", ppo.critic_warmup_iters},
                {"rollout_envs", ppo.rollout_envs},
                {"total_iters", ppo.total_iters},
                {"actor_lr", ppo.actor_lr},
                {"critic_lr", ppo.critic_lr},
                {"advantage_norm", ppo.advantage_norm},
                {"kl_coef", ppo.kl_coef},
                {"temperature", ppo.temperature}};
    j["model"] = {{"hidden", model.hidden},
                  {"emb", model.emb},
                  {"max_response_tokens", model.max_response_tokens},
                  {"init_scale", model.init_scale},
                  {"freeze_encoder", model.freeze_encoder}};
    j["epl"] = {{"preset", std::string(epl_preset_name(epl))},
                {"episodes", epl_episodes},
                {"traj_epochs", epl_traj_epochs},
                {"anchored_epochs", epl_anchored_epochs},
                {"lr", epl_lr},
                {"anchored_samples", epl_anchored_samples}};
    j["seeds"] = seeds;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
    const json j = json::parse(text);
    ExperimentConfig c;
    c.id = j.value("id", "exp");
    c.env = j.value("env", "house") == std::string("table") ? EnvKind::Table : EnvKind::House;
    c.train_tasks = j.value("train_tasks", c.train_tasks);
    c.eval_episodes = j.value("eval_episodes", c.eval_episodes);
    c.task_seed = j.value("task_seed", c.task_seed);
    c.context = ContextPolicy::parse(j.value("context", "ss1"));
    if (j.contains("reward")) c.reward = RewardConfig::from_json(j["reward"].dump());
    if (j.contains("gae")) {
        c.gae.gamma = j["gae"].value("gamma", c.gae.gamma);
        c.gae.lambda = j["gae"].value("lambda", c.gae.lambda);
        c.gae.mode = j["gae"].value("mode", "turn") == std::string("token")
                         ? GAEMode::TokenLevel
                         : GAEMode::TurnLevel;
    }
    if (j.contains("ppo")) {
        const auto& p = j["ppo"];
        c.ppo.clip_eps = p.value("clip_eps", c.ppo.clip_eps);
        c.ppo.value_clip = p.value("value_clip", c.ppo.value_clip);
        c.ppo.entropy_coef = p.value("entropy_coef", c.ppo.entropy_coef);
        c.ppo.grad_clip_norm = p.value("grad_clip_norm", c.ppo.grad_clip_norm);
        c.ppo.epochs_per_batch = p.value("epochs_per_batch", c.ppo.epochs_per_batch);
        c.ppo.minibatch = p.value("minibatch", c.ppo.minibatch);
        c.ppo.critic_warmup_iters = p.value("critic_warmup_iters", c.ppo.critic_warmup_iters);
        c.ppo.rollout_envs = p.value("rollout_envs", c.ppo.rollout_envs);
        c.ppo.total_iters = p.value("total_iters", c.ppo.total_iters);
        c.ppo.actor_lr = p.value("actor_lr", c.ppo.actor_lr);
        c.ppo.critic_lr = p.value("critic_lr", c.ppo.critic_lr);
        c.ppo.advantage_norm = p.value("advantage_norm", c.ppo.advantage_norm);
        c.ppo.kl_coef = p.value("kl_coef", c.ppo.kl_coef);
        c.ppo.temperature = p.value("temperature", c.ppo.temperature);
    }
    if (j.contains("model")) {
        const auto& m = j["model"];
        c.model.hidden = m.value("hidden", c.model.hidden);
        c.model.emb = m.value("emb", c.model.emb);
        c.model.max_response_tokens = m.value("max_response_tokens", c.model.max_response_tokens);
        c.model.init_scale = m.value("init_scale", c.model.init_scale);
        c.model.freeze_encoder = m.value("freeze_encoder", c.model.freeze_encoder);
    }
    if (j.contains("epl")) {
        const auto& e = j["epl"];
        auto preset = epl_preset_from_name(e.value("preset", "traj_aug"));
        if (!preset) throw std::invalid_argument("unknown epl preset");
        c.epl = *preset;
        c.epl_episodes = e.value("episodes", c.epl_episodes);
        c.epl_traj_epochs = e.value("traj_epochs", c.epl_traj_epochs);
        c.epl_anchored_epochs = e.value("anchored_epochs", c.epl_anchored_epochs);
        c.epl_lr = e.value("lr", c.epl_lr);
        c.epl_anchored_samples = e.value("anchored_samples", c.epl_anchored_samples);
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<uint64_t>>();
    if (c.seeds.empty()) throw std::invalid_argument("config needs at least one seed");
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open config: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

uint64_t ExperimentConfig::config_hash() const { return fnv1a(to_json()); }

std::string MetricsRow::csv_header() {
    return "experiment_id,seed,split,success_rate,subgoal_rate,invalid_action_rate,mean_q,"
           "mean_input_tokens,iterations,wall_time";
}

std::string MetricsRow::csv_row() const {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%s,%llu,%s,%.10g,%.10g,%.10g,%.10g,%.10g,%d,%.3f",
                  experiment_id.c_str(), static_cast<unsigned long long>(seed),
                  std::string(split_name(split)).c_str(), success_rate, subgoal_rate,
                  invalid_action_rate, mean_q, mean_input_tokens, iterations, wall_time);
    return buf;
}

namespace {

ModelConfig resolve_model(const Vocabulary& v, const ExperimentConfig& cfg) {
    ModelConfig m = cfg.model;
    if (m.vocab_size == 0) {
        auto base = ModelConfig::for_vocabulary(v);
        m.vocab_size = base.vocab_size;
        m.history_marker = base.history_marker;
        m.observation_marker = base.observation_marker;
    }
    if (cfg.env == EnvKind::Table && m.max_response_tokens < 64) m.max_response_tokens = 64;
    return m;
}

struct TaskPools {
    std::vector<HouseTask> house_seen, house_unseen;
    std::vector<ManipTask> manip_seen, manip_unseen;
};

TaskPools make_pools(const ExperimentConfig& cfg) {
    TaskPools p;
    if (cfg.env == EnvKind::House) {
        p.house_seen = house_task_suite(Split::Seen, cfg.train_tasks, cfg.task_seed);
        p.house_unseen = house_task_suite(Split::Unseen, cfg.eval_episodes, cfg.task_seed + 1);
    } else {
        p.manip_seen = manip_task_suite(Split::Seen, cfg.train_tasks, cfg.task_seed);
        p.manip_unseen = manip_task_suite(Split::Unseen, cfg.eval_episodes, cfg.task_seed + 1);
    }
    return p;
}

}  // namespace

MetricsRow run_eval(const Vocabulary& v, const ExperimentConfig& cfg, const TrainedAgent& agent,
                    Split split, uint64_t seed, std::vector<Trajectory>* out_trajs) {
    const double t0 = now_seconds();
    auto pools = make_pools(cfg);
    MetricsRow row;
    row.experiment_id = cfg.id;
    row.seed = seed;
    row.split = split;

    int64_t turns = 0, invalid = 0;
    double q_sum = 0.0, input_sum = 0.0, subgoal_frac = 0.0;
    int successes = 0;
    for (int ep = 0; ep < cfg.eval_episodes; ++ep) {
        EpisodeSpec spec;
        spec.env = cfg.env;
        if (cfg.env == EnvKind::House) {
            const auto& pool = split == Split::Seen ? pools.house_seen : pools.house_unseen;
            spec.house = &pool[static_cast<size_t>(ep) % pool.size()];
        } else {
            const auto& pool = split == Split::Seen ? pools.manip_seen : pools.manip_unseen;
            spec.manip = &pool[static_cast<size_t>(ep) % pool.size()];
        }
        spec.context = cfg.context;
        spec.reward = cfg.reward;
        spec.temperature = 0.0;  // greedy decoding
        spec.seed = seed * 1000003ull + static_cast<uint64_t>(ep);
        spec.want_values = false;
        auto traj = run_episode(v, resolve_model(v, cfg), agent.params, nullptr, nullptr, spec);
        successes += traj.terminal == TerminalKind::Success ? 1 : 0;
        if (traj.subgoals_total > 0)
            subgoal_frac += static_cast<double>(traj.subgoals_hit) / traj.subgoals_total;
        for (const auto& t : traj.turns) {
            ++turns;
            invalid += t.feedback.valid ? 0 : 1;
            q_sum += t.q;
            input_sum += count_tokens(t.state_input);
        }
        if (out_trajs) out_trajs->push_back(std::move(traj));
    }
    const double n = static_cast<double>(cfg.eval_episodes);
    row.success_rate = successes / n;
    row.subgoal_rate = subgoal_frac / n;
    row.invalid_action_rate = turns ? static_cast<double>(invalid) / turns : 0.0;
    row.mean_q = turns ? q_sum / static_cast<double>(turns) : 0.0;
    row.mean_input_tokens = turns ? input_sum / static_cast<double>(turns) : 0.0;
    row.iterations = cfg.ppo.total_iters;
    row.wall_time = now_seconds() - t0;
    return row;
}

TrainedAgent run_epl(const Vocabulary& v, const ExperimentConfig& cfg, uint64_t seed) {
    TrainedAgent agent;
    agent.model = resolve_model(v, cfg);
    std::mt19937_64 rng(seed * 7919ull + 13ull);
    agent.params = init_policy_params(agent.model, rng);
    agent.vturn = init_value_params(agent.model, rng);
    agent.vtok = init_token_value_params(agent.model, rng);
    if (cfg.epl == EplPreset::None) return agent;

    auto pools = make_pools(cfg);
    const bool wants_aug = cfg.epl == EplPreset::TrajAug || cfg.epl == EplPreset::EnvAncTrajAug;
    const bool wants_anchored =
        cfg.epl == EplPreset::EnvAncRaw || cfg.epl == EplPreset::EnvAncTrajAug;

    // Environment-anchored stage first, then the trajectory corpus.
    if (wants_anchored) {
        PriorCorpus anchored;
        if (cfg.env == EnvKind::House) {
            auto masked = gen_masked_corpus(v, pools.house_seen, cfg.epl_anchored_samples / 2,
                                            cfg.task_seed + 11);
            auto reorder = gen_reorder_corpus(v, pools.house_seen, cfg.epl_anchored_samples / 2,
                                              cfg.task_seed + 12);
            anchored.insert(anchored.end(), masked.begin(), masked.end());
            anchored.insert(anchored.end(), reorder.begin(), reorder.end());
        } else {
            for (auto kind : {GroundingKind::Absolute, GroundingKind::Relative,
                              GroundingKind::Combined}) {
                auto c = gen_grounding_corpus(v, pools.manip_seen, kind,
                                              cfg.epl_anchored_samples / 3, cfg.task_seed + 13);
                anchored.insert(anchored.end(), c.begin(), c.end());
            }
        }
        std::vector<PriorTokenSample> data;
        for (const auto& r : anchored) data.push_back(r.sample);
        clone_train(agent.model, agent.params, data, cfg.epl_anchored_epochs, cfg.epl_lr,
                    seed + 101);
    }

    PriorCorpus traj;
    ContextPolicy ctx = cfg.context;
    if (wants_aug) {
        Annotator rule{AnnotatorKind::RuleBased, "", ""};
        traj = augment_trajectories(v, cfg.env, pools.house_seen, pools.manip_seen,
                                    cfg.epl_episodes, cfg.task_seed + 21, ctx, rule);
    } else {
        traj = record_raw_trajectories(v, cfg.env, pools.house_seen, pools.manip_seen,
                                       cfg.epl_episodes, cfg.task_seed + 21, ctx);
    }
    std::vector<PriorTokenSample> data;
    for (const auto& r : traj) data.push_back(r.sample);
    clone_train(agent.model, agent.params, data, cfg.epl_traj_epochs, cfg.epl_lr, seed + 202);
    return agent;
}

TrainedAgent run_pipeline(const Vocabulary& v, const ExperimentConfig& cfg, uint64_t seed,
                          std::vector<IterationMetrics>* iter_metrics) {
    TrainedAgent agent = run_epl(v, cfg, seed);
    if (cfg.ppo.total_iters <= 0) return agent;

    auto pools = make_pools(cfg);
    TrainSetup setup;
    setup.env = cfg.env;
    setup.house_tasks = pools.house_seen;
    setup.manip_tasks = pools.manip_seen;
    setup.context = cfg.context;
    setup.reward = cfg.reward;
    setup.gae = cfg.gae;
    setup.ppo = cfg.ppo;
    setup.model = agent.model;

    Params ref = agent.params;  // cloned policy, for the optional KL term
    auto metrics = train(v, setup, agent.params, agent.vturn, agent.vtok, seed,
                         cfg.ppo.kl_coef > 0.0 ? &ref : nullptr);
    if (iter_metrics) *iter_metrics = std::move(metrics);
    return agent;
}

ErrorProxyCounts error_proxy_counts(const std::vector<Trajectory>& trajs) {
    ErrorProxyCounts out;
    for (const auto& traj : trajs) {
        bool any_perception = false, any_planning = false;
        for (const auto& t : traj.turns) {
            bool perception_miss = false;
            if (const auto* resp = std::get_if<StructuredResponse>(&t.parsed)) {
                if (!resp->visual.empty() && t.q < 1.0) perception_miss = true;
            }
            if (!t.feedback.valid) {
                ++out.planning;
                any_planning = true;
            }
            if (perception_miss) {
                ++out.perception;
                any_perception = true;
            }
        }
        if (traj.terminal != TerminalKind::Success && !any_perception && !any_planning)
            ++out.reasoning;
    }
    return out;
}

namespace {

struct CellResult {
    std::string cell;
    MetricsRow seen;
    MetricsRow unseen;
    std::string iter_csv;  // deterministic per-iteration series
};

json cell_to_json(const CellResult& c) {
    json j;
    j["cell"] = c.cell;
    j["seen"] = json::parse("{}");
    j["seen"]["csv"] = c.seen.csv_row();
    j["unseen"]["csv"] = c.unseen.csv_row();
    j["iter_csv"] = c.iter_csv;
    return j;
}

ExperimentConfig apply_cell(const ExperimentConfig& base, const std::string& suite,
                            const std::string& cell) {
    ExperimentConfig cfg = base;
    cfg.id = base.id + "." + suite + "." + cell;
    if (suite == "priors") {
        cfg.epl = *epl_preset_from_name(cell);
    } else if (suite == "context") {
        cfg.context = ContextPolicy::parse(cell);
        cfg.ppo.total_iters = 0;  // stage-1 comparison
    } else if (suite == "reward") {
        cfg.reward.use_subgoal = cell == "outcome_subgoal" || cell == "full";
        cfg.reward.use_behavior = cell == "outcome_behavior" || cell == "full";
    } else if (suite == "gae") {
        cfg.gae.mode = cell == "token" ? GAEMode::TokenLevel : GAEMode::TurnLevel;
    } else {
        throw std::invalid_argument("unknown suite: " + suite);
    }
    return cfg;
}

std::vector<std::string> suite_cells(const std::string& suite) {
    if (suite == "priors") return {"none", "raw", "traj_aug", "env_anchored_raw",
                                   "env_anchored_traj_aug"};
    if (suite == "context") return {"none", "ss1", "ss3", "ss5", "sw1", "sw3", "sw5"};
    if (suite == "reward")
        return {"outcome_only", "outcome_subgoal", "outcome_behavior", "full"};
    if (suite == "gae") return {"turn", "token"};
    throw std::invalid_argument("unknown suite: " + suite);
}

}  // namespace

std::string run_ablation_suite(const Vocabulary& v, const std::string& suite,
                               const ExperimentConfig& base, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    fs::create_directories(out_dir + "/cells");

    std::ostringstream table;
    table << "suite,cell," << MetricsRow::csv_header() << "\n";

    for (const auto& cell : suite_cells(suite)) {
        ExperimentConfig cfg = apply_cell(base, suite, cell);
        for (uint64_t seed : base.seeds) {
            const std::string cell_path = out_dir + "/cells/" + suite + "_" + cell + "_" +
                                          std::to_string(seed) + "_" +
                                          std::to_string(cfg.config_hash()) + ".json";
            json result;
            if (fs::exists(cell_path)) {
                std::ifstream in(cell_path);
                std::stringstream ss;
                ss << in.rdbuf();
                result = json::parse(ss.str());
            } else {
                std::vector<IterationMetrics> iters;
                auto agent = run_pipeline(v, cfg, seed, &iters);
                auto seen = run_eval(v, cfg, agent, Split::Seen, seed + 500);
                auto unseen = run_eval(v, cfg, agent, Split::Unseen, seed + 900);
                std::ostringstream iter_csv;
                iter_csv << metrics_csv_header() << "\n";
                for (const auto& m : iters) iter_csv << metrics_csv_row(m) << "\n";
                result["seen_csv"] = seen.csv_row();
                result["unseen_csv"] = unseen.csv_row();
                result["iter_csv"] = iter_csv.str();
                result["success_seen"] = seen.success_rate;
                result["success_unseen"] = unseen.success_rate;
                result["mean_input_tokens_unseen"] = unseen.mean_input_tokens;
                std::ofstream out(cell_path);
                out << result.dump(2);
            }
            table << suite << "," << cell << "," << result["seen_csv"].get<std::string>()
                  << "\n";
            table << suite << "," << cell << "," << result["unseen_csv"].get<std::string>()
                  << "\n";
        }
    }
    const std::string csv_path = out_dir + "/" + suite + "_" +
                                 std::to_string(base.config_hash()) + ".csv";
    std::ofstream out(csv_path);
    out << table.str();
    return csv_path;
}

std::string agent_to_json(const TrainedAgent& agent, const Vocabulary& v) {
    json j;
    j["vocab_version"] = v.version();
    j["model"] = {{"vocab_size", agent.model.vocab_size},
                  {"hidden", agent.model.hidden},
                  {"emb", agent.model.emb},
                  {"max_response_tokens", agent.model.max_response_tokens},
                  {"init_scale", agent.model.init_scale},
                  {"freeze_encoder", agent.model.freeze_encoder}};
    j["params"] = agent.params;
    j["vturn"] = agent.vturn;
    j["vtok"] = agent.vtok;
    return j.dump();
}

TrainedAgent agent_from_json(const std::string& text, const Vocabulary& v) {
    const json j = json::parse(text);
    if (j.value("vocab_version", "") != v.version())
        throw std::runtime_error("checkpoint vocabulary version mismatch");
    TrainedAgent a;
    a.model = ModelConfig::for_vocabulary(v);
    a.model.vocab_size = j["model"].value("vocab_size", v.size());
    a.model.hidden = j["model"].value("hidden", 64);
    a.model.emb = j["model"].value("emb", 64);
    a.model.max_response_tokens = j["model"].value("max_response_tokens", 32);
    a.model.init_scale = j["model"].value("init_scale", 0.02);
    a.model.freeze_encoder = j["model"].value("freeze_encoder", false);
    a.params = j["params"].get<Params>();
    a.vturn = j["vturn"].get<Params>();
    a.vtok = j["vtok"].get<Params>();
    if (static_cast<int>(a.params.size()) != policy_param_count(a.model))
        throw std::runtime_error("checkpoint policy size mismatch");
    return a;
}

}  // namespace era
