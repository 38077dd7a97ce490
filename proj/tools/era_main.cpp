#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "era/harness.hpp"

using namespace era;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void spit(const std::string& path, const std::string& text) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << text;
}

ExperimentConfig load_config(const std::string& path) {
    if (path.empty()) return ExperimentConfig{};
    return ExperimentConfig::load(path);
}

int cmd_gen_priors(const std::string& kind, const std::string& env, int n, uint64_t seed,
                   const std::string& out_path, const std::string& context) {
    const auto& v = Vocabulary::standard();
    const EnvKind ek = env == "table" ? EnvKind::Table : EnvKind::House;
    ContextPolicy ctx = ContextPolicy::parse(context);
    auto house = ek == EnvKind::House ? house_task_suite(Split::Seen, 24, seed)
                                      : std::vector<HouseTask>{};
    auto manip = ek == EnvKind::Table ? manip_task_suite(Split::Seen, 24, seed)
                                      : std::vector<ManipTask>{};
    PriorCorpus corpus;
    if (kind == "raw_traj") {
        corpus = record_raw_trajectories(v, ek, house, manip, n, seed, ctx);
    } else if (kind == "traj_aug") {
        Annotator rule{AnnotatorKind::RuleBased, "", ""};
        corpus = augment_trajectories(v, ek, house, manip, n, seed, ctx, rule);
    } else if (kind == "masked_action") {
        corpus = gen_masked_corpus(v, house, n, seed);
    } else if (kind == "reorder") {
        corpus = gen_reorder_corpus(v, house, n, seed);
    } else if (kind == "abs_ground") {
        corpus = gen_grounding_corpus(v, manip, GroundingKind::Absolute, n, seed);
    } else if (kind == "rel_ground") {
        corpus = gen_grounding_corpus(v, manip, GroundingKind::Relative, n, seed);
    } else if (kind == "comb_ground") {
        corpus = gen_grounding_corpus(v, manip, GroundingKind::Combined, n, seed);
    } else {
        std::cerr << "unknown corpus kind: " << kind << "\n";
        return 2;
    }
    auto pk = prior_kind_from_name(kind);
    auto report = validate_corpus(v, corpus, *pk);
    write_corpus_jsonl(corpus, out_path);
    std::cout << "wrote " << corpus.size() << " records to " << out_path << " ("
              << report.failures.size() << " validation failures)\n";
    return report.ok() ? 0 : 1;
}

int cmd_epl_train(const std::string& config_path, const std::string& out_path, uint64_t seed) {
    const auto& v = Vocabulary::standard();
    auto cfg = load_config(config_path);
    auto agent = run_epl(v, cfg, seed);
    spit(out_path, agent_to_json(agent, v));
    auto row = run_eval(v, cfg, agent, Split::Seen, seed + 500);
    std::cout << MetricsRow::csv_header() << "\n" << row.csv_row() << "\n";
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_rl_train(const std::string& config_path, const std::string& checkpoint,
                 const std::string& out_path, const std::string& metrics_path, uint64_t seed) {
    const auto& v = Vocabulary::standard();
    auto cfg = load_config(config_path);
    std::vector<IterationMetrics> iters;
    TrainedAgent agent;
    if (!checkpoint.empty()) {
        agent = agent_from_json(slurp(checkpoint), v);
        TrainSetup setup;
        setup.env = cfg.env;
        setup.house_tasks = cfg.env == EnvKind::House
                                ? house_task_suite(Split::Seen, cfg.train_tasks, cfg.task_seed)
                                : std::vector<HouseTask>{};
        setup.manip_tasks = cfg.env == EnvKind::Table
                                ? manip_task_suite(Split::Seen, cfg.train_tasks, cfg.task_seed)
                                : std::vector<ManipTask>{};
        setup.context = cfg.context;
        setup.reward = cfg.reward;
        setup.gae = cfg.gae;
        setup.ppo = cfg.ppo;
        setup.model = agent.model;
        Params ref = agent.params;
        iters = train(v, setup, agent.params, agent.vturn, agent.vtok, seed,
                      cfg.ppo.kl_coef > 0.0 ? &ref : nullptr);
    } else {
        agent = run_pipeline(v, cfg, seed, &iters);
    }
    spit(out_path, agent_to_json(agent, v));
    std::ostringstream csv;
    csv << metrics_csv_header() << "\n";
    for (const auto& m : iters) csv << metrics_csv_row(m) << "\n";
    if (!metrics_path.empty()) spit(metrics_path, csv.str());
    std::cout << csv.str();
    std::cout << "checkpoint written to " << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& split, int episodes, uint64_t seed, const std::string& out) {
    const auto& v = Vocabulary::standard();
    auto cfg = load_config(config_path);
    if (episodes > 0) cfg.eval_episodes = episodes;
    auto agent = agent_from_json(slurp(checkpoint), v);
    std::vector<Trajectory> trajs;
    auto row = run_eval(v, cfg, agent, split == "unseen" ? Split::Unseen : Split::Seen, seed,
                        &trajs);
    auto errs = error_proxy_counts(trajs);
    std::cout << MetricsRow::csv_header() << "\n" << row.csv_row() << "\n";
    std::cout << "error_proxies perception=" << errs.perception << " reasoning=" << errs.reasoning
              << " planning=" << errs.planning << "\n";
    if (!out.empty()) {
        std::ostringstream os;
        os << "{\"row\": \"" << row.csv_row() << "\", \"perception\": " << errs.perception
           << ", \"reasoning\": " << errs.reasoning << ", \"planning\": " << errs.planning
           << "}\n";
        spit(out, os.str());
    }
    return 0;
}

int cmd_ablate(const std::string& suite, const std::string& config_path,
               const std::string& out_dir) {
    const auto& v = Vocabulary::standard();
    auto cfg = load_config(config_path);
    auto csv = run_ablation_suite(v, suite, cfg, out_dir);
    std::cout << "suite results: " << csv << "\n";
    return 0;
}

int cmd_gradcheck(int instances) {
    // Finite-difference spot check of the analytic gradients; the test suite
    // runs the full version of this oracle.
    ModelConfig cfg;
    cfg.vocab_size = 24;
    cfg.hidden = 6;
    cfg.emb = 6;
    cfg.init_scale = 0.3;
    std::mt19937_64 rng(17);
    auto rand_seq = [&](int lo, int hi) {
        std::uniform_int_distribution<int> len(lo, hi);
        std::uniform_int_distribution<TokenId> tok(0, cfg.vocab_size - 1);
        TokenSeq s;
        int n = len(rng);
        for (int i = 0; i < n; ++i) s.push_back(tok(rng));
        return s;
    };
    double worst = 0.0;
    for (int i = 0; i < instances; ++i) {
        auto params = init_policy_params(cfg, rng);
        auto x = rand_seq(2, 6);
        auto y = rand_seq(1, 5);
        Params grad(params.size(), 0.0);
        log_prob_and_grad(cfg, params, x, y, grad);
        std::uniform_int_distribution<size_t> pick(0, params.size() - 1);
        for (int c = 0; c < 8; ++c) {
            size_t j = pick(rng);
            const double h = 1e-5;
            Params p = params;
            p[j] += h;
            double up = log_prob(cfg, p, x, y).total;
            p[j] -= 2 * h;
            double dn = log_prob(cfg, p, x, y).total;
            double fd = (up - dn) / (2 * h);
            double rel =
                std::abs(fd - grad[j]) / std::max({std::abs(fd), std::abs(grad[j]), 1e-6});
            worst = std::max(worst, rel);
        }
    }
    std::cout << "policy log-prob gradcheck over " << instances
              << " instances: max relative error " << worst << "\n";
    return worst < 1e-3 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Desk-scale embodied agent lab: prior curation, cloning, and turn-level PPO"};
    app.require_subcommand(1);

    auto* gen = app.add_subcommand("gen-priors", "Generate a prior corpus as JSONL");
    std::string kind = "raw_traj", env = "house", out = "corpus.jsonl", context = "ss1";
    int n = 32;
    uint64_t seed = 1;
    gen->add_option("--kind", kind,
                    "raw_traj|traj_aug|masked_action|reorder|abs_ground|rel_ground|comb_ground");
    gen->add_option("--env", env, "house|table");
    gen->add_option("--n", n, "episodes (trajectories) or samples (QA)");
    gen->add_option("--seed", seed);
    gen->add_option("--out", out);
    gen->add_option("--context", context, "context policy: none|ss1|ss3|ss5|sw1|sw3|sw5");

    auto* epl = app.add_subcommand("epl-train", "Supervised pretraining per the config preset");
    std::string cfg_path, ckpt_out = "agent.json";
    uint64_t epl_seed = 1;
    epl->add_option("--config", cfg_path);
    epl->add_option("--out", ckpt_out);
    epl->add_option("--seed", epl_seed);

    auto* rl = app.add_subcommand("rl-train", "PPO training (optionally from a checkpoint)");
    std::string rl_cfg, rl_ckpt, rl_out = "agent_rl.json", rl_metrics;
    uint64_t rl_seed = 1;
    rl->add_option("--config", rl_cfg);
    rl->add_option("--checkpoint", rl_ckpt);
    rl->add_option("--out", rl_out);
    rl->add_option("--metrics", rl_metrics);
    rl->add_option("--seed", rl_seed);

    auto* ev = app.add_subcommand("eval", "Greedy evaluation of a checkpoint");
    std::string ev_cfg, ev_ckpt, ev_split = "seen", ev_out;
    int ev_eps = 0;
    uint64_t ev_seed = 1;
    ev->add_option("--config", ev_cfg);
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--split", ev_split, "seen|unseen");
    ev->add_option("--episodes", ev_eps);
    ev->add_option("--seed", ev_seed);
    ev->add_option("--out", ev_out);

    auto* ab = app.add_subcommand("ablate", "Run a named ablation suite");
    std::string ab_suite, ab_cfg, ab_dir = "results";
    ab->add_option("suite", ab_suite, "priors|context|reward|gae")->required();
    ab->add_option("--config", ab_cfg);
    ab->add_option("--out-dir", ab_dir);

    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient spot check");
    int gc_instances = 25;
    gc->add_option("--instances", gc_instances);

    auto* dv = app.add_subcommand("dump-vocab", "Write the vocabulary table as JSON");
    std::string dv_out = "vocab.json";
    dv->add_option("--out", dv_out);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_priors(kind, env, n, seed, out, context);
        if (epl->parsed()) return cmd_epl_train(cfg_path, ckpt_out, epl_seed);
        if (rl->parsed()) return cmd_rl_train(rl_cfg, rl_ckpt, rl_out, rl_metrics, rl_seed);
        if (ev->parsed()) return cmd_eval(ev_cfg, ev_ckpt, ev_split, ev_eps, ev_seed, ev_out);
        if (ab->parsed()) return cmd_ablate(ab_suite, ab_cfg, ab_dir);
        if (gc->parsed()) return cmd_gradcheck(gc_instances);
        if (dv->parsed()) {
            spit(dv_out, Vocabulary::standard().to_json());
            std::cout << "vocabulary written to " << dv_out << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
