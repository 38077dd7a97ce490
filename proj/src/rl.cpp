#include "era/rl.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>

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

}  // namespace

std::vector<double> td_residuals(const std::vector<double>& rewards,
                                 const std::vector<double>& values, double gamma) {
    if (rewards.size() != values.size())
        throw LengthMismatchError("td_residuals: rewards and values differ in length");
    const size_t n = rewards.size();
    std::vector<double> deltas(n);
    for (size_t t = 0; t < n; ++t) {
        const double v_next = (t + 1 < n) ? values[t + 1] : 0.0;
        deltas[t] = rewards[t] + gamma * v_next - values[t];
    }
    return deltas;
}

std::vector<double> gae_turn(const std::vector<double>& deltas, double gamma, double lambda) {
    const size_t n = deltas.size();
    std::vector<double> adv(n, 0.0);
    for (size_t t = 0; t < n; ++t) {
        double decay = 1.0;
        double acc = 0.0;
        for (size_t l = t; l < n; ++l) {
            acc += decay * deltas[l];
            decay *= gamma * lambda;
        }
        adv[t] = acc;
    }
    return adv;
}

std::vector<double> gae_token(const std::vector<double>& token_rewards,
                              const std::vector<double>& token_values, double gamma,
                              double lambda) {
    return gae_turn(td_residuals(token_rewards, token_values, gamma), gamma, lambda);
}

void broadcast_advantage(Trajectory& traj) {
    for (auto& turn : traj.turns) {
        turn.token_advantages.assign(turn.response.size(), turn.advantage);
    }
}

void compute_advantages(Trajectory& traj, const GAEConfig& gae) {
    if (traj.turns.empty()) return;
    if (gae.mode == GAEMode::TurnLevel) {
        std::vector<double> rewards, values;
        for (const auto& t : traj.turns) {
            rewards.push_back(t.reward.total);
            values.push_back(t.turn_value);
        }
        auto adv = gae_turn(td_residuals(rewards, values, gae.gamma), gae.gamma, gae.lambda);
        for (size_t i = 0; i < traj.turns.size(); ++i) {
            traj.turns[i].advantage = adv[i];
            traj.turns[i].value_target = adv[i] + traj.turns[i].turn_value;
        }
        broadcast_advantage(traj);
        return;
    }
    // Token-level baseline: one discount chain over the episode's tokens,
    // with each turn's reward attached to its final token.
    std::vector<double> rewards, values;
    for (const auto& t : traj.turns) {
        for (size_t i = 0; i < t.response.size(); ++i) {
            rewards.push_back(i + 1 == t.response.size() ? t.reward.total : 0.0);
            values.push_back(t.token_values.at(i));
        }
    }
    auto adv = gae_token(rewards, values, gae.gamma, gae.lambda);
    size_t pos = 0;
    for (auto& t : traj.turns) {
        t.token_advantages.resize(t.response.size());
        t.token_value_targets.resize(t.response.size());
        for (size_t i = 0; i < t.response.size(); ++i, ++pos) {
            t.token_advantages[i] = adv[pos];
            t.token_value_targets[i] = adv[pos] + values[pos];
        }
    }
}

PolicyLossResult ppo_policy_loss(const ModelConfig& model, const Params& params,
                                 const std::vector<TurnRecord>& batch, GAEMode mode,
                                 const PPOConfig& cfg, Params* grad, const Params* ref_params) {
    PolicyLossResult out;
    if (batch.empty()) return out;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    Params dummy;
    int64_t token_count = 0;

    for (const auto& rec : batch) {
        const Turn& t = *rec.turn;
        if (t.response.empty()) continue;
        const size_t n = t.response.size();
        const std::vector<double> zeros(n, 0.0);
        auto eval = policy_backward(model, params, t.state_input, t.response, zeros, zeros, dummy);

        std::vector<double> coeff_logp(n, 0.0), coeff_ent(n, 0.0);
        const double w = inv_n / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            const double adv = mode == GAEMode::TurnLevel ? t.advantage : t.token_advantages[i];
            const double ratio = std::exp(eval.logps[i] - t.old_logps[i]);
            const double clipped =
                std::clamp(ratio, 1.0 - cfg.clip_eps, 1.0 + cfg.clip_eps) * adv;
            const double unclipped = ratio * adv;
            out.objective += w * std::min(unclipped, clipped);
            if (unclipped <= clipped) coeff_logp[i] += w * ratio * adv;
            coeff_ent[i] = cfg.entropy_coef * w;
            out.objective += cfg.entropy_coef * w * eval.entropies[i];
            out.mean_entropy += eval.entropies[i];
            ++token_count;
            if (ref_params && cfg.kl_coef > 0.0) coeff_logp[i] -= cfg.kl_coef * w;
        }
        if (ref_params && cfg.kl_coef > 0.0) {
            auto ref = log_prob(model, *ref_params, t.state_input, t.response);
            for (size_t i = 0; i < n; ++i)
                out.objective -= cfg.kl_coef * w * (eval.logps[i] - ref.logps[i]);
        }
        if (grad) policy_backward(model, params, t.state_input, t.response, coeff_logp, coeff_ent, *grad);
    }
    if (token_count > 0) out.mean_entropy /= static_cast<double>(token_count);
    return out;
}

double value_loss_turn(const ModelConfig& model, const Params& vparams,
                       const std::vector<TurnRecord>& batch, double value_clip, Params* grad) {
    if (batch.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& rec : batch) {
        const Turn& t = *rec.turn;
        const double v_now = value_turn(model, vparams, t.state_input);
        const double v_old = t.turn_value;
        const double target = t.value_target;
        const double diff = std::clamp(v_now - v_old, -value_clip, value_clip);
        const double v_clipped = v_old + diff;
        const double l_un = (v_now - target) * (v_now - target);
        const double l_cl = (v_clipped - target) * (v_clipped - target);
        loss += 0.5 * std::max(l_un, l_cl) * inv_n;
        if (grad) {
            double d = 0.0;
            if (l_un >= l_cl) {
                d = (v_now - target) * inv_n;
            } else if (std::abs(v_now - v_old) < value_clip) {
                d = (v_clipped - target) * inv_n;
            }
            if (d != 0.0) value_turn_grad(model, vparams, t.state_input, d, *grad);
        }
    }
    return loss;
}

double value_loss_token(const ModelConfig& model, const Params& vtparams,
                        const std::vector<TurnRecord>& batch, double value_clip, Params* grad) {
    if (batch.empty()) return 0.0;
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    for (const auto& rec : batch) {
        const Turn& t = *rec.turn;
        if (t.response.empty()) continue;
        auto vals = token_values(model, vtparams, t.state_input, t.response);
        const size_t n = vals.size();
        std::vector<double> coeff(n, 0.0);
        const double w = inv_n / static_cast<double>(n);
        for (size_t i = 0; i < n; ++i) {
            const double v_old = t.token_values[i];
            const double target = t.token_value_targets[i];
            const double diff = std::clamp(vals[i] - v_old, -value_clip, value_clip);
            const double v_clipped = v_old + diff;
            const double l_un = (vals[i] - target) * (vals[i] - target);
            const double l_cl = (v_clipped - target) * (v_clipped - target);
            loss += 0.5 * std::max(l_un, l_cl) * w;
            if (l_un >= l_cl) {
                coeff[i] = (vals[i] - target) * w;
            } else if (std::abs(vals[i] - v_old) < value_clip) {
                coeff[i] = (v_clipped - target) * w;
            }
        }
        if (grad) token_values_backward(model, vtparams, t.state_input, t.response, coeff, *grad);
    }
    return loss;
}

Trajectory run_episode(const Vocabulary& v, const ModelConfig& model, const Params& params,
                       const Params* vturn, const Params* vtok, const EpisodeSpec& spec) {
    Trajectory traj;
    std::mt19937_64 rng(mix_seed(spec.seed, 0xE915D0E));
    SubgoalLedger ledger;

    if (spec.env == EnvKind::House) {
        const HouseTask& task = *spec.house;
        auto [state, obs] = reset_house(v, task, spec.seed);
        HistoryBuffer buffer;
        const TokenSeq instr = task.tokens(v);
        for (;;) {
            Turn turn;
            turn.obs_tokens = obs.tokens;
            turn.state_input = build_input(v, instr, buffer, obs.tokens, spec.context);
            if (spec.want_values && vturn)
                turn.turn_value = value_turn(model, *vturn, turn.state_input);
            auto [y, trace] = sample_response(model, v, params, turn.state_input, rng,
                                              spec.temperature);
            turn.response = y;
            turn.old_logps = trace.logps;
            if (spec.want_values && vtok && spec.gae_mode == GAEMode::TokenLevel)
                turn.token_values = token_values(model, *vtok, turn.state_input, y);
            turn.parsed = decode_response(v, y, ActionMode::HighLevel);

            HouseStepResult r;
            const bool parsed_ok = parse_ok(turn.parsed);
            if (parsed_ok) {
                const auto& action =
                    std::get<HighLevelAction>(std::get<StructuredResponse>(turn.parsed).action);
                r = step_house(v, state, task, action);
            } else {
                r = step_house_unparsed(v, state, task);
            }
            turn.feedback = r.feedback;
            turn.done_success = r.terminal == TerminalKind::Success;
            turn.reward = turn_reward_house(parsed_ok, r.feedback, r.subgoal_events,
                                            turn.done_success, ledger, spec.reward);
            traj.episode_return += turn.reward.total;

            push_history(buffer,
                         make_history_entry(v, state.step, y, turn.parsed, r.feedback),
                         std::max(spec.context.k, 1));
            state = r.state;
            obs = render_observation_house(v, state);
            const bool done = r.done;
            const TerminalKind terminal = r.terminal;
            traj.turns.push_back(std::move(turn));
            if (done) {
                traj.terminal = terminal;
                traj.subgoals_hit = static_cast<int>(state.fired_subgoals.size());
                traj.subgoals_total = static_cast<int>(task.subgoals.size());
                break;
            }
        }
        return traj;
    }

    const ManipTask& task = *spec.manip;
    auto [state, obs] = reset_table(v, task, spec.seed);
    HistoryBuffer buffer;
    const TokenSeq instr = task.tokens(v);
    for (;;) {
        Turn turn;
        turn.obs_tokens = obs.tokens;
        turn.state_input = build_input(v, instr, buffer, obs.tokens, spec.context);
        if (spec.want_values && vturn)
            turn.turn_value = value_turn(model, *vturn, turn.state_input);
        auto [y, trace] =
            sample_response(model, v, params, turn.state_input, rng, spec.temperature);
        turn.response = y;
        turn.old_logps = trace.logps;
        if (spec.want_values && vtok && spec.gae_mode == GAEMode::TokenLevel)
            turn.token_values = token_values(model, *vtok, turn.state_input, y);
        turn.parsed = decode_response(v, y, ActionMode::LowLevel);

        TableTurnInfo info;
        info.parsed = parse_ok(turn.parsed);
        info.scene_truth = scene_desc_pairs(ground_truth_scene(state));
        if (info.parsed)
            info.predicted =
                visual_desc_pairs(std::get<StructuredResponse>(turn.parsed).visual);

        TableStepResult r;
        if (info.parsed) {
            const auto& action =
                std::get<LowLevelAction>(std::get<StructuredResponse>(turn.parsed).action);
            r = step_table(v, state, task, action, spec.reward.approach_radius);
        } else {
            r = step_table_unparsed(v, state, task);
        }
        turn.feedback = r.feedback;
        turn.done_success = r.terminal == TerminalKind::Success;
        info.done_success = turn.done_success;
        turn.reward = turn_reward_table(info, r.state, task, ledger, spec.reward);
        turn.q = info.q;
        traj.episode_return += turn.reward.total;

        push_history(buffer, make_history_entry(v, state.step, y, turn.parsed, r.feedback),
                     std::max(spec.context.k, 1));
        state = r.state;
        obs = render_observation_table(v, state);
        const bool done = r.done;
        const TerminalKind terminal = r.terminal;
        traj.turns.push_back(std::move(turn));
        if (done) {
            traj.terminal = terminal;
            traj.subgoals_hit = static_cast<int>(state.approached.size());
            traj.subgoals_total = static_cast<int>(task.target_objects.size());
            break;
        }
    }
    return traj;
}

std::string metrics_csv_header() {
    return "iter,mean_return,success_rate,subgoal_rate,invalid_rate,mean_q,"
           "mean_input_tokens,policy_loss,value_loss,entropy";
}

std::string metrics_csv_row(const IterationMetrics& m) {
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                  m.iter, m.mean_return, m.success_rate, m.subgoal_rate, m.invalid_rate,
                  m.mean_q, m.mean_input_tokens, m.policy_loss, m.value_loss, m.entropy);
    return buf;
}

std::vector<IterationMetrics> train(const Vocabulary& v, const TrainSetup& setup, Params& params,
                                    Params& vturn, Params& vtok, uint64_t seed,
                                    const Params* ref_params) {
    const int pool_size = setup.env == EnvKind::House
                              ? static_cast<int>(setup.house_tasks.size())
                              : static_cast<int>(setup.manip_tasks.size());
    if (pool_size == 0) throw UnknownTaskError("train: empty task pool");

    AdamState actor_adam(params.size(), setup.ppo.actor_lr);
    AdamState critic_adam(setup.gae.mode == GAEMode::TurnLevel ? vturn.size() : vtok.size(),
                          setup.ppo.critic_lr);
    std::vector<IterationMetrics> out;

    for (int iter = 0; iter < setup.ppo.total_iters; ++iter) {
        // Rollout phase: one episode per worker from the frozen snapshot.
        std::vector<Trajectory> trajs(static_cast<size_t>(setup.ppo.rollout_envs));
        for (int w = 0; w < setup.ppo.rollout_envs; ++w) {
            EpisodeSpec spec;
            spec.env = setup.env;
            const int task_idx = (iter * setup.ppo.rollout_envs + w) % pool_size;
            if (setup.env == EnvKind::House)
                spec.house = &setup.house_tasks[static_cast<size_t>(task_idx)];
            else
                spec.manip = &setup.manip_tasks[static_cast<size_t>(task_idx)];
            spec.context = setup.context;
            spec.reward = setup.reward;
            spec.temperature = setup.ppo.temperature;
            spec.seed = mix_seed(seed, static_cast<uint64_t>(iter) * 1000003ull +
                                           static_cast<uint64_t>(w));
            spec.want_values = true;
            spec.gae_mode = setup.gae.mode;
            trajs[static_cast<size_t>(w)] =
                run_episode(v, setup.model, params, &vturn, &vtok, spec);
            compute_advantages(trajs[static_cast<size_t>(w)], setup.gae);
        }

        // Flatten turn records.
        std::vector<TurnRecord> records;
        for (const auto& tr : trajs)
            for (const auto& turn : tr.turns) records.push_back(TurnRecord{&turn});

        if (setup.ppo.advantage_norm && records.size() > 1) {
            // Off by default; normalizes turn advantages in place.
            double mean = 0.0;
            for (const auto& r : records) mean += r.turn->advantage;
            mean /= static_cast<double>(records.size());
            double var = 0.0;
            for (const auto& r : records) {
                const double d = r.turn->advantage - mean;
                var += d * d;
            }
            const double sd = std::sqrt(var / static_cast<double>(records.size())) + 1e-8;
            for (auto& r : records) {
                auto* t = const_cast<Turn*>(r.turn);
                t->advantage = (t->advantage - mean) / sd;
                for (auto& a : t->token_advantages) a = (a - mean) / sd;
            }
        }

        IterationMetrics m;
        m.iter = iter;
        int64_t turn_count = 0, invalid = 0;
        double q_sum = 0.0, input_sum = 0.0, subgoal_frac = 0.0;
        int succ = 0;
        for (const auto& tr : trajs) {
            m.mean_return += tr.episode_return;
            succ += tr.terminal == TerminalKind::Success ? 1 : 0;
            if (tr.subgoals_total > 0)
                subgoal_frac += static_cast<double>(tr.subgoals_hit) / tr.subgoals_total;
            for (const auto& t : tr.turns) {
                ++turn_count;
                invalid += t.feedback.valid ? 0 : 1;
                q_sum += t.q;
                input_sum += count_tokens(t.state_input);
            }
        }
        const double n_ep = static_cast<double>(trajs.size());
        m.mean_return /= n_ep;
        m.success_rate = succ / n_ep;
        m.subgoal_rate = subgoal_frac / n_ep;
        m.invalid_rate = turn_count ? static_cast<double>(invalid) / turn_count : 0.0;
        m.mean_q = turn_count ? q_sum / static_cast<double>(turn_count) : 0.0;
        m.mean_input_tokens = turn_count ? input_sum / static_cast<double>(turn_count) : 0.0;

        // Update phase: single-threaded writer, minibatched.
        std::mt19937_64 shuffle_rng(mix_seed(seed, 0xBA7C4 + static_cast<uint64_t>(iter)));
        std::vector<size_t> order(records.size());
        std::iota(order.begin(), order.end(), 0);
        const bool update_actor = iter >= setup.ppo.critic_warmup_iters;
        int n_batches = 0;
        for (int epoch = 0; epoch < setup.ppo.epochs_per_batch; ++epoch) {
            std::shuffle(order.begin(), order.end(), shuffle_rng);
            for (size_t b = 0; b < order.size(); b += static_cast<size_t>(setup.ppo.minibatch)) {
                const size_t e =
                    std::min(order.size(), b + static_cast<size_t>(setup.ppo.minibatch));
                std::vector<TurnRecord> batch;
                for (size_t i = b; i < e; ++i) batch.push_back(records[order[i]]);
                ++n_batches;

                if (update_actor) {
                    Params grad(params.size(), 0.0);
                    auto res = ppo_policy_loss(setup.model, params, batch, setup.gae.mode,
                                               setup.ppo, &grad, ref_params);
                    m.policy_loss += res.objective;
                    m.entropy += res.mean_entropy;
                    for (auto& g : grad) g = -g;  // ascend the objective
                    clip_global_norm(grad, setup.ppo.grad_clip_norm);
                    if (setup.model.freeze_encoder) zero_encoder_grad(setup.model, grad);
                    actor_adam.step(params, grad);
                }

                if (setup.gae.mode == GAEMode::TurnLevel) {
                    Params grad(vturn.size(), 0.0);
                    m.value_loss +=
                        value_loss_turn(setup.model, vturn, batch, setup.ppo.value_clip, &grad);
                    clip_global_norm(grad, setup.ppo.grad_clip_norm);
                    critic_adam.step(vturn, grad);
                } else {
                    Params grad(vtok.size(), 0.0);
                    m.value_loss +=
                        value_loss_token(setup.model, vtok, batch, setup.ppo.value_clip, &grad);
                    clip_global_norm(grad, setup.ppo.grad_clip_norm);
                    critic_adam.step(vtok, grad);
                }
            }
        }
        if (n_batches > 0) {
            m.policy_loss /= n_batches;
            m.value_loss /= n_batches;
            m.entropy /= n_batches;
        }
        out.push_back(m);
    }
    return out;
}

}  // namespace era
