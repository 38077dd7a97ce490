#include "era/priors.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

namespace era {

namespace {

using nlohmann::json;

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a * 0x9E3779B97F4A7C15ull + b + 0x2545F4914F6CDD1Dull;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

json tokens_to_json(const TokenSeq& t) {
    json a = json::array();
    for (TokenId id : t) a.push_back(id);
    return a;
}

TokenSeq tokens_from_json(const json& a) {
    TokenSeq t;
    for (const auto& e : a) t.push_back(e.get<TokenId>());
    return t;
}

std::string quote_list(const std::vector<std::string>& items) {
    std::string out = "[";
    for (size_t i = 0; i < items.size(); ++i) {
        if (i) out += ", ";
        out += "\"" + items[i] + "\"";
    }
    out += "]";
    return out;
}

const char* kPromptSuffix =
    "Based on the above information, please provide the action for the next step to complete "
    "the task. Think, then act.";

std::string assemble_prompt(const std::string& instruction,
                            const std::vector<HistoryEntry>& history,
                            const std::string* additional_info) {
    std::string out = "instruction: " + instruction + "\n";
    out += "interaction_history: " + render_interaction_history(history) + "\n";
    if (additional_info) out += "additional_info: " + *additional_info + "\n";
    out += kPromptSuffix;
    return out;
}

}  // namespace

std::string_view prior_kind_name(PriorKind k) {
    switch (k) {
        case PriorKind::RawTraj: return "raw_traj";
        case PriorKind::TrajAug: return "traj_aug";
        case PriorKind::MaskedAction: return "masked_action";
        case PriorKind::Reorder: return "reorder";
        case PriorKind::AbsGround: return "abs_ground";
        case PriorKind::RelGround: return "rel_ground";
        case PriorKind::CombGround: return "comb_ground";
        case PriorKind::ExternalStub: return "external_stub";
    }
    return "raw_traj";
}

std::optional<PriorKind> prior_kind_from_name(std::string_view name) {
    for (int i = 0; i <= static_cast<int>(PriorKind::ExternalStub); ++i) {
        auto k = static_cast<PriorKind>(i);
        if (prior_kind_name(k) == name) return k;
    }
    return std::nullopt;
}

void write_corpus_jsonl(const PriorCorpus& corpus, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot open corpus file for writing: " + path);
    for (const auto& rec : corpus) out << rec.json_line << "\n";
}

PriorCorpus load_corpus_jsonl(const Vocabulary& v, const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    PriorCorpus corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
        }
        PriorRecord rec;
        auto kind = prior_kind_from_name(j.value("kind", ""));
        if (!kind) throw SchemaError("line " + std::to_string(lineno) + ": unknown kind");
        rec.kind = *kind;
        rec.json_line = line;
        if (j.contains("meta")) {
            const auto& meta = j["meta"];
            if (meta.contains("prompt_tokens"))
                rec.sample.prompt = tokens_from_json(meta["prompt_tokens"]);
            if (meta.contains("target_tokens"))
                rec.sample.target = tokens_from_json(meta["target_tokens"]);
            for (TokenId t : rec.sample.prompt)
                if (t < 0 || t >= v.size())
                    throw SchemaError("line " + std::to_string(lineno) + ": token out of range");
            for (TokenId t : rec.sample.target)
                if (t < 0 || t >= v.size())
                    throw SchemaError("line " + std::to_string(lineno) + ": token out of range");
        }
        corpus.push_back(std::move(rec));
    }
    return corpus;
}

// ---- expert trajectory recording -------------------------------------------

namespace {

TokenId plan_verb_token(const Vocabulary& v, SkillVerb verb) {
    switch (verb) {
        case SkillVerb::Find: return v.require("find");
        case SkillVerb::PickUp: return v.require("pick up");
        case SkillVerb::PutDown: return v.require("put down");
        case SkillVerb::Drop: return v.require("drop");
        case SkillVerb::Open: return v.require("open");
        case SkillVerb::Close: return v.require("close");
        case SkillVerb::TurnOn: return v.require("turn on");
        case SkillVerb::TurnOff: return v.require("turn off");
        case SkillVerb::Slice: return v.require("slice");
    }
    return v.require("find");
}

constexpr int kHousePlanSteps = 6;
constexpr int kTablePlanSteps = 5;

TokenSeq house_plan_tokens(const Vocabulary& v, const std::vector<HighLevelAction>& plan,
                           size_t from, int max_steps) {
    TokenSeq out;
    for (size_t i = from; i < plan.size() && i < from + static_cast<size_t>(max_steps); ++i) {
        const auto* skill = v.skill_by_phrase(plan[i].phrase);
        out.push_back(plan_verb_token(v, skill->verb));
        if (!skill->target.empty()) out.push_back(v.require(skill->target));
    }
    return out;
}

TokenSeq table_plan_tokens(const Vocabulary& v, const ManipTask& task, size_t from) {
    const TokenId ts = v.shape_token(task.target_shape);
    const TokenId cs = v.shape_token(task.tmpl == ManipTemplate::PlaceSorter
                                         ? Shape::ShapeSorter
                                         : Shape::Container);
    const std::vector<TokenSeq> steps = {
        {v.require("hover"), ts}, {v.require("grasp"), ts},    {v.require("lift"), ts},
        {v.require("move"), cs},  {v.require("release"), cs},
    };
    TokenSeq out;
    for (size_t i = from; i < steps.size(); ++i)
        out.insert(out.end(), steps[i].begin(), steps[i].end());
    return out;
}

std::vector<VisualEntry> visual_from_scene(const std::vector<SceneEntry>& scene) {
    std::vector<VisualEntry> out;
    for (const auto& e : scene) out.push_back(VisualEntry{e.color, e.shape, e.coord});
    return out;
}

Reflection expert_reflection(size_t step, bool prev_invalid, int prev_subgoal_index) {
    if (step == 0) return Reflection{ReflectionKind::Replan, 0};
    if (prev_invalid) return Reflection{ReflectionKind::ErrorDetected, 0};
    if (prev_subgoal_index > 0 && prev_subgoal_index <= 8)
        return Reflection{ReflectionKind::SubgoalDone, prev_subgoal_index};
    return Reflection{ReflectionKind::Continue, 0};
}

struct RecordSink {
    const Vocabulary& v;
    PriorKind kind;
    PriorCorpus out;

    void add(EnvKind env, int episode, int step_id, const std::string& instruction,
             const std::vector<HistoryEntry>& history, const std::string* additional_info,
             const StructuredResponse& resp, const TokenSeq& x, const json& task_json,
             uint64_t reset_seed) {
        json j;
        j["kind"] = std::string(prior_kind_name(kind));
        j["env"] = env == EnvKind::House ? "house" : "table";
        j["episode"] = episode;
        j["step_id"] = step_id;
        j["instruction"] = instruction;
        j["interaction_history"] = json::array();
        for (const auto& e : history) j["interaction_history"].push_back(json::parse(e.to_json()));
        if (additional_info) j["additional_info"] = json::parse(*additional_info);
        j["prompt"] = assemble_prompt(instruction, history, additional_info);
        j["generation"] = render_response_text(v, resp);
        TokenSeq target = encode_response(v, resp);
        j["meta"] = {{"task", json::parse(task_json.dump())},
                     {"reset_seed", reset_seed},
                     {"prompt_tokens", tokens_to_json(x)},
                     {"target_tokens", tokens_to_json(target)}};
        PriorRecord rec;
        rec.kind = kind;
        rec.json_line = j.dump();
        rec.sample = PriorTokenSample{x, std::move(target)};
        out.push_back(std::move(rec));
    }
};

PriorCorpus record_trajectories_impl(const Vocabulary& v, EnvKind env,
                                     const std::vector<HouseTask>& house_tasks,
                                     const std::vector<ManipTask>& manip_tasks, int episodes,
                                     uint64_t seed, const ContextPolicy& context,
                                     bool augmented) {
    RecordSink sink{v, augmented ? PriorKind::TrajAug : PriorKind::RawTraj, {}};

    for (int ep = 0; ep < episodes; ++ep) {
        const uint64_t reset_seed = mix_seed(seed, static_cast<uint64_t>(ep));
        if (env == EnvKind::House) {
            const HouseTask& task = house_tasks[static_cast<size_t>(ep) % house_tasks.size()];
            auto [state, obs] = reset_house(v, task, reset_seed);
            auto plan = expert_plan_high(v, task, state);
            HistoryBuffer buffer;
            const TokenSeq instr = task.tokens(v);
            bool prev_invalid = false;
            int prev_subgoal = 0;
            for (size_t i = 0; i < plan.size(); ++i) {
                TokenSeq x = build_input(v, instr, buffer, obs.tokens, context);
                StructuredResponse resp;
                if (augmented) {
                    resp.reflection = expert_reflection(i, prev_invalid, prev_subgoal);
                    resp.plan = house_plan_tokens(v, plan, i, kHousePlanSteps);
                } else if (i == 0) {
                    resp.reflection = Reflection{ReflectionKind::Replan, 0};
                    resp.plan = house_plan_tokens(v, plan, 0, kHousePlanSteps);
                } else {
                    resp.reflection = Reflection{ReflectionKind::Continue, 0};
                }
                resp.action = plan[i];

                std::vector<HistoryEntry> hist(buffer.begin(), buffer.end());
                sink.add(env, ep, static_cast<int>(i), task.instruction, hist, nullptr, resp, x,
                         json::parse(task.to_json()), reset_seed);

                auto r = step_house(v, state, task, plan[i]);
                prev_invalid = !r.feedback.valid;
                prev_subgoal = 0;
                if (!r.subgoal_events.empty()) {
                    for (size_t k = 0; k < task.subgoals.size(); ++k)
                        if (task.subgoals[k] == r.subgoal_events.front())
                            prev_subgoal = static_cast<int>(k) + 1;
                }
                push_history(buffer,
                             make_history_entry(v, static_cast<int>(i), encode_response(v, resp),
                                                ParseResult(resp), r.feedback),
                             std::max(context.k, 1));
                state = r.state;
                obs = render_observation_house(v, state);
                if (r.done) break;
            }
        } else {
            const ManipTask& task = manip_tasks[static_cast<size_t>(ep) % manip_tasks.size()];
            auto [state, obs] = reset_table(v, task, reset_seed);
            auto plan = expert_plan_low(task, state);
            HistoryBuffer buffer;
            const TokenSeq instr = task.tokens(v);
            bool prev_invalid = false;
            int prev_subgoal = 0;
            for (size_t i = 0; i < plan.size(); ++i) {
                TokenSeq x = build_input(v, instr, buffer, obs.tokens, context);
                StructuredResponse resp;
                if (augmented) {
                    resp.visual = visual_from_scene(ground_truth_scene(state));
                    resp.reflection = expert_reflection(i, prev_invalid, prev_subgoal);
                    resp.plan = table_plan_tokens(v, task, i);
                } else if (i == 0) {
                    resp.visual = visual_from_scene(ground_truth_scene(state));
                    resp.reflection = Reflection{ReflectionKind::Replan, 0};
                    resp.plan = table_plan_tokens(v, task, 0);
                } else {
                    resp.reflection = Reflection{ReflectionKind::Continue, 0};
                }
                resp.action = plan[i];

                std::string info = additional_info_json(state);
                std::vector<HistoryEntry> hist(buffer.begin(), buffer.end());
                sink.add(env, ep, static_cast<int>(i), task.instruction, hist, &info, resp, x,
                         json::parse(task.to_json()), reset_seed);

                auto r = step_table(v, state, task, plan[i]);
                prev_invalid = !r.feedback.valid;
                prev_subgoal = r.approach_events.empty() ? 0 : static_cast<int>(
                    state.approached.size() + 1);
                push_history(buffer,
                             make_history_entry(v, static_cast<int>(i), encode_response(v, resp),
                                                ParseResult(resp), r.feedback),
                             std::max(context.k, 1));
                state = r.state;
                obs = render_observation_table(v, state);
                if (r.done) break;
            }
        }
    }
    return std::move(sink.out);
}

}  // namespace

PriorCorpus record_raw_trajectories(const Vocabulary& v, EnvKind env,
                                    const std::vector<HouseTask>& house_tasks,
                                    const std::vector<ManipTask>& manip_tasks, int episodes,
                                    uint64_t seed, const ContextPolicy& context) {
    return record_trajectories_impl(v, env, house_tasks, manip_tasks, episodes, seed, context,
                                    false);
}

PriorCorpus augment_trajectories(const Vocabulary& v, EnvKind env,
                                 const std::vector<HouseTask>& house_tasks,
                                 const std::vector<ManipTask>& manip_tasks, int episodes,
                                 uint64_t seed, const ContextPolicy& context,
                                 const Annotator& annotator) {
    std::vector<json> external;
    if (annotator.kind == AnnotatorKind::External) {
        // The external pathway exchanges files: prompts out, annotations in.
        std::ifstream responses(annotator.response_path);
        if (!responses)
            throw AnnotatorUnavailableError("external annotator response file missing: " +
                                            annotator.response_path);
        std::string line;
        int lineno = 0;
        while (std::getline(responses, line)) {
            ++lineno;
            if (line.empty()) continue;
            json j;
            try {
                j = json::parse(line);
            } catch (const json::exception& e) {
                throw SchemaError("annotation line " + std::to_string(lineno) + ": " + e.what());
            }
            for (const char* f :
                 {"visual_state_description", "reasoning_and_reflection", "language_plan"})
                if (!j.contains(f))
                    throw SchemaError("annotation line " + std::to_string(lineno) +
                                      ": missing " + f);
            external.push_back(std::move(j));
        }
    }

    auto corpus = record_trajectories_impl(v, env, house_tasks, manip_tasks, episodes, seed,
                                           context, true);

    if (annotator.kind == AnnotatorKind::External) {
        // Attach the ingested annotations in step order; the closed-grammar
        // targets stay rule-based (the scene description must come from the
        // simulator, not the annotator).
        for (size_t i = 0; i < corpus.size() && i < external.size(); ++i) {
            json j = json::parse(corpus[i].json_line);
            j["annotation"] = external[i];
            corpus[i].json_line = j.dump();
        }
        if (!annotator.request_path.empty()) {
            std::ofstream req(annotator.request_path);
            for (const auto& rec : corpus) {
                json j = json::parse(rec.json_line);
                json out;
                out["prompt"] =
                    "For the following task: " + j.value("instruction", "") +
                    "\nYou have generated the following multi-step plan to complete the task: " +
                    j.value("generation", "") + "\nYou have executed the first " +
                    std::to_string(j.value("step_id", 0)) +
                    " actions of the plan. The next action to be executed is the recorded one. "
                    "Now you need to follow the multi-step plan to generate the next multi-step "
                    "plan including \"visual_state_description\", \"reasoning_and_reflection\", "
                    "and \"language_plan\" in the format of a JSON object. Make sure the step "
                    "number in the language plan starts from 1.";
                req << out.dump() << "\n";
            }
        }
    }
    return corpus;
}

// ---- masked action modeling / reordering ------------------------------------

MaskedSample gen_masked_action(const std::string& instruction,
                               const std::vector<std::string>& actions, std::mt19937_64& rng) {
    if (actions.empty()) throw std::invalid_argument("gen_masked_action: empty action list");
    std::uniform_int_distribution<size_t> pick(0, actions.size() - 1);
    MaskedSample s;
    s.mask_index = static_cast<int>(pick(rng));
    s.masked_action = actions[static_cast<size_t>(s.mask_index)];
    std::vector<std::string> masked = actions;
    masked[static_cast<size_t>(s.mask_index)] = "[MASK]";
    s.query = "You are a household assistant. You are given an instruction: \"" + instruction +
              "\" and an incomplete action sequence: " + quote_list(masked) +
              ". Please identify the missing action to complete the sequence.";
    s.answer = "To complete the logical chain for the instruction \"" + instruction +
               "\", the missing action is \"" + s.masked_action +
               "\". The complete and correct sequence is: " + quote_list(actions) + ".";
    return s;
}

ReorderSample gen_reorder(const std::string& instruction,
                          const std::vector<std::string>& actions, std::mt19937_64& rng) {
    if (actions.size() < 2) throw std::invalid_argument("gen_reorder: need at least two actions");
    ReorderSample s;
    s.permutation.resize(actions.size());
    std::iota(s.permutation.begin(), s.permutation.end(), 0);
    std::shuffle(s.permutation.begin(), s.permutation.end(), rng);
    // Identity shuffles teach nothing once sequences are long enough.
    while (actions.size() > 2 &&
           std::is_sorted(s.permutation.begin(), s.permutation.end()))
        std::shuffle(s.permutation.begin(), s.permutation.end(), rng);
    std::vector<std::string> permuted;
    for (int idx : s.permutation) permuted.push_back(actions[static_cast<size_t>(idx)]);
    s.query = "You are a household assistant. You are given the instruction: \"" + instruction +
              "\" The randomized action sequences are " + quote_list(permuted) +
              ". Your task is to generate the correct sequence of actions to accomplish the "
              "instruction.";
    s.answer = "To accomplish the instruction \"" + instruction +
               "\", the correct sequence of actions is: " + quote_list(actions) + ".";
    return s;
}

namespace {

std::vector<std::string> expert_phrases(const Vocabulary& v, const HouseTask& task,
                                        uint64_t reset_seed) {
    auto [state, obs] = reset_house(v, task, reset_seed);
    auto plan = expert_plan_high(v, task, state);
    std::vector<std::string> phrases;
    for (const auto& a : plan) phrases.push_back(a.phrase);
    return phrases;
}

TokenSeq skill_tokens(const Vocabulary& v, const std::vector<std::string>& phrases) {
    TokenSeq out;
    for (const auto& p : phrases)
        out.push_back(p == "[MASK]" ? v.require("[MASK]") : v.skill_by_phrase(p)->token);
    return out;
}

}  // namespace

PriorCorpus gen_masked_corpus(const Vocabulary& v, const std::vector<HouseTask>& tasks, int n,
                              uint64_t seed) {
    PriorCorpus corpus;
    for (int i = 0; i < n; ++i) {
        const HouseTask& task = tasks[static_cast<size_t>(i) % tasks.size()];
        std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(i)));
        auto phrases = expert_phrases(v, task, mix_seed(seed, static_cast<uint64_t>(i) * 7 + 1));
        auto s = gen_masked_action(task.instruction, phrases, rng);

        std::vector<std::string> masked = phrases;
        masked[static_cast<size_t>(s.mask_index)] = "[MASK]";
        TokenSeq prompt = {v.require("q:mask")};
        TokenSeq instr = task.tokens(v);
        prompt.insert(prompt.end(), instr.begin(), instr.end());
        TokenSeq seq = skill_tokens(v, masked);
        prompt.insert(prompt.end(), seq.begin(), seq.end());
        TokenSeq target = {v.skill_by_phrase(s.masked_action)->token};

        json j;
        j["kind"] = "masked_action";
        j["instruction"] = task.instruction;
        j["query"] = s.query;
        j["answer"] = s.answer;
        j["meta"] = {{"mask_index", s.mask_index},
                     {"actions", phrases},
                     {"masked_action", s.masked_action},
                     {"prompt_tokens", tokens_to_json(prompt)},
                     {"target_tokens", tokens_to_json(target)}};
        corpus.push_back(PriorRecord{PriorKind::MaskedAction, j.dump(),
                                     PriorTokenSample{std::move(prompt), std::move(target)}});
    }
    return corpus;
}

PriorCorpus gen_reorder_corpus(const Vocabulary& v, const std::vector<HouseTask>& tasks, int n,
                               uint64_t seed) {
    PriorCorpus corpus;
    for (int i = 0; i < n; ++i) {
        const HouseTask& task = tasks[static_cast<size_t>(i) % tasks.size()];
        std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(i) * 3 + 2));
        auto phrases = expert_phrases(v, task, mix_seed(seed, static_cast<uint64_t>(i) * 11 + 5));
        auto s = gen_reorder(task.instruction, phrases, rng);

        std::vector<std::string> permuted;
        for (int idx : s.permutation) permuted.push_back(phrases[static_cast<size_t>(idx)]);
        TokenSeq prompt = {v.require("q:reorder")};
        TokenSeq instr = task.tokens(v);
        prompt.insert(prompt.end(), instr.begin(), instr.end());
        TokenSeq seq = skill_tokens(v, permuted);
        prompt.insert(prompt.end(), seq.begin(), seq.end());
        TokenSeq target = skill_tokens(v, phrases);

        json j;
        j["kind"] = "reorder";
        j["instruction"] = task.instruction;
        j["query"] = s.query;
        j["answer"] = s.answer;
        j["meta"] = {{"permutation", s.permutation},
                     {"actions", phrases},
                     {"prompt_tokens", tokens_to_json(prompt)},
                     {"target_tokens", tokens_to_json(target)}};
        corpus.push_back(PriorRecord{PriorKind::Reorder, j.dump(),
                                     PriorTokenSample{std::move(prompt), std::move(target)}});
    }
    return corpus;
}

// ---- grounding QA -----------------------------------------------------------

namespace {

std::string coord_text(const std::array<int, 3>& c) {
    return "[" + std::to_string(c[0]) + ", " + std::to_string(c[1]) + ", " +
           std::to_string(c[2]) + "]";
}

std::string entry_label(const SceneEntry& e) {
    return std::string(color_name(e.color)) + " " + std::string(shape_name(e.shape));
}

std::string ordinal_phrase(int k, int n) {
    if (k == n) return "rightmost";
    switch (k) {
        case 1: return "leftmost";
        case 2: return "second leftmost";
        case 3: return "third leftmost";
        case 4: return "fourth leftmost";
        case 5: return "fifth leftmost";
        case 6: return "sixth leftmost";
        default: return std::to_string(k) + "th leftmost";
    }
}

}  // namespace

std::vector<QAPair> gen_grounding(const TableState& state, GroundingKind kind,
                                  std::mt19937_64& rng) {
    auto scene = ground_truth_scene(state);
    if (scene.empty()) return {};
    std::vector<QAPair> out;
    const int n = static_cast<int>(scene.size());

    if (kind == GroundingKind::Absolute) {
        // Pick an object whose (color, shape) is unique in the scene.
        std::vector<int> unique_idx;
        for (int i = 0; i < n; ++i) {
            bool unique = true;
            for (int j = 0; j < n; ++j)
                if (j != i && scene[static_cast<size_t>(j)].color == scene[static_cast<size_t>(i)].color &&
                    scene[static_cast<size_t>(j)].shape == scene[static_cast<size_t>(i)].shape)
                    unique = false;
            if (unique) unique_idx.push_back(i);
        }
        if (unique_idx.empty()) return {};
        std::uniform_int_distribution<size_t> pick(0, unique_idx.size() - 1);
        const auto& e = scene[static_cast<size_t>(unique_idx[pick(rng)])];
        out.push_back({"What is the 3D coordinate of the " + entry_label(e) + "?",
                       coord_text(e.coord)});
        out.push_back({"What object is located at " + coord_text(e.coord) + "?",
                       "The " + entry_label(e)});
        return out;
    }

    if (kind == GroundingKind::Relative) {
        for (int k = 1; k <= n; ++k) {
            out.push_back({"What is the 3D location of the " + ordinal_phrase(k, n) + " object?",
                           coord_text(scene[static_cast<size_t>(k - 1)].coord)});
        }
        return out;
    }

    // Combined: one affirmative and one negative, balanced by construction.
    std::uniform_int_distribution<int> od(1, n);
    const int k = od(rng);
    out.push_back({"Is the object located at " +
                       coord_text(scene[static_cast<size_t>(k - 1)].coord) + " the " +
                       ordinal_phrase(k, n) + " in the scene?",
                   "Yes"});
    if (n > 1) {
        int wrong = od(rng);
        while (wrong == k) wrong = od(rng);
        out.push_back({"Is the object located at " +
                           coord_text(scene[static_cast<size_t>(wrong - 1)].coord) + " the " +
                           ordinal_phrase(k, n) + " in the scene?",
                       "No"});
    }
    return out;
}

PriorCorpus gen_grounding_corpus(const Vocabulary& v, const std::vector<ManipTask>& tasks,
                                 GroundingKind kind, int n, uint64_t seed) {
    PriorCorpus corpus;
    const PriorKind pk = kind == GroundingKind::Absolute  ? PriorKind::AbsGround
                         : kind == GroundingKind::Relative ? PriorKind::RelGround
                                                           : PriorKind::CombGround;
    int i = 0;
    while (static_cast<int>(corpus.size()) < n) {
        const ManipTask& task = tasks[static_cast<size_t>(i) % tasks.size()];
        std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(i)));
        auto [state, obs] = reset_table(v, task, mix_seed(seed, static_cast<uint64_t>(i) + 77));
        auto scene = ground_truth_scene(state);
        auto qa = gen_grounding(state, kind, rng);
        ++i;
        for (size_t q = 0; q < qa.size() && static_cast<int>(corpus.size()) < n; ++q) {
            TokenSeq prompt, target;
            const int nn = static_cast<int>(scene.size());
            if (kind == GroundingKind::Absolute) {
                const bool coord_question = q % 2 == 0;
                // Recover the referenced entry from the stored text.
                // Entries are regenerated here instead of parsed.
                prompt.push_back(v.require(coord_question ? "q:coord_of" : "q:object_at"));
            } else if (kind == GroundingKind::Relative) {
                prompt.push_back(v.require("q:ordinal_loc"));
            } else {
                prompt.push_back(v.require("q:is_ordinal"));
            }
            // Token forms mirror the question content.
            if (kind == GroundingKind::Absolute) {
                // Find the unique entry named in the question.
                for (int e = 0; e < nn; ++e) {
                    const auto& s = scene[static_cast<size_t>(e)];
                    if (qa[q].question.find(entry_label(s)) != std::string::npos ||
                        qa[q].question.find(coord_text(s.coord)) != std::string::npos) {
                        if (q % 2 == 0) {
                            prompt.push_back(v.color_token(s.color));
                            prompt.push_back(v.shape_token(s.shape));
                            for (int c : s.coord) target.push_back(v.int_token(c));
                        } else {
                            for (int c : s.coord) prompt.push_back(v.int_token(c));
                            target.push_back(v.color_token(s.color));
                            target.push_back(v.shape_token(s.shape));
                        }
                        break;
                    }
                }
            } else if (kind == GroundingKind::Relative) {
                const int k = static_cast<int>(q) + 1;
                prompt.push_back(v.require(k == nn ? "ord:last" : "ord:" + std::to_string(k)));
                for (int c : scene[static_cast<size_t>(k - 1)].coord)
                    target.push_back(v.int_token(c));
            } else {
                // Combined: encode the coordinate and the claimed ordinal.
                for (int e = 0; e < nn; ++e) {
                    const auto& s = scene[static_cast<size_t>(e)];
                    if (qa[q].question.find(coord_text(s.coord)) != std::string::npos) {
                        for (int c : s.coord) prompt.push_back(v.int_token(c));
                        break;
                    }
                }
                target.push_back(v.require(qa[q].answer == "Yes" ? "ans:yes" : "ans:no"));
            }
            if (target.empty()) continue;

            json j;
            j["kind"] = std::string(prior_kind_name(pk));
            j["question"] = qa[q].question;
            j["answer"] = qa[q].answer;
            j["meta"] = {{"prompt_tokens", tokens_to_json(prompt)},
                         {"target_tokens", tokens_to_json(target)}};
            corpus.push_back(PriorRecord{pk, j.dump(), PriorTokenSample{prompt, target}});
        }
    }
    return corpus;
}

// ---- high-level action-space mapping ----------------------------------------

namespace {

bool builtin_requires_opening(const std::string& loc) {
    static const std::vector<std::string> openable = {"Fridge", "Microwave", "Cabinet",
                                                      "Drawer", "Safe"};
    for (const auto& o : openable)
        if (o == loc) return true;
    return false;
}

std::string find_phrase(const std::string& name) {
    return "find " + std::string(article_for(name)) + " " + name;
}

}  // namespace

std::vector<std::string> map_alfred_action(const AlfredAction& action, AlfredContext& context) {
    switch (action.verb) {
        case AlfredVerb::GotoLocation:
            return {find_phrase(action.loc.empty() ? action.obj : action.loc)};
        case AlfredVerb::PickupObject:
            context.holding = true;
            return {"pick up the " + action.obj};
        case AlfredVerb::SliceObject:
            return {"slice the " + action.obj};
        case AlfredVerb::ToggleObject: {
            bool& on = context.toggle_on[action.obj];
            on = !on;
            return {on ? "turn on the " + action.obj : "turn off the " + action.obj};
        }
        case AlfredVerb::NoOp:
            return {};
        case AlfredVerb::PutObject: {
            const bool opens = context.loc_requires_opening.value_or(
                builtin_requires_opening(action.loc));
            context.holding = false;
            if (opens) return {"open the " + action.loc, "put down the object in hand"};
            return {"put down the object in hand"};
        }
        case AlfredVerb::CleanObject:
            return {"put down the object in hand",
                    "find a Faucet",
                    "turn on the Faucet",
                    "turn off the Faucet",
                    find_phrase(action.obj),
                    "pick up the " + action.obj};
        case AlfredVerb::CoolObject:
            return {"open the Fridge",
                    "put down the object in hand",
                    "close the Fridge",
                    "open the Fridge",
                    find_phrase(action.obj),
                    "pick up the " + action.obj,
                    "close the Fridge"};
        case AlfredVerb::HeatObject:
            return {"open the Microwave",
                    "put down the object in hand",
                    "close the Microwave",
                    "turn on the Microwave",
                    "turn off the Microwave",
                    "open the Microwave",
                    find_phrase(action.obj),
                    "pick up the " + action.obj,
                    "close the Microwave"};
    }
    throw UnknownActionError("unmapped action");
}

// ---- rule-based visual description -------------------------------------------

std::string gen_visual_description(const TableState& state) {
    std::vector<const TableObject*> order;
    for (const auto& o : state.objects) order.push_back(&o);
    std::stable_sort(order.begin(), order.end(),
                     [](const TableObject* a, const TableObject* b) {
                         return a->coord[1] < b->coord[1];
                     });
    std::ostringstream os;
    os << "From left to right, I can see ";
    for (size_t i = 0; i < order.size(); ++i) {
        const auto* o = order[i];
        const std::string color(color_name(classify_color(o->rgb)));
        std::string label;
        if (o->real_name == "sponge" || o->real_name == "shape sorter") {
            label = color + " " + o->real_name;
        } else {
            const size_t sp = o->real_name.find(' ');
            const std::string tail =
                sp == std::string::npos ? o->real_name : o->real_name.substr(sp + 1);
            label = color + " " + tail;
        }
        if (i > 0) os << (i + 1 == order.size() ? ", and " : ", ");
        os << article_for(label) << " " << label << " at " << coord_text(o->coord);
    }
    os << ".";
    return os.str();
}

// ---- external corpora ---------------------------------------------------------

PriorCorpus external_prior_adapter(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw SchemaError("cannot open external corpus: " + path);
    PriorCorpus corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError("line " + std::to_string(lineno) + ": " + e.what());
        }
        if (!j.contains("prompt") || !j["prompt"].is_string())
            throw SchemaError("line " + std::to_string(lineno) + ": missing prompt field");
        if (!j.contains("response") || !j["response"].is_string())
            throw SchemaError("line " + std::to_string(lineno) + ": missing response field");
        json out;
        out["kind"] = "external_stub";
        out["prompt"] = j["prompt"];
        out["response"] = j["response"];
        corpus.push_back(PriorRecord{PriorKind::ExternalStub, out.dump(), {}});
    }
    return corpus;
}

// ---- validation -----------------------------------------------------------------

namespace {

std::optional<std::string> check_record(const Vocabulary& v, const PriorRecord& rec,
                                        PriorKind kind) {
    json j;
    try {
        j = json::parse(rec.json_line);
    } catch (const json::exception& e) {
        return std::string("unparsable json: ") + e.what();
    }
    if (j.value("kind", "") != std::string(prior_kind_name(kind))) return "kind mismatch";

    switch (kind) {
        case PriorKind::RawTraj:
        case PriorKind::TrajAug: {
            for (const char* f : {"instruction", "prompt", "generation"})
                if (!j.contains(f) || !j[f].is_string()) return std::string("missing ") + f;
            if (!j.contains("interaction_history") || !j["interaction_history"].is_array())
                return "missing interaction_history";
            const ActionMode mode =
                j.value("env", "house") == std::string("table") ? ActionMode::LowLevel
                                                                : ActionMode::HighLevel;
            auto parsed = parse_response_text(v, j["generation"].get<std::string>(), mode);
            if (!parse_ok(parsed)) return "generation does not parse";
            // The stored token target must agree with the re-encoded text.
            TokenSeq re = encode_response(v, std::get<StructuredResponse>(parsed));
            if (re != rec.sample.target) return "target tokens disagree with generation text";
            break;
        }
        case PriorKind::MaskedAction: {
            for (const char* f : {"instruction", "query", "answer"})
                if (!j.contains(f)) return std::string("missing ") + f;
            const auto& meta = j["meta"];
            auto actions = meta["actions"].get<std::vector<std::string>>();
            const int mask = meta["mask_index"].get<int>();
            if (mask < 0 || mask >= static_cast<int>(actions.size())) return "mask out of range";
            if (meta["masked_action"].get<std::string>() != actions[static_cast<size_t>(mask)])
                return "masked action does not match the original sequence";
            if (j["query"].get<std::string>().find("[MASK]") == std::string::npos)
                return "query lacks the mask";
            break;
        }
        case PriorKind::Reorder: {
            const auto& meta = j["meta"];
            auto actions = meta["actions"].get<std::vector<std::string>>();
            auto perm = meta["permutation"].get<std::vector<int>>();
            if (perm.size() != actions.size()) return "permutation arity mismatch";
            std::vector<int> sorted = perm;
            std::sort(sorted.begin(), sorted.end());
            for (size_t i = 0; i < sorted.size(); ++i)
                if (sorted[i] != static_cast<int>(i)) return "not a permutation";
            break;
        }
        case PriorKind::AbsGround:
        case PriorKind::RelGround:
        case PriorKind::CombGround: {
            for (const char* f : {"question", "answer"})
                if (!j.contains(f) || !j[f].is_string() || j[f].get<std::string>().empty())
                    return std::string("missing ") + f;
            break;
        }
        case PriorKind::ExternalStub: {
            for (const char* f : {"prompt", "response"})
                if (!j.contains(f) || !j[f].is_string()) return std::string("missing ") + f;
            break;
        }
    }
    return std::nullopt;
}

}  // namespace

CorpusReport validate_corpus(const Vocabulary& v, const PriorCorpus& corpus, PriorKind kind) {
    CorpusReport report;
    report.total = static_cast<int>(corpus.size());
    for (int i = 0; i < report.total; ++i) {
        auto why = check_record(v, corpus[static_cast<size_t>(i)], kind);
        if (why) report.failures.emplace_back(i, *why);
    }
    return report;
}

bool mapped_sequence_executes(const Vocabulary& v, const AlfredAction& action,
                              const std::vector<std::string>& phrases, std::string* why) {
    // Context-consistent starting state for the mapped sequence.
    HouseState s;
    for (const auto& e : house_catalog()) {
        if (e.receptacle) {
            HouseReceptacle r;
            r.openable = e.openable;
            r.open = !e.openable;
            s.receptacles.emplace(std::string(e.name), r);
        }
        if (e.toggleable) s.toggles.emplace(std::string(e.name), false);
    }
    auto place = [&](const std::string& obj, const std::string& recep) {
        s.objects[obj] = HouseObject{recep};
        s.receptacles[recep].contains.push_back(obj);
    };

    switch (action.verb) {
        case AlfredVerb::GotoLocation:
            s.agent_at = "CounterTop";
            break;
        case AlfredVerb::PickupObject:
            place(action.obj, "CounterTop");
            s.agent_at = action.obj;
            break;
        case AlfredVerb::SliceObject:
            place(action.obj, "CounterTop");
            s.agent_at = action.obj;
            break;
        case AlfredVerb::ToggleObject:
            s.agent_at = action.obj;
            break;
        case AlfredVerb::NoOp:
            s.agent_at = "CounterTop";
            break;
        case AlfredVerb::PutObject:
            s.objects[action.obj] = HouseObject{};
            s.holding = action.obj;
            s.agent_at = action.loc;
            break;
        case AlfredVerb::CleanObject:
            s.objects[action.obj] = HouseObject{};
            s.holding = action.obj;
            s.agent_at = "SinkBasin";
            break;
        case AlfredVerb::CoolObject:
            s.objects[action.obj] = HouseObject{};
            s.holding = action.obj;
            s.agent_at = "Fridge";
            break;
        case AlfredVerb::HeatObject:
            s.objects[action.obj] = HouseObject{};
            s.holding = action.obj;
            s.agent_at = "Microwave";
            break;
    }

    HouseTask dummy;
    dummy.tmpl = HouseTemplate::PickPlace;
    dummy.target = action.obj.empty() ? "Apple" : action.obj;
    dummy.dest = "CounterTop";
    dummy.horizon = 100;
    dummy.goal_conditions = {Predicate{PredicateKind::In, "__never__", "__never__"}};

    for (const auto& phrase : phrases) {
        const auto* skill = v.skill_by_phrase(phrase);
        if (!skill) {
            if (why) *why = "phrase outside the skill table: " + phrase;
            return false;
        }
        auto r = step_house(v, s, dummy, HighLevelAction{skill->skill_id, skill->phrase});
        if (!r.feedback.valid) {
            if (why) *why = phrase + " -> " + r.feedback.text;
            return false;
        }
        s = r.state;
    }
    return true;
}

}  // namespace era
