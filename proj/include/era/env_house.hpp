#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "era/env_common.hpp"
#include "era/response.hpp"
#include "era/vocab.hpp"

namespace era {

// MiniHouse: a deterministic household-planning POMDP with phrase-level
// skills, predicate subgoals, and benchmark-style feedback strings.

enum class HouseTemplate : uint8_t {
    PickPlace,
    PickTwoPlace,
    CleanPlace,
    HeatPlace,
    CoolPlace,
    ExamineLight,
};
inline constexpr int kNumHouseTemplates = 6;

std::string_view house_template_name(HouseTemplate t);

enum class PredicateKind : uint8_t { In, Holding, Clean, Heated, Cooled, Sliced, On };

struct Predicate {
    PredicateKind kind = PredicateKind::In;
    std::string obj;
    std::string recep;  // In only

    std::string sexpr() const;
    static Predicate parse(const std::string& sexpr);
    auto operator<=>(const Predicate&) const = default;
};

struct HouseTask {
    std::string instruction;
    HouseTemplate tmpl = HouseTemplate::PickPlace;
    int paraphrase = 0;
    std::string target;
    std::string target2;  // PickTwoPlace only
    std::string dest;
    std::vector<Predicate> goal_conditions;
    std::vector<Predicate> subgoals;
    int horizon = 30;
    Split split = Split::Seen;
    uint64_t seed = 0;

    std::string to_json() const;
    static HouseTask from_json(const std::string& text);
    TokenSeq tokens(const Vocabulary& v) const;
};

struct HouseObject {
    std::string location;  // receptacle name; empty while held
    bool sliced = false;
    bool clean = false;
    bool heated = false;
    bool cooled = false;
    bool on = false;

    bool operator==(const HouseObject&) const = default;
};

struct HouseReceptacle {
    bool openable = false;
    bool open = true;
    std::vector<std::string> contains;

    bool operator==(const HouseReceptacle&) const = default;
};

struct HouseState {
    std::map<std::string, HouseObject> objects;
    std::map<std::string, HouseReceptacle> receptacles;
    std::map<std::string, bool> toggles;  // standalone toggleables (plus Microwave)
    std::string agent_at;
    std::string holding;  // empty when hands free
    int step = 0;
    std::set<std::string> fired_subgoals;  // predicate sexprs already reported

    bool operator==(const HouseState&) const = default;
};

struct HouseStepResult {
    HouseState state;
    Feedback feedback;
    bool done = false;
    TerminalKind terminal = TerminalKind::None;
    std::vector<Predicate> subgoal_events;
};

bool eval_predicate(const HouseState& s, const Predicate& p);
bool check_goal(const HouseState& s, const HouseTask& task);

std::pair<HouseState, Observation> reset_house(const Vocabulary& v, const HouseTask& task,
                                               uint64_t seed);
HouseStepResult step_house(const Vocabulary& v, const HouseState& s, const HouseTask& task,
                           const HighLevelAction& action);
// Invalid-string path: charges the step and returns parse feedback.
HouseStepResult step_house_unparsed(const Vocabulary& v, const HouseState& s,
                                    const HouseTask& task);

Observation render_observation_house(const Vocabulary& v, const HouseState& s);

std::vector<HighLevelAction> expert_plan_high(const Vocabulary& v, const HouseTask& task,
                                              const HouseState& s);

// Deterministic task suites; combos and paraphrases are partitioned so the
// unseen split holds out object-destination pairs and phrasings.
std::vector<HouseTask> house_task_suite(Split split, int count, uint64_t seed);

}  // namespace era
