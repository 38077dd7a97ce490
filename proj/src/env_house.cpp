#include "era/env_house.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <random>
#include <sstream>

namespace era {

namespace {

uint64_t fnv1a(std::string_view s, uint64_t h = 1469598103934665603ull) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

uint64_t mix_seed(uint64_t a, uint64_t b) {
    uint64_t x = a * 0x9E3779B97F4A7C15ull + b + 0x2545F4914F6CDD1Dull;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ull;
    x ^= x >> 27;
    x *= 0x94D049BB133111EBull;
    x ^= x >> 31;
    return x;
}

const char* kValidFeedback = "Last action executed successfully.";

Feedback ok_feedback() { return Feedback{kValidFeedback, true, InvalidReason::None, ""}; }

Feedback invalid_feedback(InvalidReason reason, const std::string& detail,
                          const std::string& arg) {
    return Feedback{"Last action is invalid. " + detail, false, reason, arg};
}

struct TemplateDef {
    std::vector<std::string_view> objects;
    std::vector<std::string_view> dests;
    std::vector<std::string_view> patterns;  // {o} object, {d} destination
};

const TemplateDef& template_def(HouseTemplate t) {
    static const std::vector<std::string_view> place_dests = {
        "CounterTop", "DiningTable", "SideTable", "Shelf",  "Fridge", "Cabinet",
        "Drawer",     "GarbageCan",  "CoffeeTable", "Desk", "Sofa",   "Bed",
    };
    static const TemplateDef pick_place = {
        {"Apple", "Bread", "Tomato", "Potato", "Lettuce", "Egg", "Plate", "Spoon", "Fork",
         "Knife", "Cup", "Mug", "Bowl", "Book", "Candle", "SoapBar", "SprayBottle",
         "RemoteControl", "KeyChain", "Pencil", "Watch", "CellPhone", "Vase", "WineBottle"},
        place_dests,
        {"Put {a_o} {o} in the {d}", "Place the {o} in the {d}", "Move the {o} to the {d}",
         "Set the {o} down inside the {d}", "Carry the {o} over to the {d}",
         "Stow the {o} away in the {d}"},
    };
    static const TemplateDef pick_two = {
        {"Apple", "Egg", "Book", "Candle", "SoapBar", "Cup", "Tomato", "Pencil"},
        place_dests,
        {"Put two {o}s in the {d}", "Place both {o}s in the {d}",
         "Move the two {o}s to the {d}", "Gather two {o}s into the {d}",
         "Carry both {o}s over to the {d}", "Collect the pair of {o}s in the {d}"},
    };
    static const TemplateDef clean_place = {
        {"Apple", "Tomato", "Potato", "Lettuce", "Plate", "Spoon", "Fork", "Knife", "Cup",
         "Mug", "Bowl", "SoapBar"},
        {"CounterTop", "DiningTable", "SideTable", "Shelf", "Fridge", "Cabinet", "Drawer",
         "CoffeeTable"},
        {"Put a washed {o} in the {d}", "Place the clean {o} in the {d}",
         "Wash the {o} and put it in the {d}", "Rinse the {o} and set it in the {d}",
         "Clean the {o}, then move it to the {d}",
         "After washing the {o}, leave it in the {d}"},
    };
    static const TemplateDef heat_place = {
        {"Apple", "Bread", "Tomato", "Potato", "Egg", "Plate", "Mug", "Cup"},
        {"CounterTop", "DiningTable", "SideTable", "Shelf", "Fridge", "Cabinet",
         "GarbageCan", "Desk"},
        {"Put a heated {o} in the {d}", "Place the hot {o} in the {d}",
         "Heat the {o} and put it in the {d}", "Warm the {o} up and set it in the {d}",
         "Microwave the {o}, then move it to the {d}",
         "After heating the {o}, leave it in the {d}"},
    };
    static const TemplateDef cool_place = {
        {"Apple", "Bread", "Tomato", "Potato", "Egg", "Lettuce", "WineBottle", "Bottle", "Mug"},
        {"CounterTop", "DiningTable", "SideTable", "Shelf", "Microwave", "Cabinet",
         "GarbageCan", "Desk"},
        {"Put a chilled {o} in the {d}", "Place the cold {o} in the {d}",
         "Cool the {o} and put it in the {d}", "Chill the {o} and set it in the {d}",
         "Refrigerate the {o}, then move it to the {d}",
         "After cooling the {o}, leave it in the {d}"},
    };
    static const TemplateDef examine = {
        {"Book", "Newspaper", "RemoteControl", "Pencil", "Pen", "Watch", "KeyChain",
         "CellPhone", "Statue", "CreditCard"},
        {"FloorLamp"},
        {"Examine the {o} under the floor lamp", "Look at the {o} in the light of the floor lamp",
         "Hold the {o} under the lamp light", "Inspect the {o} by the floor lamp",
         "Check the {o} in the lamp light", "Study the {o} beneath the floor lamp"},
    };
    switch (t) {
        case HouseTemplate::PickPlace: return pick_place;
        case HouseTemplate::PickTwoPlace: return pick_two;
        case HouseTemplate::CleanPlace: return clean_place;
        case HouseTemplate::HeatPlace: return heat_place;
        case HouseTemplate::CoolPlace: return cool_place;
        case HouseTemplate::ExamineLight: return examine;
    }
    return pick_place;
}

std::string expand_pattern(std::string_view pattern, const std::string& obj,
                           const std::string& dest) {
    std::string out;
    for (size_t i = 0; i < pattern.size();) {
        if (pattern.substr(i, 5) == "{a_o}") {
            out += article_for(obj);
            i += 5;
        } else if (pattern.substr(i, 3) == "{o}") {
            out += obj;
            i += 3;
        } else if (pattern.substr(i, 3) == "{d}") {
            out += dest;
            i += 3;
        } else {
            out += pattern[i++];
        }
    }
    return out;
}

const char* template_token(HouseTemplate t) {
    switch (t) {
        case HouseTemplate::PickPlace: return "task:pick_place";
        case HouseTemplate::PickTwoPlace: return "task:pick_two";
        case HouseTemplate::CleanPlace: return "task:clean_place";
        case HouseTemplate::HeatPlace: return "task:heat_place";
        case HouseTemplate::CoolPlace: return "task:cool_place";
        case HouseTemplate::ExamineLight: return "task:examine_light";
    }
    return "task:pick_place";
}

}  // namespace

std::string_view house_template_name(HouseTemplate t) {
    switch (t) {
        case HouseTemplate::PickPlace: return "pick_place";
        case HouseTemplate::PickTwoPlace: return "pick_two";
        case HouseTemplate::CleanPlace: return "clean_place";
        case HouseTemplate::HeatPlace: return "heat_place";
        case HouseTemplate::CoolPlace: return "cool_place";
        case HouseTemplate::ExamineLight: return "examine_light";
    }
    return "pick_place";
}

std::string Predicate::sexpr() const {
    switch (kind) {
        case PredicateKind::In: return "(in " + obj + " " + recep + ")";
        case PredicateKind::Holding: return "(holding " + obj + ")";
        case PredicateKind::Clean: return "(clean " + obj + ")";
        case PredicateKind::Heated: return "(heated " + obj + ")";
        case PredicateKind::Cooled: return "(cooled " + obj + ")";
        case PredicateKind::Sliced: return "(sliced " + obj + ")";
        case PredicateKind::On: return "(on " + obj + ")";
    }
    return "";
}

Predicate Predicate::parse(const std::string& sexpr) {
    std::string body = sexpr;
    if (body.size() < 2 || body.front() != '(' || body.back() != ')')
        throw std::invalid_argument("predicate must be parenthesized: " + sexpr);
    body = body.substr(1, body.size() - 2);
    std::istringstream is(body);
    std::string head, a, b;
    is >> head >> a >> b;
    Predicate p;
    p.obj = a;
    if (head == "in") {
        p.kind = PredicateKind::In;
        p.recep = b;
        if (b.empty()) throw std::invalid_argument("(in ...) needs two arguments");
    } else if (head == "holding") {
        p.kind = PredicateKind::Holding;
    } else if (head == "clean") {
        p.kind = PredicateKind::Clean;
    } else if (head == "heated") {
        p.kind = PredicateKind::Heated;
    } else if (head == "cooled") {
        p.kind = PredicateKind::Cooled;
    } else if (head == "sliced") {
        p.kind = PredicateKind::Sliced;
    } else if (head == "on") {
        p.kind = PredicateKind::On;
    } else {
        throw std::invalid_argument("unknown predicate head: " + head);
    }
    return p;
}

bool eval_predicate(const HouseState& s, const Predicate& p) {
    switch (p.kind) {
        case PredicateKind::In: {
            auto it = s.objects.find(p.obj);
            return it != s.objects.end() && it->second.location == p.recep;
        }
        case PredicateKind::Holding:
            return s.holding == p.obj;
        case PredicateKind::Clean: {
            auto it = s.objects.find(p.obj);
            return it != s.objects.end() && it->second.clean;
        }
        case PredicateKind::Heated: {
            auto it = s.objects.find(p.obj);
            return it != s.objects.end() && it->second.heated;
        }
        case PredicateKind::Cooled: {
            auto it = s.objects.find(p.obj);
            return it != s.objects.end() && it->second.cooled;
        }
        case PredicateKind::Sliced: {
            auto it = s.objects.find(p.obj);
            return it != s.objects.end() && it->second.sliced;
        }
        case PredicateKind::On: {
            auto it = s.toggles.find(p.obj);
            return it != s.toggles.end() && it->second;
        }
    }
    return false;
}

bool check_goal(const HouseState& s, const HouseTask& task) {
    for (const auto& p : task.goal_conditions)
        if (!eval_predicate(s, p)) return false;
    return true;
}

std::string HouseTask::to_json() const {
    nlohmann::json j;
    j["instruction"] = instruction;
    j["template"] = std::string(house_template_name(tmpl));
    j["paraphrase"] = paraphrase;
    j["target"] = target;
    if (!target2.empty()) j["target2"] = target2;
    j["dest"] = dest;
    j["goal_conditions"] = nlohmann::json::array();
    for (const auto& p : goal_conditions) j["goal_conditions"].push_back(p.sexpr());
    j["subgoals"] = nlohmann::json::array();
    for (const auto& p : subgoals) j["subgoals"].push_back(p.sexpr());
    j["horizon"] = horizon;
    j["split"] = std::string(split_name(split));
    j["seed"] = seed;
    return j.dump(2);
}

HouseTask HouseTask::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    HouseTask t;
    t.instruction = j.at("instruction").get<std::string>();
    std::string tmpl = j.at("template").get<std::string>();
    bool found = false;
    for (int i = 0; i < kNumHouseTemplates; ++i) {
        if (house_template_name(static_cast<HouseTemplate>(i)) == tmpl) {
            t.tmpl = static_cast<HouseTemplate>(i);
            found = true;
        }
    }
    if (!found) throw UnknownTaskError("unknown template: " + tmpl);
    t.paraphrase = j.value("paraphrase", 0);
    t.target = j.at("target").get<std::string>();
    t.target2 = j.value("target2", "");
    t.dest = j.at("dest").get<std::string>();
    for (const auto& e : j.at("goal_conditions")) t.goal_conditions.push_back(Predicate::parse(e));
    for (const auto& e : j.at("subgoals")) t.subgoals.push_back(Predicate::parse(e));
    t.horizon = j.value("horizon", 30);
    t.split = j.value("split", "seen") == std::string("unseen") ? Split::Unseen : Split::Seen;
    t.seed = j.value("seed", 0ull);
    return t;
}

TokenSeq HouseTask::tokens(const Vocabulary& v) const {
    TokenSeq out;
    out.push_back(v.require("instruction:"));
    out.push_back(v.require(template_token(tmpl)));
    out.push_back(v.require("phr:" + std::to_string(paraphrase)));
    out.push_back(v.require(target));
    if (!target2.empty()) out.push_back(v.require(target2));
    out.push_back(v.require(dest));
    return out;
}

TokenSeq Feedback::tokens(const Vocabulary& v) const {
    TokenSeq out;
    out.push_back(v.require("feedback:"));
    if (valid) {
        out.push_back(v.require("fb:ok"));
        return out;
    }
    out.push_back(v.require("fb:invalid"));
    const char* rsn = nullptr;
    switch (reason) {
        case InvalidReason::None: break;
        case InvalidReason::Holding: rsn = "rsn:holding"; break;
        case InvalidReason::NotClose: rsn = "rsn:not_close"; break;
        case InvalidReason::Missing: rsn = "rsn:missing"; break;
        case InvalidReason::ClosedRecep: rsn = "rsn:closed_recep"; break;
        case InvalidReason::NotHolding: rsn = "rsn:not_holding"; break;
        case InvalidReason::NoRecep: rsn = "rsn:no_recep"; break;
        case InvalidReason::NotOpenable: rsn = "rsn:not_openable"; break;
        case InvalidReason::AlreadyOpen: rsn = "rsn:already_open"; break;
        case InvalidReason::AlreadyClosed: rsn = "rsn:already_closed"; break;
        case InvalidReason::NotToggleable: rsn = "rsn:not_toggleable"; break;
        case InvalidReason::AlreadyOn: rsn = "rsn:already_on"; break;
        case InvalidReason::AlreadyOff: rsn = "rsn:already_off"; break;
        case InvalidReason::NotSliceable: rsn = "rsn:not_sliceable"; break;
        case InvalidReason::AlreadySliced: rsn = "rsn:already_sliced"; break;
        case InvalidReason::Parse: rsn = "rsn:parse"; break;
        case InvalidReason::Range: rsn = "rsn:range"; break;
    }
    if (rsn) out.push_back(v.require(rsn));
    if (!arg.empty()) {
        if (auto t = v.find(arg)) out.push_back(*t);
    }
    return out;
}

std::pair<HouseState, Observation> reset_house(const Vocabulary& v, const HouseTask& task,
                                               uint64_t seed) {
    if (task.target.empty() || task.dest.empty()) throw UnknownTaskError("task missing slots");
    if (!house_entry(task.target)) throw UnknownTaskError("unknown target: " + task.target);
    std::mt19937_64 rng(mix_seed(task.seed, seed));

    HouseState s;
    std::vector<std::string> open_receps;
    for (const auto& e : house_catalog()) {
        if (e.receptacle) {
            HouseReceptacle r;
            r.openable = e.openable;
            r.open = !e.openable;  // openable receptacles start closed
            s.receptacles.emplace(std::string(e.name), r);
            if (!e.openable && e.name != "Floor") open_receps.push_back(std::string(e.name));
        }
        if (e.toggleable) s.toggles.emplace(std::string(e.name), false);
    }

    auto place = [&](const std::string& obj, const std::string& recep) {
        HouseObject o;
        o.location = recep;
        s.objects[obj] = o;
        s.receptacles[recep].contains.push_back(obj);
    };
    auto pick_recep = [&](const std::string& avoid) {
        std::uniform_int_distribution<size_t> d(0, open_receps.size() - 1);
        std::string r = open_receps[d(rng)];
        while (r == avoid) r = open_receps[d(rng)];
        return r;
    };

    place(task.target, pick_recep(task.dest));
    if (!task.target2.empty()) place(task.target2, pick_recep(task.dest));

    // Distractors drawn from the pickupable catalog.
    std::vector<std::string> candidates;
    for (const auto& e : house_catalog()) {
        if (!e.pickupable) continue;
        std::string n(e.name);
        if (n == task.target || n == task.target2) continue;
        candidates.push_back(n);
    }
    std::uniform_int_distribution<int> n_distract(4, 7);
    int k = n_distract(rng);
    for (int i = 0; i < k && !candidates.empty(); ++i) {
        std::uniform_int_distribution<size_t> d(0, candidates.size() - 1);
        size_t idx = d(rng);
        place(candidates[idx], pick_recep(""));
        candidates.erase(candidates.begin() + static_cast<long>(idx));
    }

    std::uniform_int_distribution<size_t> start(0, open_receps.size() - 1);
    s.agent_at = open_receps[start(rng)];
    s.holding.clear();
    s.step = 0;
    return {s, render_observation_house(v, s)};
}

Observation render_observation_house(const Vocabulary& v, const HouseState& s) {
    std::ostringstream text;
    TokenSeq toks;
    toks.push_back(v.require("observation:"));
    toks.push_back(v.require("at:"));

    const std::string& at = s.agent_at;
    auto push_name = [&](const std::string& n) {
        if (auto t = v.find(n)) toks.push_back(*t);
    };

    text << "You are at the " << at << ".";
    push_name(at);

    auto emit_object_state = [&](const std::string& name) {
        const auto& o = s.objects.at(name);
        std::vector<std::string> st;
        if (o.sliced) st.push_back("sliced");
        if (o.clean) st.push_back("clean");
        if (o.heated) st.push_back("heated");
        if (o.cooled) st.push_back("cooled");
        push_name(name);
        for (const auto& f : st) toks.push_back(v.require("st:" + f));
        if (st.empty()) return std::string();
        std::string joined;
        for (size_t i = 0; i < st.size(); ++i) joined += (i ? ", " : "") + st[i];
        return " (" + joined + ")";
    };

    auto recep_it = s.receptacles.find(at);
    if (recep_it != s.receptacles.end()) {
        const auto& r = recep_it->second;
        if (r.openable) {
            toks.push_back(v.require(r.open ? "st:open" : "st:closed"));
            text << " The " << at << " is " << (r.open ? "open." : "closed.");
        }
        auto tog = s.toggles.find(at);
        if (tog != s.toggles.end()) {
            toks.push_back(v.require(tog->second ? "st:on" : "st:off"));
            text << " The " << at << " is turned " << (tog->second ? "on." : "off.");
        }
        if (r.open) {
            toks.push_back(v.require("contains:"));
            if (r.contains.empty()) {
                text << " You see nothing on the " << at << ".";
                toks.push_back(v.require("nothing"));
            } else {
                text << " On the " << at << " you see";
                for (size_t i = 0; i < r.contains.size(); ++i) {
                    std::string extra = emit_object_state(r.contains[i]);
                    text << (i == 0 ? " " : ", ") << r.contains[i] << extra;
                }
                text << ".";
            }
        }
    } else if (auto tog = s.toggles.find(at); tog != s.toggles.end()) {
        toks.push_back(v.require(tog->second ? "st:on" : "st:off"));
        text << " The " << at << " is turned " << (tog->second ? "on." : "off.");
    } else if (auto obj = s.objects.find(at); obj != s.objects.end()) {
        std::string extra = emit_object_state(at);
        if (!obj->second.location.empty()) {
            text << " You are next to the " << at << extra << ", which is in the "
                 << obj->second.location << ".";
            push_name(obj->second.location);
        } else {
            text << " You are next to the " << at << extra << ".";
        }
    }

    toks.push_back(v.require("holding:"));
    if (s.holding.empty()) {
        text << " You are holding nothing.";
        toks.push_back(v.require("nothing"));
    } else {
        text << " You are holding the " << s.holding << ".";
        push_name(s.holding);
    }
    return Observation{text.str(), toks};
}

namespace {

bool name_in_scene(const HouseState& s, const std::string& n) {
    return s.objects.count(n) > 0 || s.receptacles.count(n) > 0 || s.toggles.count(n) > 0;
}

// Receptacle the agent could place into from where it stands.
std::string nearby_receptacle(const HouseState& s) {
    if (s.receptacles.count(s.agent_at)) return s.agent_at;
    auto it = s.objects.find(s.agent_at);
    if (it != s.objects.end() && !it->second.location.empty()) return it->second.location;
    return "";
}

void remove_from_receptacle(HouseState& s, const std::string& obj, const std::string& recep) {
    auto& c = s.receptacles.at(recep).contains;
    c.erase(std::remove(c.begin(), c.end(), obj), c.end());
}

}  // namespace

HouseStepResult step_house(const Vocabulary& v, const HouseState& prev, const HouseTask& task,
                           const HighLevelAction& action) {
    HouseStepResult res;
    res.state = prev;
    HouseState& s = res.state;

    std::vector<bool> before(task.subgoals.size());
    for (size_t i = 0; i < task.subgoals.size(); ++i)
        before[i] = eval_predicate(prev, task.subgoals[i]);

    const SkillEntry* skill = v.skill_by_phrase(action.phrase);
    Feedback fb = ok_feedback();
    if (!skill || skill->skill_id != action.skill_id) {
        fb = invalid_feedback(InvalidReason::Parse, "The action could not be parsed", "");
    } else {
        const std::string& x = skill->target;
        switch (skill->verb) {
            case SkillVerb::Find: {
                if (!name_in_scene(s, x))
                    fb = invalid_feedback(InvalidReason::Missing,
                                          "There is no " + x + " in the scene", x);
                else
                    s.agent_at = x;
                break;
            }
            case SkillVerb::PickUp: {
                auto it = s.objects.find(x);
                if (it == s.objects.end())
                    fb = invalid_feedback(InvalidReason::Missing,
                                          "There is no " + x + " in the scene", x);
                else if (!s.holding.empty())
                    fb = invalid_feedback(InvalidReason::Holding,
                                          "Robot is currently holding " + s.holding, s.holding);
                else if (s.agent_at != x)
                    fb = invalid_feedback(InvalidReason::NotClose,
                                          "Robot is not close to the " + x, x);
                else if (!it->second.location.empty() &&
                         !s.receptacles.at(it->second.location).open)
                    fb = invalid_feedback(InvalidReason::ClosedRecep,
                                          "The " + x + " is inside a closed receptacle", x);
                else {
                    std::string recep = it->second.location;
                    if (!recep.empty()) remove_from_receptacle(s, x, recep);
                    it->second.location.clear();
                    s.holding = x;
                    if (!recep.empty()) s.agent_at = recep;
                }
                break;
            }
            case SkillVerb::PutDown:
            case SkillVerb::Drop: {
                if (s.holding.empty()) {
                    fb = invalid_feedback(InvalidReason::NotHolding,
                                          "Robot is not holding any object", "");
                    break;
                }
                std::string recep =
                    skill->verb == SkillVerb::Drop ? "Floor" : nearby_receptacle(s);
                if (recep.empty()) {
                    fb = invalid_feedback(InvalidReason::NoRecep,
                                          "There is no receptacle nearby to put the object in",
                                          "");
                } else if (!s.receptacles.at(recep).open) {
                    fb = invalid_feedback(InvalidReason::ClosedRecep,
                                          "The " + recep + " is closed", recep);
                } else {
                    s.objects.at(s.holding).location = recep;
                    s.receptacles.at(recep).contains.push_back(s.holding);
                    s.holding.clear();
                }
                break;
            }
            case SkillVerb::Open:
            case SkillVerb::Close: {
                const bool opening = skill->verb == SkillVerb::Open;
                auto it = s.receptacles.find(x);
                if (it == s.receptacles.end() || !it->second.openable)
                    fb = invalid_feedback(
                        InvalidReason::NotOpenable,
                        "The " + x + " cannot be " + (opening ? "opened" : "closed"), x);
                else if (s.agent_at != x)
                    fb = invalid_feedback(InvalidReason::NotClose,
                                          "Robot is not close to the " + x, x);
                else if (opening && it->second.open)
                    fb = invalid_feedback(InvalidReason::AlreadyOpen,
                                          "The " + x + " is already open", x);
                else if (!opening && !it->second.open)
                    fb = invalid_feedback(InvalidReason::AlreadyClosed,
                                          "The " + x + " is already closed", x);
                else {
                    it->second.open = opening;
                    if (!opening && x == "Fridge")
                        for (const auto& inside : it->second.contains)
                            s.objects.at(inside).cooled = true;
                }
                break;
            }
            case SkillVerb::TurnOn:
            case SkillVerb::TurnOff: {
                const bool on = skill->verb == SkillVerb::TurnOn;
                auto it = s.toggles.find(x);
                if (it == s.toggles.end())
                    fb = invalid_feedback(InvalidReason::NotToggleable,
                                          "The " + x + " cannot be turned on or off", x);
                else if (s.agent_at != x)
                    fb = invalid_feedback(InvalidReason::NotClose,
                                          "Robot is not close to the " + x, x);
                else if (on && it->second)
                    fb = invalid_feedback(InvalidReason::AlreadyOn,
                                          "The " + x + " is already turned on", x);
                else if (!on && !it->second)
                    fb = invalid_feedback(InvalidReason::AlreadyOff,
                                          "The " + x + " is already turned off", x);
                else {
                    it->second = on;
                    if (on && x == "Faucet")
                        for (const auto& inside : s.receptacles.at("SinkBasin").contains)
                            s.objects.at(inside).clean = true;
                    if (on && x == "Microwave" && !s.receptacles.at("Microwave").open)
                        for (const auto& inside : s.receptacles.at("Microwave").contains)
                            s.objects.at(inside).heated = true;
                }
                break;
            }
            case SkillVerb::Slice: {
                auto it = s.objects.find(x);
                const auto* entry = house_entry(x);
                if (it == s.objects.end())
                    fb = invalid_feedback(InvalidReason::Missing,
                                          "There is no " + x + " in the scene", x);
                else if (!entry || !entry->sliceable)
                    fb = invalid_feedback(InvalidReason::NotSliceable,
                                          "The " + x + " cannot be sliced", x);
                else if (s.agent_at != x)
                    fb = invalid_feedback(InvalidReason::NotClose,
                                          "Robot is not close to the " + x, x);
                else if (it->second.sliced)
                    fb = invalid_feedback(InvalidReason::AlreadySliced,
                                          "The " + x + " is already sliced", x);
                else if (!it->second.location.empty() &&
                         !s.receptacles.at(it->second.location).open)
                    fb = invalid_feedback(InvalidReason::ClosedRecep,
                                          "The " + x + " is inside a closed receptacle", x);
                else
                    it->second.sliced = true;
                break;
            }
        }
    }

    if (!fb.valid) res.state = prev;  // invalid actions preserve state
    res.state.step = prev.step + 1;
    res.feedback = fb;

    for (size_t i = 0; i < task.subgoals.size(); ++i) {
        if (before[i]) continue;
        if (!eval_predicate(res.state, task.subgoals[i])) continue;
        const std::string key = task.subgoals[i].sexpr();
        if (res.state.fired_subgoals.count(key)) continue;
        res.state.fired_subgoals.insert(key);
        res.subgoal_events.push_back(task.subgoals[i]);
    }

    if (check_goal(res.state, task)) {
        res.done = true;
        res.terminal = TerminalKind::Success;
    } else if (res.state.step >= task.horizon) {
        res.done = true;
        res.terminal = TerminalKind::StepLimit;
    }
    return res;
}

HouseStepResult step_house_unparsed(const Vocabulary& v, const HouseState& prev,
                                    const HouseTask& task) {
    (void)v;
    HouseStepResult res;
    res.state = prev;
    res.state.step = prev.step + 1;
    res.feedback =
        invalid_feedback(InvalidReason::Parse, "The action could not be parsed", "");
    if (res.state.step >= task.horizon) {
        res.done = true;
        res.terminal = TerminalKind::StepLimit;
    }
    return res;
}

std::vector<HighLevelAction> expert_plan_high(const Vocabulary& v, const HouseTask& task,
                                              const HouseState& s) {
    std::vector<HighLevelAction> plan;
    std::set<std::string> opened;
    auto add = [&](SkillVerb verb, const std::string& target = "") {
        plan.push_back(HighLevelAction::from_skill(v, verb, target));
    };
    auto dest_openable = [&](const std::string& d) {
        auto it = s.receptacles.find(d);
        return it != s.receptacles.end() && it->second.openable;
    };
    auto fetch = [&](const std::string& obj) {
        add(SkillVerb::Find, obj);
        add(SkillVerb::PickUp, obj);
    };
    auto deliver = [&](const std::string& d) {
        add(SkillVerb::Find, d);
        if (dest_openable(d) && !opened.count(d)) {
            add(SkillVerb::Open, d);
            opened.insert(d);
        }
        add(SkillVerb::PutDown);
    };

    if (s.objects.find(task.target) == s.objects.end())
        throw UnsolvableError("target not present: " + task.target);

    switch (task.tmpl) {
        case HouseTemplate::PickPlace:
            fetch(task.target);
            deliver(task.dest);
            break;
        case HouseTemplate::PickTwoPlace:
            fetch(task.target);
            deliver(task.dest);
            fetch(task.target2);
            deliver(task.dest);
            break;
        case HouseTemplate::CleanPlace:
            fetch(task.target);
            add(SkillVerb::Find, "SinkBasin");
            add(SkillVerb::PutDown);
            add(SkillVerb::Find, "Faucet");
            add(SkillVerb::TurnOn, "Faucet");
            add(SkillVerb::TurnOff, "Faucet");
            fetch(task.target);
            deliver(task.dest);
            break;
        case HouseTemplate::HeatPlace:
            fetch(task.target);
            add(SkillVerb::Find, "Microwave");
            add(SkillVerb::Open, "Microwave");
            add(SkillVerb::PutDown);
            add(SkillVerb::Close, "Microwave");
            add(SkillVerb::TurnOn, "Microwave");
            add(SkillVerb::TurnOff, "Microwave");
            add(SkillVerb::Open, "Microwave");
            add(SkillVerb::Find, task.target);
            add(SkillVerb::PickUp, task.target);
            add(SkillVerb::Close, "Microwave");
            deliver(task.dest);
            break;
        case HouseTemplate::CoolPlace:
            fetch(task.target);
            add(SkillVerb::Find, "Fridge");
            add(SkillVerb::Open, "Fridge");
            add(SkillVerb::PutDown);
            add(SkillVerb::Close, "Fridge");
            add(SkillVerb::Open, "Fridge");
            add(SkillVerb::Find, task.target);
            add(SkillVerb::PickUp, task.target);
            add(SkillVerb::Close, "Fridge");
            deliver(task.dest);
            break;
        case HouseTemplate::ExamineLight:
            fetch(task.target);
            add(SkillVerb::Find, "FloorLamp");
            add(SkillVerb::TurnOn, "FloorLamp");
            break;
    }
    if (static_cast<int>(plan.size()) > task.horizon)
        throw UnsolvableError("expert plan exceeds horizon");
    return plan;
}

namespace {

HouseTask make_house_task(HouseTemplate tmpl, const std::string& obj, const std::string& dest,
                          int paraphrase, Split split, uint64_t seed) {
    HouseTask t;
    t.tmpl = tmpl;
    t.paraphrase = paraphrase;
    t.target = obj;
    t.dest = dest;
    t.split = split;
    t.seed = seed;
    const auto& def = template_def(tmpl);
    t.instruction = expand_pattern(def.patterns[static_cast<size_t>(paraphrase)], obj, dest);
    auto sub = [&](PredicateKind k, const std::string& o, const std::string& r = "") {
        Predicate p;
        p.kind = k;
        p.obj = o;
        p.recep = r;
        return p;
    };
    switch (tmpl) {
        case HouseTemplate::PickPlace:
            t.goal_conditions = {sub(PredicateKind::In, obj, dest)};
            t.subgoals = {sub(PredicateKind::Holding, obj), sub(PredicateKind::In, obj, dest)};
            break;
        case HouseTemplate::PickTwoPlace:
            t.target2 = obj + "_2";
            t.goal_conditions = {sub(PredicateKind::In, obj, dest),
                                 sub(PredicateKind::In, t.target2, dest)};
            t.subgoals = {sub(PredicateKind::Holding, obj), sub(PredicateKind::In, obj, dest),
                          sub(PredicateKind::Holding, t.target2),
                          sub(PredicateKind::In, t.target2, dest)};
            break;
        case HouseTemplate::CleanPlace:
            t.goal_conditions = {sub(PredicateKind::Clean, obj), sub(PredicateKind::In, obj, dest)};
            t.subgoals = {sub(PredicateKind::Holding, obj), sub(PredicateKind::Clean, obj),
                          sub(PredicateKind::In, obj, dest)};
            break;
        case HouseTemplate::HeatPlace:
            t.goal_conditions = {sub(PredicateKind::Heated, obj),
                                 sub(PredicateKind::In, obj, dest)};
            t.subgoals = {sub(PredicateKind::Holding, obj), sub(PredicateKind::Heated, obj),
                          sub(PredicateKind::In, obj, dest)};
            break;
        case HouseTemplate::CoolPlace:
            t.goal_conditions = {sub(PredicateKind::Cooled, obj),
                                 sub(PredicateKind::In, obj, dest)};
            t.subgoals = {sub(PredicateKind::Holding, obj), sub(PredicateKind::Cooled, obj),
                          sub(PredicateKind::In, obj, dest)};
            break;
        case HouseTemplate::ExamineLight:
            t.dest = "FloorLamp";
            t.goal_conditions = {sub(PredicateKind::Holding, obj),
                                 sub(PredicateKind::On, "FloorLamp")};
            t.subgoals = {sub(PredicateKind::Holding, obj), sub(PredicateKind::On, "FloorLamp")};
            break;
    }
    return t;
}

}  // namespace

std::vector<HouseTask> house_task_suite(Split split, int count, uint64_t seed) {
    std::vector<HouseTask> out;
    std::mt19937_64 rng(mix_seed(seed, 0xA11CE));
    int tries = 0;
    while (static_cast<int>(out.size()) < count && tries < count * 200) {
        ++tries;
        auto tmpl = static_cast<HouseTemplate>(out.size() % kNumHouseTemplates);
        const auto& def = template_def(tmpl);
        std::uniform_int_distribution<size_t> od(0, def.objects.size() - 1);
        std::uniform_int_distribution<size_t> dd(0, def.dests.size() - 1);
        std::string obj(def.objects[od(rng)]);
        std::string dest(def.dests[dd(rng)]);
        uint64_t h = fnv1a(std::string(house_template_name(tmpl)) + "|" + obj + "|" + dest);
        bool unseen_combo = (h % 5) == 4;
        if ((split == Split::Unseen) != unseen_combo) continue;
        std::uniform_int_distribution<int> pd(split == Split::Seen ? 0 : 4,
                                              split == Split::Seen ? 3 : 5);
        out.push_back(make_house_task(tmpl, obj, dest, pd(rng), split,
                                      mix_seed(seed, out.size() + 1)));
    }
    if (static_cast<int>(out.size()) < count)
        throw UnknownTaskError("could not fill task suite");
    return out;
}

}  // namespace era
