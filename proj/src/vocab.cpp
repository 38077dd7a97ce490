#include "era/vocab.hpp"

#include <nlohmann/json.hpp>

#include <cctype>
#include <map>
#include <stdexcept>

namespace era {

namespace {

const char* kVersion = "minihouse-minitable-v1";

const std::vector<std::string>& struct_surfaces() {
    static const std::vector<std::string> s = {
        "instruction:", "history:", "step:", "action:", "feedback:", "observation:",
        "at:", "holding:", "contains:", "gripper:", "grip:open", "grip:closed",
        "st:open", "st:closed", "st:on", "st:off", "st:clean", "st:heated",
        "st:cooled", "st:sliced", "nothing", "[MASK]",
        "task:pick_place", "task:pick_two", "task:clean_place", "task:heat_place",
        "task:cool_place", "task:examine_light", "task:place_container", "task:place_sorter",
        "phr:0", "phr:1", "phr:2", "phr:3", "phr:4", "phr:5",
        "q:coord_of", "q:object_at", "q:ordinal_loc", "q:is_ordinal", "q:mask", "q:reorder",
        "ord:1", "ord:2", "ord:3", "ord:4", "ord:5", "ord:6", "ord:7", "ord:last",
        "ans:yes", "ans:no",
        "fb:ok", "fb:invalid",
        "rsn:holding", "rsn:not_close", "rsn:missing", "rsn:closed_recep",
        "rsn:not_holding", "rsn:no_recep", "rsn:not_openable", "rsn:already_open",
        "rsn:already_closed", "rsn:not_toggleable", "rsn:already_on", "rsn:already_off",
        "rsn:not_sliceable", "rsn:already_sliced", "rsn:parse", "rsn:range",
    };
    return s;
}

const std::vector<std::string>& plan_verb_surfaces() {
    static const std::vector<std::string> s = {
        "find", "pick up", "put down", "drop", "open", "close",
        "turn on", "turn off", "slice",
        "hover", "descend", "grasp", "lift", "move", "release",
    };
    return s;
}

std::string reflection_surface(int index) {
    switch (index) {
        case 0: return "refl:continue";
        case 1: return "refl:replan";
        case 2: return "refl:error";
        default: return "refl:subgoal:" + std::to_string(index - 2);
    }
}

// Skill ids pinned to match recorded-trajectory fixtures; the remaining
// phrases fill free slots in block order.
const std::map<int, std::string>& pinned_skill_ids() {
    static const std::map<int, std::string> pins = {
        {18, "find a DiningTable"},
        {19, "find a Spoon"},
        {31, "find a Plate"},
        {105, "pick up the Spoon"},
        {122, "pick up the Plate"},
        {133, "put down the object in hand"},
    };
    return pins;
}

}  // namespace

std::string_view article_for(std::string_view word) {
    if (word.empty()) return "a";
    switch (std::tolower(static_cast<unsigned char>(word.front()))) {
        case 'a':
        case 'e':
        case 'i':
        case 'o':
        case 'u':
            return "an";
        default:
            return "a";
    }
}

const Vocabulary& Vocabulary::standard() {
    static const Vocabulary v = build();
    return v;
}

Vocabulary Vocabulary::build() {
    Vocabulary v;
    v.version_ = kVersion;

    auto add = [&v](std::string surface, TokenClass cls, int skill_id = -1) {
        TokenDef def;
        def.id = static_cast<TokenId>(v.tokens_.size());
        def.surface = std::move(surface);
        def.cls = cls;
        def.skill_id = skill_id;
        v.tokens_.push_back(std::move(def));
        return v.tokens_.back().id;
    };

    v.think_start_ = add("<|think_start|>", TokenClass::Tag);
    v.think_end_ = add("<|think_end|>", TokenClass::Tag);
    v.action_start_ = add("<|action_start|>", TokenClass::Tag);
    v.action_end_ = add("<|action_end|>", TokenClass::Tag);

    v.int_base_ = static_cast<TokenId>(v.tokens_.size());
    for (int i = 0; i <= kMaxIntToken; ++i) add(std::to_string(i), TokenClass::Int);

    v.color_base_ = static_cast<TokenId>(v.tokens_.size());
    for (const auto& c : color_palette()) add(std::string(c.name), TokenClass::Color);

    v.shape_base_ = static_cast<TokenId>(v.tokens_.size());
    for (int i = 0; i < kNumShapes; ++i)
        add(std::string(shape_name(static_cast<Shape>(i))), TokenClass::Shape);

    v.reflection_base_ = static_cast<TokenId>(v.tokens_.size());
    for (int i = 0; i < kNumReflections; ++i) add(reflection_surface(i), TokenClass::Reflection);

    for (const auto& s : plan_verb_surfaces()) add(s, TokenClass::PlanVerb);
    for (const auto& s : struct_surfaces()) add(s, TokenClass::Struct);
    for (const auto& e : house_catalog()) add(std::string(e.name), TokenClass::Name);

    // Skill phrases in block order: find, pick up, open, close, turn on,
    // turn off, slice, then the two holder actions.
    struct PendingSkill {
        std::string phrase;
        SkillVerb verb;
        std::string target;
    };
    std::vector<PendingSkill> pending;
    for (const auto& e : house_catalog()) {
        std::string n(e.name);
        pending.push_back({"find " + std::string(article_for(n)) + " " + n, SkillVerb::Find, n});
    }
    for (const auto& e : house_catalog())
        if (e.pickupable)
            pending.push_back({"pick up the " + std::string(e.name), SkillVerb::PickUp, std::string(e.name)});
    for (const auto& e : house_catalog())
        if (e.openable)
            pending.push_back({"open the " + std::string(e.name), SkillVerb::Open, std::string(e.name)});
    for (const auto& e : house_catalog())
        if (e.openable)
            pending.push_back({"close the " + std::string(e.name), SkillVerb::Close, std::string(e.name)});
    for (const auto& e : house_catalog())
        if (e.toggleable)
            pending.push_back({"turn on the " + std::string(e.name), SkillVerb::TurnOn, std::string(e.name)});
    for (const auto& e : house_catalog())
        if (e.toggleable)
            pending.push_back({"turn off the " + std::string(e.name), SkillVerb::TurnOff, std::string(e.name)});
    for (const auto& e : house_catalog())
        if (e.sliceable)
            pending.push_back({"slice the " + std::string(e.name), SkillVerb::Slice, std::string(e.name)});
    pending.push_back({"drop the object in hand", SkillVerb::Drop, ""});
    pending.push_back({"put down the object in hand", SkillVerb::PutDown, ""});

    const int n_skills = static_cast<int>(pending.size());
    const auto& pins = pinned_skill_ids();
    for (const auto& [id, phrase] : pins) {
        if (id >= n_skills) throw std::logic_error("pinned skill id beyond table size");
        bool found = false;
        for (const auto& p : pending) found = found || p.phrase == phrase;
        if (!found) throw std::logic_error("pinned skill phrase missing: " + phrase);
    }

    std::vector<int> assigned(static_cast<size_t>(n_skills), -1);  // skill_id -> pending index
    for (int pi = 0; pi < n_skills; ++pi) {
        for (const auto& [id, phrase] : pins) {
            if (pending[static_cast<size_t>(pi)].phrase == phrase) {
                assigned[static_cast<size_t>(id)] = pi;
                break;
            }
        }
    }
    int next_free = 0;
    for (int pi = 0; pi < n_skills; ++pi) {
        bool pinned = false;
        for (const auto& [id, phrase] : pins)
            pinned = pinned || pending[static_cast<size_t>(pi)].phrase == phrase;
        if (pinned) continue;
        while (assigned[static_cast<size_t>(next_free)] != -1) ++next_free;
        assigned[static_cast<size_t>(next_free)] = pi;
    }

    v.skills_.resize(static_cast<size_t>(n_skills));
    for (int id = 0; id < n_skills; ++id) {
        const auto& p = pending[static_cast<size_t>(assigned[static_cast<size_t>(id)])];
        TokenId tok = add(p.phrase, TokenClass::Skill, id);
        v.skills_[static_cast<size_t>(id)] = SkillEntry{id, p.phrase, p.verb, p.target, tok};
    }

    v.reindex();
    return v;
}

void Vocabulary::reindex() {
    by_surface_.clear();
    skill_by_phrase_.clear();
    skill_by_token_.clear();
    for (const auto& t : tokens_) {
        auto [it, inserted] = by_surface_.emplace(t.surface, t.id);
        if (!inserted) throw std::logic_error("duplicate token surface: " + t.surface);
    }
    for (int i = 0; i < static_cast<int>(skills_.size()); ++i) {
        skill_by_phrase_.emplace(skills_[static_cast<size_t>(i)].phrase, i);
        skill_by_token_.emplace(skills_[static_cast<size_t>(i)].token, i);
    }
}

const TokenDef& Vocabulary::token(TokenId id) const {
    if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
    return tokens_[static_cast<size_t>(id)];
}

std::optional<TokenId> Vocabulary::find(std::string_view surface) const {
    auto it = by_surface_.find(std::string(surface));
    if (it == by_surface_.end()) return std::nullopt;
    return it->second;
}

TokenId Vocabulary::require(std::string_view surface) const {
    auto id = find(surface);
    if (!id) throw std::out_of_range("unknown token surface: " + std::string(surface));
    return *id;
}

TokenId Vocabulary::int_token(int value) const {
    if (value < 0 || value > kMaxIntToken) throw std::out_of_range("int token out of range");
    return int_base_ + value;
}

int Vocabulary::int_value(TokenId id) const {
    if (id < int_base_ || id > int_base_ + kMaxIntToken) return -1;
    return id - int_base_;
}

TokenId Vocabulary::color_token(int color_index) const {
    if (color_index < 0 || color_index >= kNumColors) throw std::out_of_range("color index");
    return color_base_ + color_index;
}

TokenId Vocabulary::shape_token(Shape s) const {
    return shape_base_ + static_cast<int>(s);
}

TokenId Vocabulary::reflection_token(int reflection_index) const {
    if (reflection_index < 0 || reflection_index >= kNumReflections)
        throw std::out_of_range("reflection index");
    return reflection_base_ + reflection_index;
}

int Vocabulary::reflection_index(TokenId id) const {
    if (id < reflection_base_ || id >= reflection_base_ + kNumReflections) return -1;
    return id - reflection_base_;
}

const SkillEntry* Vocabulary::skill_by_id(int skill_id) const {
    if (skill_id < 0 || skill_id >= static_cast<int>(skills_.size())) return nullptr;
    return &skills_[static_cast<size_t>(skill_id)];
}

const SkillEntry* Vocabulary::skill_by_phrase(std::string_view phrase) const {
    auto it = skill_by_phrase_.find(std::string(phrase));
    if (it == skill_by_phrase_.end()) return nullptr;
    return &skills_[static_cast<size_t>(it->second)];
}

const SkillEntry* Vocabulary::skill_by_action(SkillVerb verb, std::string_view target) const {
    for (const auto& s : skills_) {
        if (s.verb != verb) continue;
        if (verb == SkillVerb::PutDown || verb == SkillVerb::Drop) return &s;
        if (s.target == target) return &s;
    }
    return nullptr;
}

const SkillEntry* Vocabulary::skill_by_token(TokenId id) const {
    auto it = skill_by_token_.find(id);
    if (it == skill_by_token_.end()) return nullptr;
    return &skills_[static_cast<size_t>(it->second)];
}

std::string Vocabulary::to_json() const {
    nlohmann::json j;
    j["version"] = version_;
    auto& arr = j["tokens"] = nlohmann::json::array();
    for (const auto& t : tokens_) {
        nlohmann::json e;
        e["id"] = t.id;
        e["surface"] = t.surface;
        e["class"] = static_cast<int>(t.cls);
        if (t.skill_id >= 0) e["skill_id"] = t.skill_id;
        arr.push_back(std::move(e));
    }
    auto& sk = j["skills"] = nlohmann::json::array();
    for (const auto& s : skills_) {
        nlohmann::json e;
        e["skill_id"] = s.skill_id;
        e["phrase"] = s.phrase;
        e["verb"] = static_cast<int>(s.verb);
        e["target"] = s.target;
        e["token"] = s.token;
        sk.push_back(std::move(e));
    }
    return j.dump(2);
}

Vocabulary Vocabulary::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    Vocabulary v;
    v.version_ = j.at("version").get<std::string>();
    for (const auto& e : j.at("tokens")) {
        TokenDef t;
        t.id = e.at("id").get<TokenId>();
        t.surface = e.at("surface").get<std::string>();
        t.cls = static_cast<TokenClass>(e.at("class").get<int>());
        t.skill_id = e.value("skill_id", -1);
        if (t.id != static_cast<TokenId>(v.tokens_.size()))
            throw std::runtime_error("vocabulary file has non-contiguous token ids");
        v.tokens_.push_back(std::move(t));
    }
    for (const auto& e : j.at("skills")) {
        SkillEntry s;
        s.skill_id = e.at("skill_id").get<int>();
        s.phrase = e.at("phrase").get<std::string>();
        s.verb = static_cast<SkillVerb>(e.at("verb").get<int>());
        s.target = e.at("target").get<std::string>();
        s.token = e.at("token").get<TokenId>();
        v.skills_.push_back(std::move(s));
    }
    // Recover the fixed anchors from surfaces.
    v.reindex();
    v.think_start_ = v.require("<|think_start|>");
    v.think_end_ = v.require("<|think_end|>");
    v.action_start_ = v.require("<|action_start|>");
    v.action_end_ = v.require("<|action_end|>");
    v.int_base_ = v.require("0");
    v.color_base_ = v.require(std::string(color_palette().front().name));
    v.shape_base_ = v.require(std::string(shape_name(Shape::Cube)));
    v.reflection_base_ = v.require("refl:continue");
    return v;
}

}  // namespace era
