#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "era/catalog.hpp"

namespace era {

using TokenId = int32_t;
using TokenSeq = std::vector<TokenId>;

enum class TokenClass : uint8_t {
    Tag,         // the four response delimiters
    Int,         // integers 0..120, shared by coordinate and orientation slots
    Color,
    Shape,
    Reflection,
    PlanVerb,
    Struct,      // structural markers for state inputs and QA prompts
    Name,        // household catalog names
    Skill,       // full high-level action phrases
};

struct TokenDef {
    TokenId id = -1;
    std::string surface;
    TokenClass cls = TokenClass::Struct;
    int skill_id = -1;  // class-local action id, Skill tokens only
};

enum class SkillVerb : uint8_t {
    Find,
    PickUp,
    PutDown,
    Drop,
    Open,
    Close,
    TurnOn,
    TurnOff,
    Slice,
};

struct SkillEntry {
    int skill_id = -1;
    std::string phrase;
    SkillVerb verb = SkillVerb::Find;
    std::string target;  // empty for PutDown/Drop
    TokenId token = -1;
};

// Closed, versioned token vocabulary. Surfaces are unique; id -> surface -> id
// round-trips exactly. Skill phrases double as single tokens and carry a
// class-local skill id used in the rendered action wire format.
class Vocabulary {
public:
    static const Vocabulary& standard();  // the built-in versioned vocabulary

    const std::string& version() const { return version_; }
    int size() const { return static_cast<int>(tokens_.size()); }

    const TokenDef& token(TokenId id) const;
    std::optional<TokenId> find(std::string_view surface) const;
    const std::string& surface(TokenId id) const { return token(id).surface; }
    TokenClass cls(TokenId id) const { return token(id).cls; }

    // Lookup that throws std::out_of_range with the surface in the message.
    TokenId require(std::string_view surface) const;

    // Fixed tags.
    TokenId think_start() const { return think_start_; }
    TokenId think_end() const { return think_end_; }
    TokenId action_start() const { return action_start_; }
    TokenId action_end() const { return action_end_; }

    TokenId int_token(int value) const;           // 0..120
    int int_value(TokenId id) const;              // -1 if not an Int token
    TokenId color_token(int color_index) const;
    TokenId shape_token(Shape s) const;
    TokenId reflection_token(int reflection_index) const;
    int reflection_index(TokenId id) const;       // -1 if not Reflection

    // Skill table.
    const std::vector<SkillEntry>& skills() const { return skills_; }
    const SkillEntry* skill_by_id(int skill_id) const;
    const SkillEntry* skill_by_phrase(std::string_view phrase) const;
    const SkillEntry* skill_by_action(SkillVerb verb, std::string_view target) const;
    const SkillEntry* skill_by_token(TokenId id) const;

    std::string to_json() const;
    static Vocabulary from_json(const std::string& text);

private:
    Vocabulary() = default;
    static Vocabulary build();
    void reindex();

    std::string version_;
    std::vector<TokenDef> tokens_;
    std::unordered_map<std::string, TokenId> by_surface_;
    std::vector<SkillEntry> skills_;
    std::unordered_map<std::string, int> skill_by_phrase_;
    std::unordered_map<TokenId, int> skill_by_token_;
    TokenId think_start_ = -1, think_end_ = -1, action_start_ = -1, action_end_ = -1;
    TokenId int_base_ = -1, color_base_ = -1, shape_base_ = -1, reflection_base_ = -1;
};

// Number of distinct reflection symbols: continue, replan, error-detected,
// and subgoal-done:1..8.
inline constexpr int kNumReflections = 11;
inline constexpr int kMaxIntToken = 120;

// "a" or "an" by vowel-initial word, case-insensitive.
std::string_view article_for(std::string_view word);

inline int count_tokens(const TokenSeq& seq) { return static_cast<int>(seq.size()); }

}  // namespace era
