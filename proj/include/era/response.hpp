#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "era/vocab.hpp"

namespace era {

enum class ActionMode : uint8_t { HighLevel, LowLevel };

struct HighLevelAction {
    int skill_id = -1;
    std::string phrase;

    SkillVerb verb(const Vocabulary& v) const;
    std::string target(const Vocabulary& v) const;
    static HighLevelAction from_skill(const Vocabulary& v, SkillVerb verb, std::string_view target);

    bool operator==(const HighLevelAction&) const = default;
};

struct LowLevelAction {
    // [X, Y, Z, Roll, Pitch, Yaw, Gripper]; gripper 0 = close, 1 = open.
    std::array<int, 7> v{};

    int x() const { return v[0]; }
    int y() const { return v[1]; }
    int z() const { return v[2]; }
    int gripper() const { return v[6]; }
    bool in_range() const;

    bool operator==(const LowLevelAction&) const = default;
};

using ActionVariant = std::variant<HighLevelAction, LowLevelAction>;

struct VisualEntry {
    int color = 0;  // palette index
    Shape shape = Shape::Cube;
    std::array<int, 3> coord{};

    bool operator==(const VisualEntry&) const = default;
};

enum class ReflectionKind : uint8_t { Continue, Replan, ErrorDetected, SubgoalDone };

struct Reflection {
    ReflectionKind kind = ReflectionKind::Continue;
    int subgoal = 0;  // 1-based, SubgoalDone only

    int symbol_index() const;
    static Reflection from_symbol_index(int idx);

    bool operator==(const Reflection&) const = default;
};

// One reasoning + action turn in the closed grammar. Plan steps are
// sequences over the plan alphabet (plan verbs, catalog names, colors,
// shapes); a step starts at each verb token.
struct StructuredResponse {
    std::vector<VisualEntry> visual;
    std::optional<Reflection> reflection;
    TokenSeq plan;
    ActionVariant action = HighLevelAction{};

    bool operator==(const StructuredResponse&) const = default;
};

enum class ParseError : uint8_t {
    MissingThinkStart,
    UnclosedThink,
    MissingActionStart,
    UnclosedAction,
    TrailingTokens,
    BadVisualEntry,
    BadThinkToken,
    BadArity,
    BadActionToken,
    OutOfRange,
    UnknownPhrase,
    IdPhraseMismatch,
    EmptyAction,
};

struct ParseFailure {
    ParseError error;
    std::string detail;
};

using ParseResult = std::variant<StructuredResponse, ParseFailure>;

inline bool parse_ok(const ParseResult& r) { return std::holds_alternative<StructuredResponse>(r); }

std::string_view parse_error_name(ParseError e);

// Token codec. encode_response throws UnknownSymbolError when a component is
// outside the closed alphabets; decode_response never throws on malformed
// input: failures come back as values.
struct UnknownSymbolError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

TokenSeq encode_response(const Vocabulary& v, const StructuredResponse& resp);
ParseResult decode_response(const Vocabulary& v, const TokenSeq& tokens, ActionMode mode);

// Text wire format: `<|think_start|>...<|think_end|><|action_start|>...<|action_end|>`.
// render_* and parse_* round-trip for any valid response.
std::string render_action_text(const Vocabulary& v, const ActionVariant& action);
std::string render_think_text(const Vocabulary& v, const StructuredResponse& resp);
std::string render_response_text(const Vocabulary& v, const StructuredResponse& resp);
ParseResult parse_response_text(const Vocabulary& v, const std::string& text, ActionMode mode);

// Reflection sentences used by the text rendering.
std::string reflection_sentence(const Reflection& r);

// Plan helpers.
std::string render_plan_text(const Vocabulary& v, const TokenSeq& plan);
bool is_plan_token(const Vocabulary& v, TokenId id);

}  // namespace era
