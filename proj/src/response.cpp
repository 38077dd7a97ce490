#include "era/response.hpp"

#include <regex>
#include <sstream>
#include <stdexcept>

namespace era {

namespace {

const char* kRawFirstStepPrefix =
    "This is the first step in the episode, I should start by formulating the first plan: ";

const char* kContinueSentence =
    "Based on the interaction history and current observation, I am in the middle of the "
    "last plan and will continue carrying it out.";
const char* kReplanSentence =
    "Based on the interaction history and current observation, I have completed the previous "
    "plan and can now formulate a new plan.";
const char* kErrorSentence =
    "The last action was invalid, so I will adjust the plan to recover from the error.";

bool starts_with(std::string_view s, std::string_view prefix) {
    return s.size() >= prefix.size() && s.substr(0, prefix.size()) == prefix;
}

std::string trim(std::string_view s) {
    size_t b = s.find_first_not_of(" \t\n");
    if (b == std::string_view::npos) return "";
    size_t e = s.find_last_not_of(" \t\n");
    return std::string(s.substr(b, e - b + 1));
}

}  // namespace

SkillVerb HighLevelAction::verb(const Vocabulary& v) const {
    const auto* s = v.skill_by_phrase(phrase);
    if (!s) throw UnknownSymbolError("unknown skill phrase: " + phrase);
    return s->verb;
}

std::string HighLevelAction::target(const Vocabulary& v) const {
    const auto* s = v.skill_by_phrase(phrase);
    if (!s) throw UnknownSymbolError("unknown skill phrase: " + phrase);
    return s->target;
}

HighLevelAction HighLevelAction::from_skill(const Vocabulary& v, SkillVerb verb,
                                            std::string_view target) {
    const auto* s = v.skill_by_action(verb, target);
    if (!s)
        throw UnknownSymbolError("no skill for verb/target: " + std::string(target));
    return HighLevelAction{s->skill_id, s->phrase};
}

bool LowLevelAction::in_range() const {
    for (int i = 0; i < 3; ++i)
        if (v[i] < 0 || v[i] > 100) return false;
    for (int i = 3; i < 6; ++i)
        if (v[i] < 0 || v[i] > 120) return false;
    return v[6] == 0 || v[6] == 1;
}

int Reflection::symbol_index() const {
    switch (kind) {
        case ReflectionKind::Continue: return 0;
        case ReflectionKind::Replan: return 1;
        case ReflectionKind::ErrorDetected: return 2;
        case ReflectionKind::SubgoalDone: return 2 + subgoal;
    }
    return 0;
}

Reflection Reflection::from_symbol_index(int idx) {
    switch (idx) {
        case 0: return {ReflectionKind::Continue, 0};
        case 1: return {ReflectionKind::Replan, 0};
        case 2: return {ReflectionKind::ErrorDetected, 0};
        default: return {ReflectionKind::SubgoalDone, idx - 2};
    }
}

std::string_view parse_error_name(ParseError e) {
    switch (e) {
        case ParseError::MissingThinkStart: return "MissingThinkStart";
        case ParseError::UnclosedThink: return "UnclosedThink";
        case ParseError::MissingActionStart: return "MissingActionStart";
        case ParseError::UnclosedAction: return "UnclosedAction";
        case ParseError::TrailingTokens: return "TrailingTokens";
        case ParseError::BadVisualEntry: return "BadVisualEntry";
        case ParseError::BadThinkToken: return "BadThinkToken";
        case ParseError::BadArity: return "BadArity";
        case ParseError::BadActionToken: return "BadActionToken";
        case ParseError::OutOfRange: return "OutOfRange";
        case ParseError::UnknownPhrase: return "UnknownPhrase";
        case ParseError::IdPhraseMismatch: return "IdPhraseMismatch";
        case ParseError::EmptyAction: return "EmptyAction";
    }
    return "Unknown";
}

bool is_plan_token(const Vocabulary& v, TokenId id) {
    switch (v.cls(id)) {
        case TokenClass::PlanVerb:
        case TokenClass::Name:
        case TokenClass::Color:
        case TokenClass::Shape:
            return true;
        default:
            return false;
    }
}

TokenSeq encode_response(const Vocabulary& v, const StructuredResponse& resp) {
    TokenSeq out;
    out.push_back(v.think_start());
    for (const auto& e : resp.visual) {
        if (e.color < 0 || e.color >= kNumColors)
            throw UnknownSymbolError("visual color outside palette");
        out.push_back(v.color_token(e.color));
        out.push_back(v.shape_token(e.shape));
        for (int c : e.coord) {
            if (c < 0 || c > 100) throw UnknownSymbolError("visual coordinate outside [0,100]");
            out.push_back(v.int_token(c));
        }
    }
    if (resp.reflection) out.push_back(v.reflection_token(resp.reflection->symbol_index()));
    for (TokenId t : resp.plan) {
        if (!is_plan_token(v, t)) throw UnknownSymbolError("plan token outside plan alphabet");
        out.push_back(t);
    }
    out.push_back(v.think_end());
    out.push_back(v.action_start());
    if (const auto* hi = std::get_if<HighLevelAction>(&resp.action)) {
        const auto* s = v.skill_by_phrase(hi->phrase);
        if (!s) throw UnknownSymbolError("unknown skill phrase: " + hi->phrase);
        out.push_back(s->token);
    } else {
        const auto& lo = std::get<LowLevelAction>(resp.action);
        for (int i = 0; i < 7; ++i) {
            if (lo.v[i] < 0 || lo.v[i] > kMaxIntToken)
                throw UnknownSymbolError("action component outside token range");
            out.push_back(v.int_token(lo.v[i]));
        }
    }
    out.push_back(v.action_end());
    return out;
}

ParseResult decode_response(const Vocabulary& v, const TokenSeq& tokens, ActionMode mode) {
    size_t i = 0;
    const size_t n = tokens.size();
    auto fail = [](ParseError e, std::string detail = "") {
        return ParseResult(ParseFailure{e, std::move(detail)});
    };
    for (TokenId t : tokens)
        if (t < 0 || t >= v.size()) return fail(ParseError::BadThinkToken, "token id out of vocabulary");

    if (n == 0 || tokens[0] != v.think_start()) return fail(ParseError::MissingThinkStart);
    i = 1;

    StructuredResponse resp;
    // Visual entries: (color, shape, x, y, z) groups.
    while (i < n && v.cls(tokens[i]) == TokenClass::Color) {
        if (i + 4 >= n) return fail(ParseError::BadVisualEntry, "truncated visual entry");
        if (v.cls(tokens[i + 1]) != TokenClass::Shape)
            return fail(ParseError::BadVisualEntry, "expected shape after color");
        VisualEntry e;
        e.color = tokens[i] - v.color_token(0);
        e.shape = static_cast<Shape>(tokens[i + 1] - v.shape_token(Shape::Cube));
        for (int c = 0; c < 3; ++c) {
            int val = v.int_value(tokens[i + 2 + static_cast<size_t>(c)]);
            if (val < 0 || val > 100) return fail(ParseError::BadVisualEntry, "coordinate slot");
            e.coord[static_cast<size_t>(c)] = val;
        }
        resp.visual.push_back(e);
        i += 5;
    }
    if (i < n && v.cls(tokens[i]) == TokenClass::Reflection) {
        resp.reflection = Reflection::from_symbol_index(v.reflection_index(tokens[i]));
        ++i;
    }
    while (i < n && tokens[i] != v.think_end()) {
        if (!is_plan_token(v, tokens[i]))
            return fail(ParseError::BadThinkToken, std::string(v.surface(tokens[i])));
        resp.plan.push_back(tokens[i]);
        ++i;
    }
    if (i >= n) return fail(ParseError::UnclosedThink);
    ++i;  // think_end

    if (i >= n || tokens[i] != v.action_start()) return fail(ParseError::MissingActionStart);
    ++i;
    TokenSeq action_tokens;
    while (i < n && tokens[i] != v.action_end()) action_tokens.push_back(tokens[i++]);
    if (i >= n) return fail(ParseError::UnclosedAction);
    ++i;  // action_end
    if (i != n) return fail(ParseError::TrailingTokens);

    if (action_tokens.empty()) return fail(ParseError::EmptyAction);
    if (mode == ActionMode::HighLevel) {
        if (action_tokens.size() != 1)
            return fail(ParseError::BadArity, "high-level action must be a single skill");
        const auto* s = v.skill_by_token(action_tokens[0]);
        if (!s) return fail(ParseError::BadActionToken, std::string(v.surface(action_tokens[0])));
        resp.action = HighLevelAction{s->skill_id, s->phrase};
    } else {
        if (action_tokens.size() != 7) return fail(ParseError::BadArity, "expected 7 components");
        LowLevelAction lo;
        for (int c = 0; c < 7; ++c) {
            int val = v.int_value(action_tokens[static_cast<size_t>(c)]);
            if (val < 0) return fail(ParseError::BadActionToken, "non-integer action slot");
            lo.v[static_cast<size_t>(c)] = val;
        }
        resp.action = lo;
    }
    return resp;
}

std::string reflection_sentence(const Reflection& r) {
    switch (r.kind) {
        case ReflectionKind::Continue: return kContinueSentence;
        case ReflectionKind::Replan: return kReplanSentence;
        case ReflectionKind::ErrorDetected: return kErrorSentence;
        case ReflectionKind::SubgoalDone:
            return "Subgoal " + std::to_string(r.subgoal) +
                   " is now complete, and I will continue with the remaining steps of the plan.";
    }
    return kContinueSentence;
}

namespace {

std::optional<Reflection> parse_reflection_sentence(const std::string& text) {
    if (text == kContinueSentence) return Reflection{ReflectionKind::Continue, 0};
    if (text == kReplanSentence) return Reflection{ReflectionKind::Replan, 0};
    if (text == kErrorSentence) return Reflection{ReflectionKind::ErrorDetected, 0};
    static const std::regex re(R"(^Subgoal (\d+) is now complete.*)");
    std::smatch m;
    if (std::regex_match(text, m, re)) {
        int k = std::stoi(m[1].str());
        if (k >= 1 && k <= 8) return Reflection{ReflectionKind::SubgoalDone, k};
    }
    return std::nullopt;
}

std::string visual_entry_label(const VisualEntry& e) {
    return std::string(color_name(e.color)) + " " + std::string(shape_name(e.shape));
}

std::string render_visual_text(const std::vector<VisualEntry>& visual) {
    std::ostringstream os;
    os << "From left to right, I can see ";
    for (size_t i = 0; i < visual.size(); ++i) {
        if (i > 0) os << (i + 1 == visual.size() ? ", and " : ", ");
        const std::string label = visual_entry_label(visual[i]);
        os << article_for(label) << " " << label << " at [" << visual[i].coord[0] << ", "
           << visual[i].coord[1] << ", " << visual[i].coord[2] << "]";
    }
    os << ".";
    return os.str();
}

std::optional<std::vector<VisualEntry>> parse_visual_text(const std::string& text) {
    static const std::regex entry_re(
        R"(\ban? ([a-z]+) ([a-z][a-z ]*?) at \[(\d+), (\d+), (\d+)\])");
    std::vector<VisualEntry> out;
    auto begin = std::sregex_iterator(text.begin(), text.end(), entry_re);
    for (auto it = begin; it != std::sregex_iterator(); ++it) {
        const std::smatch& m = *it;
        int color = color_index(m[1].str());
        int shape = shape_index_of(m[2].str());
        if (color < 0 || shape < 0) return std::nullopt;
        VisualEntry e;
        e.color = color;
        e.shape = static_cast<Shape>(shape);
        for (int c = 0; c < 3; ++c) {
            int val = std::stoi(m[static_cast<size_t>(3 + c)].str());
            if (val < 0 || val > 100) return std::nullopt;
            e.coord[static_cast<size_t>(c)] = val;
        }
        out.push_back(e);
    }
    if (out.empty()) return std::nullopt;
    return out;
}

}  // namespace

std::string render_plan_text(const Vocabulary& v, const TokenSeq& plan) {
    std::ostringstream os;
    int step = 0;
    bool first_in_step = true;
    for (TokenId t : plan) {
        if (v.cls(t) == TokenClass::PlanVerb || step == 0) {
            if (step > 0) os << " ";
            ++step;
            os << step << ". ";
            first_in_step = true;
        }
        if (!first_in_step) os << " ";
        os << v.surface(t);
        first_in_step = false;
    }
    return os.str();
}

namespace {

std::optional<TokenSeq> parse_plan_text(const Vocabulary& v, const std::string& text) {
    // Steps are introduced by "N. "; within a step, match the longest token
    // surface first so two-word surfaces ("pick up", "shape sorter") survive.
    static const std::regex step_re(R"((?:^|\s)\d+\.\s+)");
    std::vector<std::string> steps;
    std::sregex_token_iterator it(text.begin(), text.end(), step_re, -1);
    for (; it != std::sregex_token_iterator(); ++it) {
        std::string piece = trim(it->str());
        if (!piece.empty()) steps.push_back(piece);
    }
    TokenSeq plan;
    for (const auto& step : steps) {
        std::string rest = step;
        while (!rest.empty()) {
            rest = trim(rest);
            if (rest.empty()) break;
            // Longest-prefix token match over the next one or two words.
            size_t sp1 = rest.find(' ');
            std::string w1 = sp1 == std::string::npos ? rest : rest.substr(0, sp1);
            std::string w2;
            if (sp1 != std::string::npos) {
                size_t sp2 = rest.find(' ', sp1 + 1);
                w2 = sp2 == std::string::npos ? rest.substr(0) : rest.substr(0, sp2);
            }
            std::optional<TokenId> tok;
            size_t consumed = 0;
            if (!w2.empty()) {
                if (auto t = v.find(w2); t && is_plan_token(v, *t)) {
                    tok = t;
                    consumed = w2.size();
                }
            }
            if (!tok) {
                if (auto t = v.find(w1); t && is_plan_token(v, *t)) {
                    tok = t;
                    consumed = w1.size();
                }
            }
            if (!tok) return std::nullopt;
            plan.push_back(*tok);
            rest = consumed >= rest.size() ? "" : rest.substr(consumed);
        }
    }
    return plan;
}

}  // namespace

std::string render_action_text(const Vocabulary& v, const ActionVariant& action) {
    if (const auto* hi = std::get_if<HighLevelAction>(&action)) {
        (void)v;
        return "[" + std::to_string(hi->skill_id) + ", '" + hi->phrase + "']";
    }
    const auto& lo = std::get<LowLevelAction>(action);
    std::ostringstream os;
    os << "[";
    for (int i = 0; i < 7; ++i) {
        if (i > 0) os << ", ";
        os << lo.v[static_cast<size_t>(i)];
    }
    os << "]";
    return os.str();
}

std::string render_think_text(const Vocabulary& v, const StructuredResponse& resp) {
    const bool bare_continue = resp.visual.empty() && resp.plan.empty() && resp.reflection &&
                               resp.reflection->kind == ReflectionKind::Continue;
    if (bare_continue) return kContinueSentence;

    std::vector<std::string> sections;
    if (!resp.visual.empty())
        sections.push_back("visual_description: " + render_visual_text(resp.visual));
    if (resp.reflection)
        sections.push_back("reasoning_and_reflection: " + reflection_sentence(*resp.reflection));
    if (!resp.plan.empty())
        sections.push_back("language_plan: " + render_plan_text(v, resp.plan));
    std::string out;
    for (size_t i = 0; i < sections.size(); ++i) {
        if (i > 0) out += " ";
        out += sections[i];
    }
    return out;
}

std::string render_response_text(const Vocabulary& v, const StructuredResponse& resp) {
    return "<|think_start|>" + render_think_text(v, resp) + "<|think_end|>" +
           "<|action_start|>" + render_action_text(v, resp.action) + "<|action_end|>";
}

namespace {

std::optional<ActionVariant> parse_action_text(const Vocabulary& v, const std::string& text,
                                               ActionMode mode, ParseFailure& failure) {
    const std::string body = trim(text);
    if (mode == ActionMode::HighLevel) {
        static const std::regex hi_re(R"(^\[(\d+), '(.+)'\]$)");
        std::smatch m;
        if (!std::regex_match(body, m, hi_re)) {
            failure = {ParseError::BadActionToken, body};
            return std::nullopt;
        }
        int id = std::stoi(m[1].str());
        std::string phrase = m[2].str();
        const auto* s = v.skill_by_phrase(phrase);
        if (!s) {
            failure = {ParseError::UnknownPhrase, phrase};
            return std::nullopt;
        }
        if (s->skill_id != id) {
            failure = {ParseError::IdPhraseMismatch, body};
            return std::nullopt;
        }
        return ActionVariant(HighLevelAction{id, phrase});
    }
    static const std::regex lo_re(
        R"(^\[(-?\d+), (-?\d+), (-?\d+), (-?\d+), (-?\d+), (-?\d+), (-?\d+)\]$)");
    std::smatch m;
    if (!std::regex_match(body, m, lo_re)) {
        static const std::regex any_vec(R"(^\[(-?\d+)(, -?\d+)*\]$)");
        failure = {std::regex_match(body, any_vec) ? ParseError::BadArity
                                                   : ParseError::BadActionToken,
                   body};
        return std::nullopt;
    }
    LowLevelAction lo;
    for (int i = 0; i < 7; ++i) lo.v[static_cast<size_t>(i)] = std::stoi(m[static_cast<size_t>(i + 1)].str());
    return ActionVariant(lo);
}

bool parse_think_text(const Vocabulary& v, std::string text, StructuredResponse& resp,
                      ParseFailure& failure) {
    text = trim(text);
    if (starts_with(text, kRawFirstStepPrefix))
        text = trim(text.substr(std::string(kRawFirstStepPrefix).size()));
    if (text.empty()) return true;

    const std::string vis_marker = "visual_description:";
    const std::string ref_marker = "reasoning_and_reflection:";
    const std::string plan_marker = "language_plan:";
    size_t vis_pos = text.find(vis_marker);
    size_t ref_pos = text.find(ref_marker);
    size_t plan_pos = text.find(plan_marker);

    if (vis_pos == std::string::npos && ref_pos == std::string::npos &&
        plan_pos == std::string::npos) {
        auto refl = parse_reflection_sentence(text);
        if (!refl) {
            failure = {ParseError::BadThinkToken, "unrecognized reasoning text"};
            return false;
        }
        resp.reflection = refl;
        return true;
    }

    auto section = [&](size_t pos, size_t marker_len) -> std::string {
        if (pos == std::string::npos) return "";
        size_t end = text.size();
        for (size_t p : {vis_pos, ref_pos, plan_pos})
            if (p != std::string::npos && p > pos && p < end) end = p;
        return trim(text.substr(pos + marker_len, end - pos - marker_len));
    };

    if (vis_pos != std::string::npos) {
        auto vis = parse_visual_text(section(vis_pos, vis_marker.size()));
        if (!vis) {
            failure = {ParseError::BadVisualEntry, "visual description text"};
            return false;
        }
        resp.visual = *vis;
    }
    if (ref_pos != std::string::npos) {
        auto refl = parse_reflection_sentence(section(ref_pos, ref_marker.size()));
        if (!refl) {
            failure = {ParseError::BadThinkToken, "unrecognized reflection sentence"};
            return false;
        }
        resp.reflection = refl;
    }
    if (plan_pos != std::string::npos) {
        auto plan = parse_plan_text(v, section(plan_pos, plan_marker.size()));
        if (!plan) {
            failure = {ParseError::BadThinkToken, "unrecognized plan step"};
            return false;
        }
        resp.plan = *plan;
    }
    return true;
}

}  // namespace

ParseResult parse_response_text(const Vocabulary& v, const std::string& text, ActionMode mode) {
    const std::string ts = "<|think_start|>", te = "<|think_end|>";
    const std::string as = "<|action_start|>", ae = "<|action_end|>";
    size_t p0 = text.find(ts);
    if (p0 == std::string::npos) return ParseFailure{ParseError::MissingThinkStart, ""};
    size_t p1 = text.find(te, p0);
    if (p1 == std::string::npos) return ParseFailure{ParseError::UnclosedThink, ""};
    size_t p2 = text.find(as, p1);
    if (p2 == std::string::npos) return ParseFailure{ParseError::MissingActionStart, ""};
    size_t p3 = text.find(ae, p2);
    if (p3 == std::string::npos) return ParseFailure{ParseError::UnclosedAction, ""};

    StructuredResponse resp;
    ParseFailure failure{ParseError::BadThinkToken, ""};
    std::string think = text.substr(p0 + ts.size(), p1 - p0 - ts.size());
    if (!parse_think_text(v, think, resp, failure)) return failure;
    std::string action = text.substr(p2 + as.size(), p3 - p2 - as.size());
    auto act = parse_action_text(v, action, mode, failure);
    if (!act) return failure;
    resp.action = *act;
    return resp;
}

}  // namespace era
