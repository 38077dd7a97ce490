#include "era/context.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>

namespace era {

std::string ContextPolicy::name() const {
    switch (kind) {
        case ContextKind::NoHistory: return "none";
        case ContextKind::SelfSummarization: return "ss" + std::to_string(k);
        case ContextKind::SlidingWindow: return "sw" + std::to_string(k);
    }
    return "none";
}

ContextPolicy ContextPolicy::parse(const std::string& name) {
    if (name == "none" || name.empty()) return {ContextKind::NoHistory, 0};
    if (name.size() >= 3 && name.substr(0, 2) == "ss")
        return {ContextKind::SelfSummarization, std::stoi(name.substr(2))};
    if (name.size() >= 3 && name.substr(0, 2) == "sw")
        return {ContextKind::SlidingWindow, std::stoi(name.substr(2))};
    throw std::invalid_argument("unknown context policy: " + name);
}

namespace {

// Extract the raw token span between a tag pair, tolerant of malformed input.
TokenSeq span_between(const Vocabulary& v, const TokenSeq& response, TokenId open, TokenId close) {
    TokenSeq out;
    auto it = std::find(response.begin(), response.end(), open);
    if (it == response.end()) return out;
    for (++it; it != response.end() && *it != close; ++it) out.push_back(*it);
    return out;
}

}  // namespace

HistoryEntry make_history_entry(const Vocabulary& v, int step_id, const TokenSeq& response,
                                const ParseResult& parsed, const Feedback& feedback) {
    HistoryEntry e;
    e.step_id = step_id;
    e.thinking_tokens = span_between(v, response, v.think_start(), v.think_end());
    e.action_tokens = span_between(v, response, v.action_start(), v.action_end());
    e.feedback = feedback;
    if (const auto* resp = std::get_if<StructuredResponse>(&parsed)) {
        e.thinking_text = render_think_text(v, *resp);
        e.action_text = render_action_text(v, resp->action);
    } else {
        // Keep whatever the agent emitted; surfaces joined verbatim.
        std::string raw;
        for (TokenId t : e.action_tokens) {
            if (!raw.empty()) raw += " ";
            if (t >= 0 && t < v.size()) raw += v.surface(t);
        }
        e.action_text = raw;
        raw.clear();
        for (TokenId t : e.thinking_tokens) {
            if (!raw.empty()) raw += " ";
            if (t >= 0 && t < v.size()) raw += v.surface(t);
        }
        e.thinking_text = raw;
    }
    return e;
}

std::string HistoryEntry::to_json() const {
    nlohmann::json j;
    j["step_id"] = step_id;
    j["thinking"] = thinking_text;
    j["action"] = action_text;
    j["env_feedback"] = feedback.text;
    return j.dump();
}

HistoryEntry HistoryEntry::from_json(const Vocabulary& v, const std::string& text,
                                     ActionMode mode) {
    const auto j = nlohmann::json::parse(text);
    HistoryEntry e;
    e.step_id = j.at("step_id").get<int>();
    e.thinking_text = j.at("thinking").get<std::string>();
    e.action_text = j.at("action").get<std::string>();
    e.feedback.text = j.at("env_feedback").get<std::string>();
    e.feedback.valid = e.feedback.text.rfind("Last action is invalid", 0) != 0;
    if (!e.feedback.valid) e.feedback.reason = InvalidReason::Parse;

    // Re-derive token spans by parsing the rendered response text.
    const std::string full = "<|think_start|>" + e.thinking_text + "<|think_end|>" +
                             "<|action_start|>" + e.action_text + "<|action_end|>";
    auto parsed = parse_response_text(v, full, mode);
    if (const auto* resp = std::get_if<StructuredResponse>(&parsed)) {
        TokenSeq toks = encode_response(v, *resp);
        e.thinking_tokens = span_between(v, toks, v.think_start(), v.think_end());
        e.action_tokens = span_between(v, toks, v.action_start(), v.action_end());
    }
    return e;
}

void push_history(HistoryBuffer& buffer, HistoryEntry entry, int k) {
    buffer.push_back(std::move(entry));
    while (static_cast<int>(buffer.size()) > std::max(k, 0)) buffer.pop_front();
}

TokenSeq build_input(const Vocabulary& v, const TokenSeq& instruction,
                     const HistoryBuffer& buffer, const TokenSeq& observation,
                     const ContextPolicy& policy) {
    TokenSeq x = instruction;
    if (policy.kind != ContextKind::NoHistory && !buffer.empty()) {
        x.push_back(v.require("history:"));
        const int take = std::min<int>(policy.k, static_cast<int>(buffer.size()));
        for (size_t i = buffer.size() - static_cast<size_t>(take); i < buffer.size(); ++i) {
            const auto& e = buffer[i];
            x.push_back(v.require("step:"));
            x.push_back(v.int_token(std::clamp(e.step_id, 0, kMaxIntToken)));
            if (policy.kind == ContextKind::SelfSummarization)
                x.insert(x.end(), e.thinking_tokens.begin(), e.thinking_tokens.end());
            x.push_back(v.require("action:"));
            x.insert(x.end(), e.action_tokens.begin(), e.action_tokens.end());
            TokenSeq fb = e.feedback.tokens(v);
            x.insert(x.end(), fb.begin(), fb.end());
        }
    }
    x.insert(x.end(), observation.begin(), observation.end());
    return x;
}

std::string render_interaction_history(const std::vector<HistoryEntry>& entries) {
    std::string out = "[";
    for (size_t i = 0; i < entries.size(); ++i) {
        if (i > 0) out += ", ";
        out += entries[i].to_json();
    }
    out += "]";
    return out;
}

ContextTokenStats context_token_stats(const Vocabulary& v, const TokenSeq& instruction,
                                      const Trajectory& traj, const ContextPolicy& policy) {
    ContextTokenStats stats;
    HistoryBuffer buffer;
    double total = 0.0;
    int n = 0;
    for (size_t t = 0; t < traj.turns.size(); ++t) {
        const auto& turn = traj.turns[t];
        TokenSeq x = build_input(v, instruction, buffer, turn.obs_tokens, policy);
        total += count_tokens(x);
        stats.max_input_tokens = std::max(stats.max_input_tokens, count_tokens(x));
        ++n;
        push_history(buffer,
                     make_history_entry(v, static_cast<int>(t), turn.response, turn.parsed,
                                        turn.feedback),
                     std::max(policy.k, 1));
    }
    if (n > 0) stats.mean_input_tokens = total / n;
    return stats;
}

}  // namespace era
