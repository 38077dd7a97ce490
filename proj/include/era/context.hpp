#pragma once

#include <deque>
#include <string>
#include <vector>

#include "era/env_common.hpp"
#include "era/response.hpp"
#include "era/turn.hpp"

namespace era {

enum class ContextKind : uint8_t { NoHistory, SelfSummarization, SlidingWindow };

struct ContextPolicy {
    ContextKind kind = ContextKind::SelfSummarization;
    int k = 1;  // history steps for history-bearing kinds

    std::string name() const;
    static ContextPolicy parse(const std::string& name);
};

struct HistoryEntry {
    int step_id = 0;
    TokenSeq thinking_tokens;  // raw tokens between the think tags
    TokenSeq action_tokens;    // raw tokens between the action tags
    std::string thinking_text;
    std::string action_text;
    Feedback feedback;

    std::string to_json() const;  // {"step_id": ..., "thinking": ..., "action": ...,
                                  //  "env_feedback": ...}
    static HistoryEntry from_json(const Vocabulary& v, const std::string& text, ActionMode mode);
};

HistoryEntry make_history_entry(const Vocabulary& v, int step_id, const TokenSeq& response,
                                const ParseResult& parsed, const Feedback& feedback);

using HistoryBuffer = std::deque<HistoryEntry>;

// Append, evicting from the front so at most k entries remain.
void push_history(HistoryBuffer& buffer, HistoryEntry entry, int k);

// x_t = instruction tokens, serialized history per policy, observation tokens.
TokenSeq build_input(const Vocabulary& v, const TokenSeq& instruction,
                     const HistoryBuffer& buffer, const TokenSeq& observation,
                     const ContextPolicy& policy);

// interaction_history JSON array text for the wire format.
std::string render_interaction_history(const std::vector<HistoryEntry>& entries);

struct ContextTokenStats {
    double mean_input_tokens = 0.0;
    int max_input_tokens = 0;
};

// Replays a recorded trajectory under a context policy and reports the input
// sizes that policy would have produced.
ContextTokenStats context_token_stats(const Vocabulary& v, const TokenSeq& instruction,
                                      const Trajectory& traj, const ContextPolicy& policy);

}  // namespace era
