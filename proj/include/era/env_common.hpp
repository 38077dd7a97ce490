#pragma once

#include <stdexcept>
#include <string>

#include "era/vocab.hpp"

namespace era {

enum class InvalidReason : uint8_t {
    None,
    Holding,
    NotClose,
    Missing,
    ClosedRecep,
    NotHolding,
    NoRecep,
    NotOpenable,
    AlreadyOpen,
    AlreadyClosed,
    NotToggleable,
    AlreadyOn,
    AlreadyOff,
    NotSliceable,
    AlreadySliced,
    Parse,
    Range,
};

struct Feedback {
    std::string text;
    bool valid = true;
    InvalidReason reason = InvalidReason::None;
    std::string arg;  // offending object, when the reason names one

    TokenSeq tokens(const Vocabulary& v) const;
};

struct Observation {
    std::string text;
    TokenSeq tokens;
};

enum class TerminalKind : uint8_t { None, Success, StepLimit };

enum class Split : uint8_t { Seen, Unseen };

inline std::string_view split_name(Split s) { return s == Split::Seen ? "seen" : "unseen"; }

struct UnknownTaskError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnsolvableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

}  // namespace era
