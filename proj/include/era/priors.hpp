#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "era/context.hpp"
#include "era/env_house.hpp"
#include "era/env_table.hpp"
#include "era/policy.hpp"

namespace era {

struct SchemaError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct UnknownActionError : std::runtime_error {
    using std::runtime_error::runtime_error;
};
struct AnnotatorUnavailableError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class PriorKind : uint8_t {
    RawTraj,
    TrajAug,
    MaskedAction,
    Reorder,
    AbsGround,
    RelGround,
    CombGround,
    ExternalStub,
};

std::string_view prior_kind_name(PriorKind k);
std::optional<PriorKind> prior_kind_from_name(std::string_view name);

// One corpus record: the wire-format JSON line plus the token-level training
// pair reconstructed from it.
struct PriorRecord {
    PriorKind kind = PriorKind::RawTraj;
    std::string json_line;
    PriorTokenSample sample;
};

using PriorCorpus = std::vector<PriorRecord>;

void write_corpus_jsonl(const PriorCorpus& corpus, const std::string& path);
PriorCorpus load_corpus_jsonl(const Vocabulary& v, const std::string& path);

// ---- Trajectory recording -------------------------------------------------

enum class AnnotatorKind : uint8_t { RuleBased, External };

struct Annotator {
    AnnotatorKind kind = AnnotatorKind::RuleBased;
    std::string request_path;   // External: prompts are appended here
    std::string response_path;  // External: annotations are read from here
};

// Expert rollouts in the wire format. Raw trajectories carry a full plan on
// the first step and terse carry-on reasoning afterwards; augmented
// trajectories annotate every step.
PriorCorpus record_raw_trajectories(const Vocabulary& v, EnvKind env,
                                    const std::vector<HouseTask>& house_tasks,
                                    const std::vector<ManipTask>& manip_tasks, int episodes,
                                    uint64_t seed, const ContextPolicy& context);

PriorCorpus augment_trajectories(const Vocabulary& v, EnvKind env,
                                 const std::vector<HouseTask>& house_tasks,
                                 const std::vector<ManipTask>& manip_tasks, int episodes,
                                 uint64_t seed, const ContextPolicy& context,
                                 const Annotator& annotator);

// ---- Semantic supervision over action sequences ---------------------------

struct MaskedSample {
    std::string query;
    std::string answer;
    int mask_index = 0;
    std::string masked_action;
};

MaskedSample gen_masked_action(const std::string& instruction,
                               const std::vector<std::string>& actions, std::mt19937_64& rng);

struct ReorderSample {
    std::string query;
    std::string answer;
    std::vector<int> permutation;  // query order as indices into the original
};

ReorderSample gen_reorder(const std::string& instruction,
                          const std::vector<std::string>& actions, std::mt19937_64& rng);

PriorCorpus gen_masked_corpus(const Vocabulary& v, const std::vector<HouseTask>& tasks, int n,
                              uint64_t seed);
PriorCorpus gen_reorder_corpus(const Vocabulary& v, const std::vector<HouseTask>& tasks, int n,
                               uint64_t seed);

// ---- Coordinate grounding QA ----------------------------------------------

enum class GroundingKind : uint8_t { Absolute, Relative, Combined };

struct QAPair {
    std::string question;
    std::string answer;
};

std::vector<QAPair> gen_grounding(const TableState& state, GroundingKind kind,
                                  std::mt19937_64& rng);

PriorCorpus gen_grounding_corpus(const Vocabulary& v, const std::vector<ManipTask>& tasks,
                                 GroundingKind kind, int n, uint64_t seed);

// ---- High-level action-space mapping ---------------------------------------

enum class AlfredVerb : uint8_t {
    GotoLocation,
    PickupObject,
    SliceObject,
    ToggleObject,
    NoOp,
    PutObject,
    CleanObject,
    CoolObject,
    HeatObject,
};

struct AlfredAction {
    AlfredVerb verb = AlfredVerb::NoOp;
    std::string obj;
    std::string loc;  // PutObject/GotoLocation only
};

struct AlfredContext {
    bool holding = true;
    std::optional<bool> loc_requires_opening;  // overrides the built-in set
    std::map<std::string, bool> toggle_on;     // current on/off per object
};

std::vector<std::string> map_alfred_action(const AlfredAction& action, AlfredContext& context);

// ---- Rule-based scene description -------------------------------------------

// "From left to right, I can see ..." over Y-ascending objects; labels drop
// the first real-name token except for the sponge / shape sorter exceptions.
std::string gen_visual_description(const TableState& state);

// ---- External corpora -------------------------------------------------------

PriorCorpus external_prior_adapter(const std::string& path);

// ---- Validation -------------------------------------------------------------

struct CorpusReport {
    int total = 0;
    std::vector<std::pair<int, std::string>> failures;  // (index, reason)

    bool ok() const { return failures.empty(); }
};

CorpusReport validate_corpus(const Vocabulary& v, const PriorCorpus& corpus, PriorKind kind);

// Executes a mapped phrase sequence from a context-consistent MiniHouse state
// and reports whether every action was valid.
bool mapped_sequence_executes(const Vocabulary& v, const AlfredAction& action,
                              const std::vector<std::string>& phrases, std::string* why);

}  // namespace era
