#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "m3ace/errors.hpp"
#include "m3ace/fraction.hpp"

namespace m3ace {

using json = nlohmann::ordered_json;

enum class AnswerKind { multiple_choice, numeric, free_form };

std::string to_string(AnswerKind kind);
AnswerKind answer_kind_from_string(const std::string& text);

enum class Polarity { correct, corrupted };

std::string to_string(Polarity p);
Polarity polarity_from_string(const std::string& text);

// One benchmark item. The sim_* fields exist only for synthetic problems
// produced by the simulator; live datasets leave them empty.
struct Problem {
    std::string id;
    std::string question;
    std::string image;
    std::vector<std::string> choices;
    std::optional<std::string> ground_truth;
    std::vector<std::string> gt_evidence;
    AnswerKind answer_kind = AnswerKind::free_form;

    std::vector<std::string> sim_keys;
    int sim_distractors = 0;

    bool is_simulated() const { return !sim_keys.empty(); }
};

// One fact extracted from the image. key/polarity are canonical metadata
// attached only in simulation mode, where every statement is machine
// checkable; live evidence is free text.
struct EvidenceItem {
    int index = 1;
    std::string statement;
    std::string source_agent;
    int round = 0;
    std::optional<std::string> key;
    std::optional<Polarity> polarity;
};

struct AgentResponse {
    std::string agent;
    int round = 0;
    std::vector<EvidenceItem> evidence;
    std::string answer;
    std::optional<std::vector<std::string>> trajectory;
    std::string raw;
};

enum class Verdict { Select, Reject };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& text);

struct RefineDecision {
    Verdict verdict = Verdict::Select;
    Fraction conflict_ratio{0, 1};
    int agree_count = 0;
    bool high_consensus = false;
};

struct ConflictPair {
    EvidenceItem anchor;
    EvidenceItem assistant;
};

// Output of the evidence summary step: the anchor's items sorted into
// supported / disputed / unmatched, plus assistant-only additions.
struct CategorizedEvidence {
    int anchor_total = 0;
    Fraction conflict_ratio{0, 1};
    std::vector<EvidenceItem> consistent;
    std::vector<EvidenceItem> complementary;
    std::vector<ConflictPair> conflicting;
    std::vector<EvidenceItem> anchor_only;
    std::vector<std::string> audit;
};

enum class BookStatus { unresolved, selected, finalized_non_converged };

std::string to_string(BookStatus s);
BookStatus book_status_from_string(const std::string& text);

// Per-problem shared context. Assistant responses are frozen at round 0;
// the anchor history grows by one entry per refinement round.
struct ContextBook {
    std::string problem_id;
    BookStatus status = BookStatus::unresolved;
    std::optional<std::string> final_answer;
    std::vector<AgentResponse> assistant_responses;
    std::vector<AgentResponse> anchor_history;
    std::vector<CategorizedEvidence> summaries;
    std::vector<RefineDecision> decisions;
};

struct PipelineConfig {
    Fraction tau{1, 1};
    Fraction conflict_threshold{1, 5};
    int max_rounds = 3;
    int parallelism = 1;
    std::uint64_t seed = 0;
    std::string anchor;
    std::vector<std::string> assistants;
    // When set, rejected samples keep getting refinement rounds even after
    // the selection ratio already meets tau (bounded by max_rounds).
    bool always_reflect_rejected = true;

    // Throws ConfigError naming the offending key.
    void validate() const;
};

// Builds a fresh book from the round-0 responses. The anchor id is the
// configured one; a mismatched response is rejected rather than stored.
ContextBook new_context_book(const Problem& problem,
                             const std::string& anchor_id,
                             const AgentResponse& anchor_resp,
                             const std::vector<AgentResponse>& assistant_resps);

// Terminal transition: unresolved -> selected / finalized_non_converged.
void finalize(ContextBook& book, const std::string& answer, bool converged);

// Canonical JSON: fixed field order, two-space indent, trailing newline.
// Serializing a loaded book reproduces the file byte for byte.
json to_json(const EvidenceItem& item);
json to_json(const AgentResponse& resp);
json to_json(const RefineDecision& d);
json to_json(const CategorizedEvidence& cat);
json to_json(const ContextBook& book);
json to_json(const Fraction& f);
json to_json(const Problem& p);

EvidenceItem evidence_item_from_json(const json& j);
AgentResponse agent_response_from_json(const json& j);
RefineDecision refine_decision_from_json(const json& j);
CategorizedEvidence categorized_evidence_from_json(const json& j);
ContextBook context_book_from_json(const json& j);
Fraction fraction_from_json(const json& j);
Problem problem_from_json(const json& j);

std::string dump_canonical(const json& j);

PipelineConfig pipeline_config_from_json(const json& j);
json to_json(const PipelineConfig& cfg);

} // namespace m3ace
