#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "m3ace/agents.hpp"
#include "m3ace/core.hpp"

namespace m3ace {

// One decoupled probe: a single solve that produced evidence, a reasoning
// trajectory, and an answer, plus per-component grades once graded.
struct DecoupledRecord {
    std::string problem_id;
    AgentResponse response;
    std::optional<bool> ve_correct;
    std::optional<bool> traj_correct;
    std::optional<bool> ans_correct;
};

// Exactly one invocation in decoupled_three_step mode; a malformed reply
// raises ParseFailure instead of being re-prompted, so the probe measures
// the model as-is.
DecoupledRecord decoupled_solve(const Problem& problem,
                                const AgentRegistry& registry,
                                const std::string& agent_id,
                                const PromptLibrary& prompts,
                                std::uint64_t seed);

// Component oracles for live (non-simulated) records. Simulated records
// carry polarity metadata and need none of these.
struct ComponentGrader {
    // Final-answer verdict; nothing when ungradable. Defaults to the
    // harness grading rules when unset.
    std::function<std::optional<bool>(const std::string& predicted, const Problem&)> answer;
    // One evidence statement against the problem's reference evidence.
    std::function<bool(const std::string& statement, const Problem&)> evidence;
    // Whole-trajectory validity.
    std::function<bool(const std::vector<std::string>& trajectory, const Problem&)> trajectory;
};

// Fills in ve_correct (every evidence item correct), traj_correct, and
// ans_correct. Needs the problem's ground truth; VE and trajectory grading
// need either simulation metadata or a grader hook backed by gt_evidence,
// otherwise UngradableVE.
DecoupledRecord grade_components(DecoupledRecord record,
                                 const Problem& problem,
                                 const ComponentGrader& grader = {});

// Second invocation carrying the full first-round transcript plus the
// supervision text for payload.mode.
AgentResponse supervised_retry(const Problem& problem,
                               const SupervisionPayload& payload,
                               const AgentRegistry& registry,
                               const std::string& agent_id,
                               const PromptLibrary& prompts,
                               std::uint64_t seed);

// Second invocation with no external information: mode is reflect_on_answer
// (revisit the whole response) or reflect_on_ve (revisit the evidence list).
AgentResponse reflection_retry(const Problem& problem,
                               const AgentResponse& prior,
                               PromptMode mode,
                               const AgentRegistry& registry,
                               const std::string& agent_id,
                               const PromptLibrary& prompts,
                               std::uint64_t seed);

struct ContingencyGroup {
    long long count = 0;
    long long traj_correct = 0;
    long long ve_correct = 0;
};

// Counts grouped by answer correctness, with trajectory / evidence
// correctness within each group and overall.
struct ContingencyTable {
    long long total = 0;
    ContingencyGroup success;
    ContingencyGroup failed;
    ContingencyGroup all;
};

// Requires every record fully graded (UngradedRecord names the first one
// that is not); an empty list raises EmptyInput.
ContingencyTable contingency_table(const std::vector<DecoupledRecord>& records);

// Markdown table with "count (pct%)" cells, percentages against the group
// count for trajectory/evidence columns and against the total for the
// group column.
std::string format_contingency_markdown(const ContingencyTable& table);
std::string format_contingency_csv(const ContingencyTable& table);

// Round-0 solve per problem, then one supervised retry for every graded
// failure. Identical seeds produce identical round-0 priors across modes,
// so correction rates are comparable per seed.
struct SupervisionSweep {
    SupervisionMode mode = SupervisionMode::gt_judge;
    long long total = 0;     // problems with a graded round-0 answer
    long long failed = 0;    // of those, wrong at round 0
    long long corrected = 0; // failures whose retry graded correct
};

SupervisionSweep supervision_sweep(const std::vector<Problem>& problems,
                                   const AgentRegistry& registry,
                                   const std::string& agent_id,
                                   SupervisionMode mode,
                                   const PromptLibrary& prompts,
                                   std::uint64_t seed);

struct ReflectionSweep {
    PromptMode mode = PromptMode::reflect_on_answer;
    long long total = 0;
    long long correct_before = 0;
    long long correct_after = 0;
    long long changed_answers = 0; // retries whose answer text differs
};

ReflectionSweep reflection_sweep(const std::vector<Problem>& problems,
                                 const AgentRegistry& registry,
                                 const std::string& agent_id,
                                 PromptMode mode,
                                 const PromptLibrary& prompts,
                                 std::uint64_t seed);

} // namespace m3ace
