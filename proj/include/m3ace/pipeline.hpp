#pragma once

#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "m3ace/agents.hpp"
#include "m3ace/core.hpp"
#include "m3ace/refine.hpp"
#include "m3ace/summary.hpp"

namespace m3ace {

inline constexpr const char* kVersion = "0.1.0";

// Where every problem stands. A problem is in exactly one of selected,
// unresolved, or non_converged once it has a book; pending_init holds
// problems whose round-0 work has not happened yet (only populated when
// resuming an interrupted initialization).
struct PipelineState {
    std::map<std::string, ContextBook> books;
    std::set<std::string> selected;
    std::set<std::string> unresolved;
    std::set<std::string> non_converged;
    std::set<std::string> pending_init;
    int round = 0; // completed refinement rounds
    PipelineConfig config;

    Fraction selection_ratio() const; // |selected| / |books|
};

struct RunResult {
    std::map<std::string, std::string> answers;
    PipelineState state;
};

// Orchestrates the protocol: parallel round-0 initialization, then
// summarize -> regenerate -> refine rounds until the selection ratio
// reaches tau or the round cap. With persistence enabled, every book and
// state barrier is written through atomically so an interrupted run can
// be resumed by a later process.
class Engine {
public:
    Engine(std::vector<Problem> problems,
           PipelineConfig config,
           AgentRegistry registry,
           PromptLibrary prompts = PromptLibrary::defaults());

    // Routes evidence-pair / answer-pair comparisons through a judge agent
    // instead of the canonical rules. The judge is invoked through the
    // registry, so it may be scripted or remote.
    void set_evidence_judge(const std::string& agent_id);
    void set_answer_judge(const std::string& agent_id);

    // Turns on artifact writing under run_dir; cli_config is stored as
    // config.json so the directory is self-describing.
    void enable_persistence(const std::string& run_dir, const json& cli_config);

    PipelineState initialize();
    void run_round(PipelineState& state);
    RunResult run();

    // Continues from a reconstructed state: finishes any pending round-0
    // work, runs the remaining rounds, finalizes leftovers, and writes
    // metrics and reports when persistence is on.
    RunResult complete(PipelineState state);

    const std::vector<Problem>& problems() const { return problems_; }
    const Problem& problem(const std::string& id) const;
    const PipelineConfig& config() const { return config_; }
    AgentRegistry& registry() { return registry_; }
    const PromptLibrary& prompts() const { return prompts_; }
    const std::string& run_dir() const { return run_dir_; }

    // The comparison hooks for one problem, judge-backed when configured.
    EvidenceMatcher matcher_for(const Problem& problem, int round) const;
    AnswerEquivalence equivalence_for(const Problem& problem, int round) const;

private:
    struct InitOutcome;
    struct RoundOutcome;

    InitOutcome initialize_problem(const Problem& problem) const;
    RoundOutcome refine_problem(const Problem& problem, const ContextBook& book, int next_round) const;
    void apply_init_outcome(PipelineState& state, InitOutcome outcome);
    void finalize_leftovers(PipelineState& state);
    void write_completion_artifacts(const PipelineState& state);

    void persist_book(const ContextBook& book);
    void persist_state(const PipelineState& state, const std::string& phase);
    void append_transcript(const std::string& problem_id, int round, const std::string& event,
                           const json& payload);
    void write_manifest(bool finished);

    std::vector<Problem> problems_;
    PipelineConfig config_;
    AgentRegistry registry_;
    PromptLibrary prompts_;
    std::string evidence_judge_;
    std::string answer_judge_;
    std::string run_dir_;
    json cli_config_;
    std::string started_at_;
    std::map<std::string, CategorizedEvidence> summary_cache_;
    std::uint64_t transcript_seq_ = 0;
};

// File name for a problem's book under <run_dir>/books/.
std::string book_file_name(const std::string& problem_id);

// Problems recorded in a run directory's problems.jsonl. Raises CorruptRun
// when the file is missing, unparsable, or empty.
std::vector<Problem> run_problems(const std::string& run_dir);

// Reconstructs state from a persisted run directory without invoking any
// agent. Missing or unreadable artifacts raise CorruptRun naming the
// problem or file; books absent while state.json still says the run was
// initializing are reported as pending work instead.
PipelineState resume(const std::string& run_dir);

// Rebuilds the full engine (problems, config, agents, judges) from the
// run directory so the run can be completed in-process.
struct ResumedRun {
    Engine engine;
    PipelineState state;
    json cli_config;
};
ResumedRun resume_run(const std::string& run_dir);

// Builds the engine described by a declarative CLI config: {"pipeline":
// {...}, "agents": [...], "fixtures": path?, "prompts_dir": path?,
// "judge": {"evidence": id?, "answer": id?}}.
Engine engine_from_config(const json& config, std::vector<Problem> problems);

// 16-hex-digit content digest used in manifests and transcripts.
std::string digest_hex(const std::string& content);

} // namespace m3ace
