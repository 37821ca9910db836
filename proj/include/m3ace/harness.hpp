#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "m3ace/agents.hpp"
#include "m3ace/core.hpp"

namespace m3ace {

// Loads a JSONL benchmark, one problem per line: {id, question, image,
// answer, choices?, answer_kind, gt_evidence?}. Validation failures raise
// SchemaError with the line number and the offending field.
std::vector<Problem> load_dataset(const std::string& path);

// SAME / DIFFERENT oracle for free-form answers.
using AnswerJudge = std::function<bool(const std::string& predicted, const std::string& expected)>;

// Grades a predicted answer against the problem's ground truth:
// multiple_choice by case-insensitive label after stripping punctuation,
// numeric within relative 1e-6 or absolute 1e-9 (decimals and simple
// fractions), free_form through the judge. Throws JudgeRequired for
// free_form without a judge and IncompleteRun when ground truth is absent.
bool grade_answer(const std::string& predicted, const Problem& problem, const AnswerJudge& judge = {});

// Lenient variant for metrics: nothing instead of throwing.
std::optional<bool> try_grade_answer(const std::string& predicted, const Problem& problem,
                                     const AnswerJudge& judge = {});

// Returns nothing when the answer cannot be graded (no ground truth, or
// free-form without a judge).
using StageGrader = std::function<std::optional<bool>(const std::string& predicted, const Problem& problem)>;

struct StageStat {
    std::string stage;
    long long count = 0;
    // Absent when the stat was built from published accuracies rather
    // than per-item grades, or when nothing in the cohort was gradable.
    std::optional<long long> correct;
    std::optional<double> accuracy_pct;
};

struct StageMetrics {
    std::vector<StageStat> stages;

    const StageStat* find(const std::string& stage) const;
    bool operator==(const StageMetrics& other) const;
};

json to_json(const StageMetrics& metrics);
StageMetrics stage_metrics_from_json(const json& j);

// Derives the per-stage accuracy table from finished books: cot_infer
// (round-0 anchor answers), then per refinement round k the regenerate_k,
// refine_select_k and refine_reject_k cohorts graded on their round-k
// answers, reflect_k (the round-k reject cohort graded on its next
// answer), and all (final answers, every problem exactly once). Throws
// IncompleteRun when a problem has no finalized book.
StageMetrics stage_metrics(const std::vector<Problem>& problems,
                           const std::map<std::string, ContextBook>& books,
                           const StageGrader& grader = {});

// Sum(count * accuracy) / Sum(count); throws EmptyInput on zero samples.
double count_weighted_mean(const std::vector<std::pair<long long, double>>& parts);

// One decimal place, halves rounded away from zero.
std::string format_pct(double value);

// Table renderings with sample counts and stage-delta annotations.
// report() dispatches on format in {markdown, csv, json} and raises
// IncompleteRun for empty metrics.
std::string report_markdown(const StageMetrics& metrics);
std::string report_csv(const StageMetrics& metrics);
std::string report(const StageMetrics& metrics, const std::string& format);
StageMetrics stage_metrics_from_csv(const std::string& csv);

// ---------------------------------------------------------------------------
// Stochastic ensemble simulator

struct SimConfig {
    int num_problems = 500;
    int evidence_per_problem = 4;
    int distractor_count = 3;
    StochasticProfile anchor_profile;
    std::vector<StochasticProfile> assistant_profiles;
    std::vector<std::uint64_t> seeds;
    Fraction tau{1, 1};
    Fraction conflict_threshold{1, 5};
    int max_rounds = 2;
    int parallelism = 1;
    bool always_reflect_rejected = true;

    // Throws ConfigError naming the offending key.
    void validate() const;
};

// 500 problems with four evidence keys each, an anchor at 0.85/0.95 and
// three assistants at p_ve 0.85 / 0.75 / 0.65, seeds 1 through 20.
SimConfig default_sim_config();

SimConfig sim_config_from_json(const json& j);
json to_json(const SimConfig& sim);

// The synthetic dataset for one seed; ids embed the seed so every seed
// sees fresh ground truth.
std::vector<Problem> synthetic_problems(const SimConfig& sim, std::uint64_t seed);

// Stochastic agents "anchor" and "assist1..N" per the configured profiles.
AgentRegistry sim_registry(const SimConfig& sim);

PipelineConfig sim_pipeline_config(const SimConfig& sim, std::uint64_t seed);

struct SeedOutcome {
    std::uint64_t seed = 0;
    StageMetrics metrics;
};

struct SimSummary {
    SimConfig config;
    std::vector<SeedOutcome> per_seed;
};

// Runs the full pipeline once per seed over freshly generated synthetic
// problems, grading answers numerically against the generated ground
// truth. Entirely in-memory and offline.
SimSummary simulate_ensemble(const SimConfig& sim);

// Aggregate view: per-stage mean/min/max accuracy plus the per-seed rows.
json summarize(const SimSummary& summary);

} // namespace m3ace
