#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "m3ace/core.hpp"

namespace m3ace {

// How two answers are compared for consensus and grading.
//
// choice_letter: case-insensitive label match after stripping punctuation.
// numeric: decimals and simple fractions "a/b"; equal within relative 1e-6
//          or absolute 1e-9.
// judge: callback returns SAME / DIFFERENT (a lightweight agent in live
//        runs); transcripts are retained by the caller.
struct AnswerEquivalence {
    enum class Kind { choice_letter, numeric, judge };

    Kind kind = Kind::choice_letter;
    std::function<bool(const std::string&, const std::string&)> judge;

    static AnswerEquivalence choice_letter();
    static AnswerEquivalence numeric();
    static AnswerEquivalence with_judge(std::function<bool(const std::string&, const std::string&)> judge_fn);

    bool equivalent(const std::string& a, const std::string& b) const;
};

// Parses decimals and simple fractions. Returns nothing when the text is
// not a number.
std::optional<double> parse_numeric(const std::string& text);

// True when both parse and are equal within relative 1e-6 or absolute 1e-9.
bool numeric_equal(const std::string& a, const std::string& b);

struct ConsensusResult {
    int agree_count = 0;
    bool high_consensus = false;
};

// Counts assistant answers equivalent to the anchor's. n_assistants is the
// configured ensemble size; agents that abstained simply do not appear in
// assistant_answers, so they count toward n but never toward agreement.
// High consensus means 2 * agree_count >= n_assistants, integer arithmetic.
ConsensusResult answer_consensus(const std::string& anchor_answer,
                                 const std::vector<std::string>& assistant_answers,
                                 int n_assistants,
                                 const AnswerEquivalence& eq);

// The gate: Reject iff conflict_ratio > threshold AND not high_consensus.
// The threshold comparison is strict and exact (cross-multiplied integers,
// no float epsilon at the published 0.2 boundary).
RefineDecision refine_decision(const Fraction& conflict_ratio,
                               int agree_count,
                               bool high_consensus,
                               const Fraction& threshold);

} // namespace m3ace
