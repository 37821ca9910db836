#pragma once

// Fifty response variants exercising the structured output grammar: header
// casing, markdown decoration, numbering styles, CRLF, inline vs next-line
// answers, and two responses that must fail loudly. Shared by the agents
// suite and the acceptance checks.

#include <string>
#include <vector>

#include "m3ace/agents.hpp"

namespace corpus {

struct Entry {
    std::string name;
    m3ace::PromptMode mode = m3ace::PromptMode::structured_ve;
    std::string raw;
    bool parseable = true;
    std::vector<std::string> evidence;
    std::vector<std::string> trajectory;
    std::string answer;
};

inline const std::vector<Entry>& entries() {
    using m3ace::PromptMode;
    static const std::string e1 = "the left dial reads 60";
    static const std::string e2 = "the needle points to the red zone";

    static const std::vector<Entry> all = [] {
        std::vector<Entry> v;
        const auto add = [&v](std::string name, std::string raw,
                              std::vector<std::string> evidence, std::string answer,
                              PromptMode mode = PromptMode::structured_ve,
                              std::vector<std::string> trajectory = {}) {
            Entry e;
            e.name = std::move(name);
            e.mode = mode;
            e.raw = std::move(raw);
            e.evidence = std::move(evidence);
            e.trajectory = std::move(trajectory);
            e.answer = std::move(answer);
            v.push_back(std::move(e));
        };

        add("canonical",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\n2. " + e2 + "\nANSWER: B\n",
            {e1, e2}, "B");
        add("lowercase headers",
            "visual evidence:\n1. " + e1 + "\n2. " + e2 + "\nanswer: b\n",
            {e1, e2}, "b");
        add("title case",
            "Visual Evidence:\n1. " + e1 + "\nAnswer: B\n", {e1}, "B");
        add("underscore title case",
            "Visual_Evidence:\n- " + e1 + "\nAnswer: B\n", {e1}, "B");
        add("bold headers colon inside",
            "**Visual Evidence:**\n1. " + e1 + "\n2. " + e2 + "\n**Answer:** C\n",
            {e1, e2}, "C");
        add("bold headers colon outside",
            "**Visual Evidence**: \n1. " + e1 + "\n**Answer**: D\n", {e1}, "D");
        add("markdown headings",
            "## Visual Evidence\n1. " + e1 + "\n\n## Answer\nB\n", {e1}, "B");
        add("backticked headers",
            "`VISUAL_EVIDENCE`:\n1. " + e1 + "\n`ANSWER`: B\n", {e1}, "B");
        add("paren numbering",
            "VISUAL_EVIDENCE:\n1) " + e1 + "\n2) " + e2 + "\nANSWER: A\n",
            {e1, e2}, "A");
        add("dash items",
            "VISUAL_EVIDENCE:\n- " + e1 + "\n- " + e2 + "\nANSWER: A\n",
            {e1, e2}, "A");
        add("star items",
            "VISUAL_EVIDENCE:\n* " + e1 + "\n* " + e2 + "\nANSWER: A\n",
            {e1, e2}, "A");
        add("emphasized items",
            "VISUAL_EVIDENCE:\n1. **" + e1 + "**\n2. _" + e2 + "_\nANSWER: A\n",
            {e1, e2}, "A");
        add("bold inline answer",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER: **B**\n", {e1}, "B");
        add("answer on next line",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER:\nB\n", {e1}, "B");
        add("bold answer on next line",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER:\n**42**\n", {e1}, "42");
        add("last answer header wins",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER: C\nVISUAL_EVIDENCE:\n2. " + e2 +
                "\nANSWER: B\n",
            {e1, e2}, "B");
        add("multi-line answer",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER:\nThe value is\n42 meters\n",
            {e1}, "The value is\n42 meters");
        add("crlf line endings",
            "VISUAL_EVIDENCE:\r\n1. " + e1 + "\r\n2. " + e2 + "\r\nANSWER: B\r\n",
            {e1, e2}, "B");
        add("conversational preamble",
            "Sure, let me analyze the gauges first.\n\nVISUAL_EVIDENCE:\n1. " + e1 +
                "\nANSWER: B\n",
            {e1}, "B");
        add("trailing whitespace",
            "VISUAL_EVIDENCE:   \n1. " + e1 + "   \nANSWER: B   \n", {e1}, "B");
        add("tab indented items",
            "VISUAL_EVIDENCE:\n\t1. " + e1 + "\n\t2. " + e2 + "\nANSWER: B\n",
            {e1, e2}, "B");
        {
            std::string raw = "VISUAL_EVIDENCE:\n";
            std::vector<std::string> items;
            for (int i = 1; i <= 12; ++i) {
                items.push_back("sensor " + std::to_string(i) + " holds steady");
                raw += std::to_string(i) + ". " + items.back() + "\n";
            }
            raw += "ANSWER: E\n";
            add("twelve items multi-digit numbering", raw, items, "E");
        }
        add("space instead of colon",
            "VISUAL EVIDENCE\n1. " + e1 + "\nANSWER B\n", {e1}, "B");
        add("starred banner headers",
            "*** VISUAL EVIDENCE ***\n1. " + e1 + "\n*** ANSWER: B ***\n", {e1}, "B");
        add("plain chain of thought",
            "Let me reason step by step. The gauge shows 60 and the scale doubles it, "
            "so the result follows directly.\nANSWER: 120\n",
            {}, "120", PromptMode::cot_plain);
        add("chain of thought with heading answer",
            "I will tally the readings now. Both dials agree.\n### Answer\n120\n",
            {}, "120", PromptMode::cot_plain);
        add("decoupled three blocks",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nTRAJECTORY:\n1. add the dials\n2. double the "
            "total\nANSWER: 120\n",
            {e1}, "120", PromptMode::decoupled_three_step, {"add the dials", "double the total"});
        add("decoupled lowercase dashes",
            "visual evidence:\n- " + e1 + "\ntrajectory:\n- add the dials\nanswer: 120\n",
            {e1}, "120", PromptMode::decoupled_three_step, {"add the dials"});
        add("inline evidence on header line",
            "VISUAL_EVIDENCE: " + e1 + "\nANSWER: B\n", {e1}, "B");
        add("inline evidence plus listed",
            "VISUAL_EVIDENCE: " + e1 + "\n2. " + e2 + "\nANSWER: A\n", {e1, e2}, "A");
        add("prose inside evidence section skipped",
            "VISUAL_EVIDENCE:\nHere is what I can see clearly:\n1. " + e1 + "\n\nANSWER: B\n",
            {e1}, "B");
        add("items with trailing period",
            "VISUAL_EVIDENCE:\n1. " + e1 + ".\n2. " + e2 + ".\nANSWER: B\n",
            {e1 + ".", e2 + "."}, "B");
        add("blank lines between items",
            "VISUAL_EVIDENCE:\n\n1. " + e1 + "\n\n2. " + e2 + "\n\nANSWER: B\n",
            {e1, e2}, "B");
        add("answer before evidence",
            "ANSWER: B\nVISUAL_EVIDENCE:\n1. " + e1 + "\n", {e1}, "B");
        add("no space after colon",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER:B\n", {e1}, "B");
        add("bulleted answer header",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\n* **Answer:** B\n", {e1}, "B");
        add("heading plus backticked answer",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\n#### **ANSWER:** `B`\n", {e1}, "B");
        add("numbering restarts",
            "VISUAL_EVIDENCE:\n3. " + e1 + "\n1. " + e2 + "\nANSWER: A\n", {e1, e2}, "A");
        add("colons inside items",
            "VISUAL_EVIDENCE:\n1. gauge A: 60 psi\n2. gauge B: 75 psi\nANSWER: C\n",
            {"gauge A: 60 psi", "gauge B: 75 psi"}, "C");
        add("answer with units",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER: 42 meters\n", {e1}, "42 meters");
        add("answer with justification clause",
            "VISUAL_EVIDENCE:\n1. " + e1 + "\nANSWER: B, because the left dial dominates\n",
            {e1}, "B, because the left dial dominates");
        add("double underscore headers",
            "__VISUAL_EVIDENCE__:\n1. " + e1 + "\n__ANSWER__: B\n", {e1}, "B");
        add("structured with tolerated trajectory",
            "Visual evidence:\n1. " + e1 + "\nTrajectory:\n1. sum the dials\nAnswer: 99\n",
            {e1}, "99", PromptMode::structured_ve, {"sum the dials"});
        add("crlf markdown combo",
            "**VISUAL_EVIDENCE:**\r\n1. **" + e1 + "**\r\n\r\n**ANSWER:** **B**\r\n",
            {e1}, "B");
        add("extra spaces after numbering",
            "VISUAL_EVIDENCE:\n1.   " + e1 + "\nANSWER:   B\n", {e1}, "B");
        add("backticked items",
            "VISUAL_EVIDENCE:\n1. `" + e1 + "`\nANSWER: B\n", {e1}, "B");
        add("realistic long response",
            "Thanks, I re-examined the image as requested.\n\n**Visual Evidence:**\n1. " + e1 +
                "\n2. " + e2 + "\n3. the scale maxes out at 100\n\n**Answer:**\nC\n",
            {e1, e2, "the scale maxes out at 100"}, "C");
        add("bare header words",
            "VISUAL EVIDENCE\n1. " + e1 + "\nanswer\nB\n", {e1}, "B");

        {
            Entry bad;
            bad.name = "prose without any answer header";
            bad.raw = "I looked at the gauges carefully. The left dial reads 60 and the needle "
                      "sits in the red zone, so the result is 42.";
            bad.parseable = false;
            v.push_back(std::move(bad));
        }
        {
            Entry bad;
            bad.name = "answer without evidence in structured mode";
            bad.raw = "ANSWER: B\nThat is my choice.\n";
            bad.parseable = false;
            v.push_back(std::move(bad));
        }
        return v;
    }();
    return all;
}

} // namespace corpus
