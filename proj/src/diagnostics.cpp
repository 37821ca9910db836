#include "m3ace/diagnostics.hpp"

#include <algorithm>

#include "m3ace/harness.hpp"
#include "m3ace/simmodel.hpp"

namespace m3ace {

DecoupledRecord decoupled_solve(const Problem& problem, const AgentRegistry& registry,
                                const std::string& agent_id, const PromptLibrary& prompts,
                                std::uint64_t seed) {
    const std::string prompt =
        build_solve_prompt(problem, PromptMode::decoupled_three_step, {}, prompts);
    InvokeContext ctx;
    ctx.problem = &problem;
    ctx.agent_id = agent_id;
    ctx.round = 0;
    ctx.mode = PromptMode::decoupled_three_step;
    ctx.seed = seed;
    const std::string raw = registry.invoke(agent_id, prompt, problem.image, ctx);
    AgentResponse response = parse_structured_response(raw, PromptMode::decoupled_three_step);
    response.agent = agent_id;
    response.round = 0;
    for (auto& item : response.evidence) {
        item.source_agent = agent_id;
        item.round = 0;
    }
    if (problem.is_simulated()) sim::annotate(response, problem);

    DecoupledRecord record;
    record.problem_id = problem.id;
    record.response = std::move(response);
    return record;
}

DecoupledRecord grade_components(DecoupledRecord record, const Problem& problem,
                                 const ComponentGrader& grader) {
    if (!problem.ground_truth) {
        throw Error("IncompleteRun", "problem '" + problem.id + "' has no ground truth to grade against");
    }

    record.ans_correct = grader.answer ? grader.answer(record.response.answer, problem)
                                       : try_grade_answer(record.response.answer, problem);

    const auto& evidence = record.response.evidence;
    const bool has_metadata =
        std::all_of(evidence.begin(), evidence.end(),
                    [](const EvidenceItem& item) { return item.polarity.has_value(); });
    if (has_metadata) {
        record.ve_correct = std::all_of(evidence.begin(), evidence.end(), [](const EvidenceItem& item) {
            return *item.polarity == Polarity::correct;
        });
    } else if (grader.evidence && !problem.gt_evidence.empty()) {
        record.ve_correct = std::all_of(evidence.begin(), evidence.end(), [&](const EvidenceItem& item) {
            return grader.evidence(item.statement, problem);
        });
    } else {
        throw Error("UngradableVE", "evidence for problem '" + problem.id +
                                        "' has no checkable metadata and no judge with reference evidence");
    }

    if (!record.response.trajectory) {
        throw Error("UngradableVE", "record for problem '" + problem.id + "' carries no trajectory");
    }
    if (problem.is_simulated()) {
        record.traj_correct = *record.response.trajectory == sim::correct_trajectory(problem);
    } else if (grader.trajectory) {
        record.traj_correct = grader.trajectory(*record.response.trajectory, problem);
    } else {
        throw Error("UngradableVE", "trajectory for problem '" + problem.id +
                                        "' has no checkable metadata and no judge");
    }
    return record;
}

AgentResponse supervised_retry(const Problem& problem, const SupervisionPayload& payload,
                               const AgentRegistry& registry, const std::string& agent_id,
                               const PromptLibrary& prompts, std::uint64_t seed) {
    payload.validate();
    PromptExtras extras;
    extras.supervision = &payload;
    auto response =
        solve(registry, agent_id, problem, PromptMode::supervised_retry, extras, prompts, seed, 1);
    if (!response) throw ParseFailure("agent abstained during supervised retry");
    return std::move(*response);
}

AgentResponse reflection_retry(const Problem& problem, const AgentResponse& prior, PromptMode mode,
                               const AgentRegistry& registry, const std::string& agent_id,
                               const PromptLibrary& prompts, std::uint64_t seed) {
    if (mode != PromptMode::reflect_on_answer && mode != PromptMode::reflect_on_ve) {
        throw ConfigError("mode", "reflection mode must be reflect_on_answer or reflect_on_ve");
    }
    PromptExtras extras;
    extras.prior = &prior;
    auto response = solve(registry, agent_id, problem, mode, extras, prompts, seed, 1);
    if (!response) throw ParseFailure("agent abstained during reflection retry");
    return std::move(*response);
}

ContingencyTable contingency_table(const std::vector<DecoupledRecord>& records) {
    if (records.empty()) throw Error("EmptyInput", "no records to tabulate");
    ContingencyTable table;
    for (const auto& record : records) {
        if (!record.ans_correct || !record.traj_correct || !record.ve_correct) {
            throw Error("UngradedRecord", "record " + record.problem_id + " is not fully graded");
        }
        ContingencyGroup& group = *record.ans_correct ? table.success : table.failed;
        ++group.count;
        ++table.all.count;
        if (*record.traj_correct) {
            ++group.traj_correct;
            ++table.all.traj_correct;
        }
        if (*record.ve_correct) {
            ++group.ve_correct;
            ++table.all.ve_correct;
        }
    }
    table.total = table.all.count;
    return table;
}

namespace {

std::string count_pct(long long count, long long denom) {
    if (denom <= 0) return std::to_string(count) + " (n/a)";
    const double pct = 100.0 * static_cast<double>(count) / static_cast<double>(denom);
    return std::to_string(count) + " (" + format_pct(pct) + "%)";
}

std::string pct_cell(long long count, long long denom) {
    if (denom <= 0) return {};
    return format_pct(100.0 * static_cast<double>(count) / static_cast<double>(denom));
}

} // namespace

std::string format_contingency_markdown(const ContingencyTable& table) {
    std::string out = "# Component accuracy by outcome\n\n";
    out += "| Outcome | Samples | Trajectory correct | Evidence correct |\n";
    out += "| --- | ---: | ---: | ---: |\n";
    const auto row = [&](const std::string& label, const ContingencyGroup& g) {
        out += "| " + label + " | " + count_pct(g.count, table.total) + " | " +
               count_pct(g.traj_correct, g.count) + " | " + count_pct(g.ve_correct, g.count) + " |\n";
    };
    row("Answer correct", table.success);
    row("Answer wrong", table.failed);
    row("All", table.all);
    return out;
}

std::string format_contingency_csv(const ContingencyTable& table) {
    std::string out = "outcome,count,count_pct,traj_correct,traj_pct,ve_correct,ve_pct\n";
    const auto row = [&](const std::string& label, const ContingencyGroup& g) {
        out += label + "," + std::to_string(g.count) + "," + pct_cell(g.count, table.total) + "," +
               std::to_string(g.traj_correct) + "," + pct_cell(g.traj_correct, g.count) + "," +
               std::to_string(g.ve_correct) + "," + pct_cell(g.ve_correct, g.count) + "\n";
    };
    row("answer_correct", table.success);
    row("answer_wrong", table.failed);
    row("all", table.all);
    return out;
}

SupervisionSweep supervision_sweep(const std::vector<Problem>& problems,
                                   const AgentRegistry& registry, const std::string& agent_id,
                                   SupervisionMode mode, const PromptLibrary& prompts,
                                   std::uint64_t seed) {
    SupervisionSweep sweep;
    sweep.mode = mode;
    for (const auto& problem : problems) {
        if (!problem.ground_truth) continue;
        auto first = solve(registry, agent_id, problem, PromptMode::structured_ve, {}, prompts, seed, 0);
        if (!first) continue;
        const auto before = try_grade_answer(first->answer, problem);
        if (!before) continue;
        ++sweep.total;
        if (*before) continue;
        ++sweep.failed;

        SupervisionPayload payload;
        payload.mode = mode;
        if (mode == SupervisionMode::gt_judge_plus_answer) payload.gt_answer = problem.ground_truth;
        if (mode == SupervisionMode::gt_ve) payload.gt_evidence = problem.gt_evidence;
        payload.prior_history = {*first};
        try {
            const AgentResponse retry =
                supervised_retry(problem, payload, registry, agent_id, prompts, seed);
            const auto after = try_grade_answer(retry.answer, problem);
            if (after && *after) ++sweep.corrected;
        } catch (const ParseFailure&) {
            // An abstained retry stands as uncorrected.
        }
    }
    return sweep;
}

ReflectionSweep reflection_sweep(const std::vector<Problem>& problems, const AgentRegistry& registry,
                                 const std::string& agent_id, PromptMode mode,
                                 const PromptLibrary& prompts, std::uint64_t seed) {
    ReflectionSweep sweep;
    sweep.mode = mode;
    for (const auto& problem : problems) {
        if (!problem.ground_truth) continue;
        auto first = solve(registry, agent_id, problem, PromptMode::structured_ve, {}, prompts, seed, 0);
        if (!first) continue;
        const auto before = try_grade_answer(first->answer, problem);
        if (!before) continue;
        ++sweep.total;
        if (*before) ++sweep.correct_before;
        try {
            const AgentResponse retry =
                reflection_retry(problem, *first, mode, registry, agent_id, prompts, seed);
            if (retry.answer != first->answer) ++sweep.changed_answers;
            const auto after = try_grade_answer(retry.answer, problem);
            if (after.value_or(false)) ++sweep.correct_after;
        } catch (const ParseFailure&) {
            if (*before) ++sweep.correct_after;
        }
    }
    return sweep;
}

} // namespace m3ace
