#include "m3ace/simmodel.hpp"

#include <sstream>

#include "m3ace/strings.hpp"

namespace m3ace::sim {

std::optional<std::pair<std::string, int>> parse_statement(const std::string& text) {
    // The key keeps its original case; only the fixed grammar words are
    // compared case-insensitively.
    std::istringstream in(trim(text));
    std::string word, key, reads, value_text;
    if (!(in >> word >> key >> reads >> value_text)) return std::nullopt;
    std::string tail;
    if (in >> tail) return std::nullopt;
    if (lower(word) != "measurement" || lower(reads) != "reads") return std::nullopt;
    while (!value_text.empty() && (value_text.back() == '.' || value_text.back() == ',')) {
        value_text.pop_back();
    }
    try {
        std::size_t used = 0;
        const int value = std::stoi(value_text, &used);
        if (used != value_text.size()) return std::nullopt;
        return std::make_pair(key, value);
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

int key_weight(const Problem& problem, const std::string& key) {
    for (std::size_t i = 0; i < problem.sim_keys.size(); ++i) {
        if (problem.sim_keys[i] == key) return static_cast<int>(i) + 1;
    }
    return 0;
}

long long weighted_sum(const Problem& problem, const std::map<std::string, int>& beliefs) {
    long long sum = 0;
    for (const auto& [key, value] : beliefs) {
        sum += static_cast<long long>(key_weight(problem, key)) * value;
    }
    return sum;
}

long long correct_answer(const Problem& problem) {
    long long sum = 0;
    for (std::size_t i = 0; i < problem.sim_keys.size(); ++i) {
        sum += static_cast<long long>(i + 1) * true_value(problem.id, problem.sim_keys[i]);
    }
    return sum;
}

std::vector<std::string> correct_trajectory(const Problem& problem) {
    std::vector<std::string> steps;
    for (std::size_t i = 0; i < problem.sim_keys.size(); ++i) {
        steps.push_back("step " + std::to_string(i + 1) + ": add " + std::to_string(i + 1) +
                        " times measurement " + problem.sim_keys[i]);
    }
    steps.push_back("step " + std::to_string(problem.sim_keys.size() + 1) + ": report the accumulated total");
    return steps;
}

std::vector<std::string> wrong_trajectory(const Problem& problem) {
    auto steps = correct_trajectory(problem);
    // Deterministic per problem: one step uses the wrong multiplier.
    const std::size_t bad = problem_hash(problem.id, "traj-step") % problem.sim_keys.size();
    steps[bad] = "step " + std::to_string(bad + 1) + ": add measurement " + problem.sim_keys[bad] +
                 " without weighting";
    return steps;
}

void annotate(AgentResponse& response, const Problem& problem) {
    if (!problem.is_simulated()) return;
    for (auto& item : response.evidence) {
        const auto parsed = parse_statement(item.statement);
        if (!parsed) continue;
        if (key_weight(problem, parsed->first) == 0) continue;
        item.key = parsed->first;
        item.polarity = parsed->second == true_value(problem.id, parsed->first) ? Polarity::correct
                                                                                : Polarity::corrupted;
    }
}

Problem make_problem(const std::string& id, int evidence_count, int distractor_count) {
    Problem p;
    p.id = id;
    p.answer_kind = AnswerKind::numeric;
    p.image = "synthetic://" + id;
    p.sim_distractors = distractor_count;
    for (int i = 1; i <= evidence_count; ++i) {
        p.sim_keys.push_back("F" + std::to_string(i));
    }
    p.question = "The panel shows measurements " + p.sim_keys.front() + " through " +
                 p.sim_keys.back() +
                 ". Compute the weighted checksum: the sum over i of i times measurement F_i.";
    for (const auto& key : p.sim_keys) {
        p.gt_evidence.push_back(statement(key, true_value(id, key)));
    }
    p.ground_truth = std::to_string(correct_answer(p));
    return p;
}

} // namespace m3ace::sim
