#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "m3ace/core.hpp"
#include "m3ace/rng.hpp"

namespace m3ace::sim {

// Ground truth for synthetic problems. Every value is a pure function of
// (problem id, key), so any component can recompute it without shared
// state: the generator, the stochastic agents, and the graders all agree.
//
// Crucially, the corrupted value is ALSO deterministic per (problem, key).
// Two agents that misread the same measurement misread it the same way,
// which produces the shared-mistake consensus failures the refine gate has
// to survive.

inline int true_value(const std::string& problem_id, const std::string& key) {
    return 10 + static_cast<int>(problem_hash(problem_id, "val:" + key) % 90);
}

inline int corrupted_value(const std::string& problem_id, const std::string& key, int distractor_count) {
    const std::uint64_t span = distractor_count > 0 ? static_cast<std::uint64_t>(distractor_count) : 1;
    return true_value(problem_id, key) + 1 +
           static_cast<int>(problem_hash(problem_id, "bad:" + key) % span);
}

inline std::string statement(const std::string& key, int value) {
    return "measurement " + key + " reads " + std::to_string(value);
}

// Inverse of statement(); returns nothing for free-text statements.
std::optional<std::pair<std::string, int>> parse_statement(const std::string& text);

// 1-based weight of a key within the problem's key list; 0 if absent.
int key_weight(const Problem& problem, const std::string& key);

// The checksum: sum of weight * believed value over the problem's keys.
long long weighted_sum(const Problem& problem, const std::map<std::string, int>& beliefs);

long long correct_answer(const Problem& problem);

// Offset added to an answer when the reasoning trajectory goes wrong.
inline long long traj_delta(const std::string& problem_id) {
    return 1 + static_cast<long long>(problem_hash(problem_id, "traj-delta") % 17);
}

std::vector<std::string> correct_trajectory(const Problem& problem);
std::vector<std::string> wrong_trajectory(const Problem& problem);

// Fills in key/polarity metadata on parsed evidence for synthetic
// problems; leaves items untouched when their statement does not parse or
// the key is not one of the problem's.
void annotate(AgentResponse& response, const Problem& problem);

// Builds the synthetic problem for one simulator slot.
Problem make_problem(const std::string& id, int evidence_count, int distractor_count);

} // namespace m3ace::sim
