#pragma once

#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "m3ace/core.hpp"
#include "m3ace/summary.hpp"

namespace m3ace {

enum class PromptMode {
    cot_plain,
    structured_ve,
    decoupled_three_step,
    regenerate_with_summary,
    reflect_on_answer,
    reflect_on_ve,
    supervised_retry,
};

std::string to_string(PromptMode mode);

enum class SupervisionMode { gt_judge, gt_judge_plus_answer, gt_ve };

std::string to_string(SupervisionMode mode);
SupervisionMode supervision_mode_from_string(const std::string& text);

// Idealized-supervision payload for the retry probes: tell the agent it
// was wrong, optionally hand it the answer, or hand it the evidence.
struct SupervisionPayload {
    SupervisionMode mode = SupervisionMode::gt_judge;
    std::optional<std::string> gt_answer;
    std::vector<std::string> gt_evidence;
    std::vector<AgentResponse> prior_history;

    void validate() const;
};

// Behavior knobs for a simulated agent. An answer comes out correct iff
// every required evidence item was perceived correctly and the trajectory
// draw succeeded; everything else yields a deterministic distractor.
//
// misread_share splits perception failures into two styles: with this
// probability the agent asserts a concrete wrong value (a misread), and
// otherwise it silently drops the item (an omission). Misreads are the
// failures a cross-agent conflict check can see; omissions only thin the
// evidence out. Wrong values are shared per (problem, key), so two agents
// that misread the same item agree with each other.
struct StochasticProfile {
    double p_ve = 0.85;
    double p_traj = 0.95;
    double p_fix_external = 0.6;
    double p_fix_internal = 0.35;
    double stubbornness = 0.7;
    double misread_share = 0.5;

    void validate() const;
};

StochasticProfile stochastic_profile_from_json(const json& j);
json to_json(const StochasticProfile& p);

struct AgentSpec {
    enum class Backend { remote, scripted, stochastic };

    std::string id;
    Backend backend = Backend::scripted;
    std::string endpoint;
    std::string model_name;
    std::string api_key_env;
    double temperature = 0.0;
    int max_retries = 2;
    std::optional<StochasticProfile> profile;

    void validate() const;
};

std::string to_string(AgentSpec::Backend b);
AgentSpec::Backend backend_from_string(const std::string& text);
AgentSpec agent_spec_from_json(const json& j);
json to_json(const AgentSpec& spec);

// Prompt templates. Embedded defaults are compiled in from prompts/*.txt;
// a directory of same-named files overrides individual templates.
class PromptLibrary {
public:
    static PromptLibrary defaults();
    static PromptLibrary from_dir(const std::string& dir);

    const std::string& text(const std::string& name) const;
    std::string render(const std::string& name,
                       const std::map<std::string, std::string>& values) const;

private:
    std::map<std::string, std::string> templates_;
};

struct PromptExtras {
    const CategorizedEvidence* summary = nullptr;
    const AgentResponse* prior = nullptr;
    const SupervisionPayload* supervision = nullptr;
};

// Assembles the full prompt for one invocation. Machine-readable blocks
// (question, evidence groups, prior response) are rendered by code with
// fixed section markers; the surrounding instructions come from the
// template library. Throws MissingExtras when the mode needs a payload
// that was not supplied.
std::string build_solve_prompt(const Problem& problem,
                               PromptMode mode,
                               const PromptExtras& extras,
                               const PromptLibrary& prompts);

// Parses the VISUAL_EVIDENCE / TRAJECTORY / ANSWER grammar. Headers match
// case-insensitively, tolerate markdown emphasis, and underscores may
// appear as spaces. Items are numbered ("1." / "2)") or bulleted ("-",
// "*") lines. The answer is the text after the LAST answer header.
// Throws ParseFailure when the response cannot be used.
AgentResponse parse_structured_response(const std::string& raw, PromptMode mode);

// Canned responses keyed by (problem, agent, round); each invocation pops
// the next one, so re-prompts consume successive fixture entries.
class ScriptedStore {
public:
    struct Entry {
        std::string problem_id;
        std::string agent_id;
        int round = 0;
        std::string text;
    };

    static ScriptedStore from_jsonl(const std::string& path);

    ScriptedStore() = default;
    ScriptedStore(ScriptedStore&& other) noexcept : queues_(std::move(other.queues_)) {}

    void add(Entry entry);
    std::string pop(const std::string& problem_id, const std::string& agent_id, int round);

private:
    std::map<std::string, std::deque<std::string>> queues_;
    std::mutex mutex_;
};

struct InvokeContext {
    const Problem* problem = nullptr;
    std::string agent_id;
    int round = 0;
    PromptMode mode = PromptMode::structured_ve;
    std::uint64_t seed = 0;
    int attempt = 0;
};

// One raw invocation of the configured backend. Remote performs a chat
// completion round trip with retries and exponential backoff; scripted
// pops the fixture queue; stochastic synthesizes text from profile draws
// on streams derived from (seed, problem, agent, round), so results are
// byte-stable regardless of scheduling.
std::string invoke(const AgentSpec& agent,
                   const std::string& prompt,
                   const std::string& image,
                   const InvokeContext& ctx,
                   ScriptedStore* fixtures);

class AgentRegistry {
public:
    void add(AgentSpec spec);
    bool has(const std::string& id) const;
    const AgentSpec& spec(const std::string& id) const;
    std::vector<std::string> ids() const;

    void attach_fixtures(std::shared_ptr<ScriptedStore> store);
    ScriptedStore* fixtures() const { return fixtures_.get(); }

    std::string invoke(const std::string& agent_id,
                       const std::string& prompt,
                       const std::string& image,
                       const InvokeContext& ctx) const;

private:
    std::map<std::string, AgentSpec> specs_;
    std::shared_ptr<ScriptedStore> fixtures_;
};

// How many times a garbled response is re-requested before the agent is
// treated as abstaining for the round.
inline constexpr int kReprompts = 2;

// Build prompt, invoke, parse; re-prompt on ParseFailure up to kReprompts
// times. Returns nothing when every attempt failed to parse. The parsed
// response is stamped with agent id and round, and synthetic problems get
// their evidence metadata annotated.
std::optional<AgentResponse> solve(const AgentRegistry& registry,
                                   const std::string& agent_id,
                                   const Problem& problem,
                                   PromptMode mode,
                                   const PromptExtras& extras,
                                   const PromptLibrary& prompts,
                                   std::uint64_t seed,
                                   int round);

} // namespace m3ace
