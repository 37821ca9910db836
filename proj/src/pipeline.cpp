#include "m3ace/pipeline.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <thread>

#include "m3ace/harness.hpp"
#include "m3ace/rng.hpp"
#include "m3ace/strings.hpp"

namespace fs = std::filesystem;

namespace m3ace {

namespace {

// Runs fn(0..count-1) on up to `parallelism` threads. fn must not throw;
// per-item failures are captured inside the outcome structs so they can
// be applied deterministically afterwards.
void parallel_for(std::size_t count, int parallelism, const std::function<void(std::size_t)>& fn) {
    const std::size_t workers =
        std::min<std::size_t>(static_cast<std::size_t>(std::max(parallelism, 1)), count);
    if (workers <= 1) {
        for (std::size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (std::size_t i = next.fetch_add(1); i < count; i = next.fetch_add(1)) fn(i);
        });
    }
    for (auto& t : pool) t.join();
}

void write_file_atomic(const fs::path& path, const std::string& content) {
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("IoError", "cannot write " + tmp.string());
        out << content;
        if (!out) throw Error("IoError", "short write to " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file_or_corrupt(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CorruptRun("cannot read " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string iso_now() {
    const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02d-%02dT%02d:%02d:%02dZ", tm.tm_year + 1900,
                  tm.tm_mon + 1, tm.tm_mday, tm.tm_hour, tm.tm_min, tm.tm_sec);
    return buf;
}

// Judge replies are expected to be a single label but models ramble; the
// last recognizable token wins, and anything unrecognizable is the
// conservative default.
PairVerdict evidence_verdict_from_text(const std::string& raw) {
    PairVerdict verdict;
    verdict.raw = trim(raw);
    std::istringstream tokens(normalize_text(raw));
    std::string token;
    while (tokens >> token) {
        if (token == "supports") verdict.label = PairLabel::supports;
        else if (token == "contradicts") verdict.label = PairLabel::contradicts;
        else if (token == "unrelated") verdict.label = PairLabel::unrelated;
    }
    return verdict;
}

bool answer_verdict_from_text(const std::string& raw) {
    bool same = false;
    std::istringstream tokens(normalize_text(raw));
    std::string token;
    while (tokens >> token) {
        if (token == "same") same = true;
        else if (token == "different") same = false;
    }
    return same;
}

std::string invoke_judge(const AgentRegistry& registry, const std::string& judge_id,
                         const Problem& problem, int round, const std::string& prompt) {
    InvokeContext ctx;
    ctx.problem = &problem;
    ctx.agent_id = judge_id;
    ctx.round = round;
    try {
        return registry.invoke(judge_id, prompt, "", ctx);
    } catch (const std::exception& e) {
        throw JudgeUnavailable(e.what());
    }
}

} // namespace

Fraction PipelineState::selection_ratio() const {
    return Fraction::ratio(static_cast<std::int64_t>(selected.size()),
                           static_cast<std::int64_t>(books.size()));
}

Engine::Engine(std::vector<Problem> problems, PipelineConfig config, AgentRegistry registry,
               PromptLibrary prompts)
    : problems_(std::move(problems)),
      config_(std::move(config)),
      registry_(std::move(registry)),
      prompts_(std::move(prompts)) {}

const Problem& Engine::problem(const std::string& id) const {
    for (const auto& p : problems_) {
        if (p.id == id) return p;
    }
    throw CorruptRun("unknown problem id " + id);
}

void Engine::set_evidence_judge(const std::string& agent_id) {
    if (!registry_.has(agent_id)) throw ConfigError("judge.evidence", "unknown agent '" + agent_id + "'");
    evidence_judge_ = agent_id;
}

void Engine::set_answer_judge(const std::string& agent_id) {
    if (!registry_.has(agent_id)) throw ConfigError("judge.answer", "unknown agent '" + agent_id + "'");
    answer_judge_ = agent_id;
}

void Engine::enable_persistence(const std::string& run_dir, const json& cli_config) {
    run_dir_ = run_dir;
    cli_config_ = cli_config;
    // When pointed at an existing run (resume), continue its event counter.
    const fs::path state_path = fs::path(run_dir_) / "state.json";
    if (fs::exists(state_path)) {
        try {
            const json j = json::parse(read_file_or_corrupt(state_path));
            transcript_seq_ = j.value("transcript_seq", std::uint64_t{0});
        } catch (const std::exception&) {
            transcript_seq_ = 0;
        }
    }
}

EvidenceMatcher Engine::matcher_for(const Problem& problem, int round) const {
    if (evidence_judge_.empty()) return EvidenceMatcher::canonical();
    const Problem* p = &problem;
    return EvidenceMatcher::with_judge([this, p, round](const EvidenceItem& a, const EvidenceItem& b) {
        const std::string prompt = prompts_.render(
            "judge_evidence_pair", {{"statement_a", a.statement}, {"statement_b", b.statement}});
        return evidence_verdict_from_text(invoke_judge(registry_, evidence_judge_, *p, round, prompt));
    });
}

AnswerEquivalence Engine::equivalence_for(const Problem& problem, int round) const {
    if (!answer_judge_.empty()) {
        const Problem* p = &problem;
        return AnswerEquivalence::with_judge([this, p, round](const std::string& a, const std::string& b) {
            const std::string prompt =
                prompts_.render("judge_answer_pair", {{"answer_a", a}, {"answer_b", b}});
            return answer_verdict_from_text(invoke_judge(registry_, answer_judge_, *p, round, prompt));
        });
    }
    switch (problem.answer_kind) {
        case AnswerKind::numeric: return AnswerEquivalence::numeric();
        case AnswerKind::multiple_choice: return AnswerEquivalence::choice_letter();
        case AnswerKind::free_form: return AnswerEquivalence::choice_letter();
    }
    return AnswerEquivalence::choice_letter();
}

struct Engine::InitOutcome {
    std::string problem_id;
    std::optional<AgentResponse> anchor;
    std::vector<AgentResponse> assistants;
    std::string failure; // anchor produced nothing; empty on success
};

Engine::InitOutcome Engine::initialize_problem(const Problem& problem) const {
    InitOutcome out;
    out.problem_id = problem.id;
    try {
        out.anchor = solve(registry_, config_.anchor, problem, PromptMode::structured_ve, {},
                           prompts_, config_.seed, 0);
        if (!out.anchor) {
            out.failure = "anchor abstained after " + std::to_string(kReprompts) + " re-prompts";
        }
    } catch (const Error& e) {
        out.failure = e.code() + ": " + e.what();
    } catch (const std::exception& e) {
        out.failure = e.what();
    }
    for (const auto& assistant_id : config_.assistants) {
        try {
            if (auto resp = solve(registry_, assistant_id, problem, PromptMode::structured_ve, {},
                                  prompts_, config_.seed, 0)) {
                out.assistants.push_back(std::move(*resp));
            }
        } catch (const std::exception&) {
            // A failed assistant abstains; it still counts in the consensus
            // denominator but contributes no evidence or answer.
        }
    }
    return out;
}

void Engine::apply_init_outcome(PipelineState& state, InitOutcome outcome) {
    const std::string pid = outcome.problem_id;
    ContextBook book;
    std::string failure = outcome.failure;
    if (outcome.anchor) {
        try {
            book = new_context_book(problem(pid), config_.anchor, *outcome.anchor, outcome.assistants);
        } catch (const Error& e) {
            failure = e.code() + ": " + e.what();
        }
    }
    if (failure.empty()) {
        state.unresolved.insert(pid);
        persist_book(book);
        append_transcript(pid, 0, "book_created", to_json(book));
    } else {
        book = ContextBook{};
        book.problem_id = pid;
        book.assistant_responses = std::move(outcome.assistants);
        book.status = BookStatus::finalized_non_converged;
        book.final_answer = std::string{};
        state.non_converged.insert(pid);
        persist_book(book);
        append_transcript(pid, 0, "quarantined", json{{"reason", failure}});
    }
    state.books.erase(pid);
    state.books.emplace(pid, std::move(book));
}

PipelineState Engine::initialize() {
    if (problems_.empty()) throw Error("NoProblems", "cannot start a run with zero problems");
    config_.validate();
    if (!registry_.has(config_.anchor)) {
        throw ConfigError("pipeline.anchor", "unknown agent '" + config_.anchor + "'");
    }
    for (const auto& assistant : config_.assistants) {
        if (!registry_.has(assistant)) {
            throw ConfigError("pipeline.assistants", "unknown agent '" + assistant + "'");
        }
    }
    {
        std::set<std::string> seen;
        for (const auto& p : problems_) {
            if (!seen.insert(p.id).second) {
                throw ConfigError("dataset", "duplicate problem id '" + p.id + "'");
            }
        }
    }

    PipelineState state;
    state.config = config_;
    state.round = 0;

    if (!run_dir_.empty()) {
        fs::create_directories(fs::path(run_dir_) / "books");
        started_at_ = iso_now();
        write_manifest(false);
        write_file_atomic(fs::path(run_dir_) / "config.json", dump_canonical(cli_config_));
        std::string lines;
        for (const auto& p : problems_) lines += to_json(p).dump() + "\n";
        write_file_atomic(fs::path(run_dir_) / "problems.jsonl", lines);
        persist_state(state, "initializing");
    }

    std::vector<InitOutcome> outcomes(problems_.size());
    parallel_for(problems_.size(), config_.parallelism,
                 [&](std::size_t i) { outcomes[i] = initialize_problem(problems_[i]); });
    for (auto& outcome : outcomes) apply_init_outcome(state, std::move(outcome));

    persist_state(state, "running");
    return state;
}

struct Engine::RoundOutcome {
    std::string problem_id;
    bool already_done = false; // an interrupted prior process persisted this round
    CategorizedEvidence input_summary;
    CategorizedEvidence gate;
    AgentResponse response;
    RefineDecision decision;
    std::string failure; // quarantine reason; empty on success
};

Engine::RoundOutcome Engine::refine_problem(const Problem& prob, const ContextBook& book,
                                            int next_round) const {
    RoundOutcome out;
    out.problem_id = prob.id;
    try {
        if (static_cast<int>(book.decisions.size()) >= next_round) {
            out.already_done = true;
            return out;
        }
        std::vector<std::vector<EvidenceItem>> assistant_evidence;
        assistant_evidence.reserve(book.assistant_responses.size());
        for (const auto& resp : book.assistant_responses) assistant_evidence.push_back(resp.evidence);
        const EvidenceMatcher matcher = matcher_for(prob, next_round);

        const auto cached = summary_cache_.find(prob.id);
        out.input_summary =
            cached != summary_cache_.end()
                ? cached->second
                : categorize(book.anchor_history.back().evidence, assistant_evidence, matcher);

        PromptExtras extras;
        extras.summary = &out.input_summary;
        auto regenerated = solve(registry_, config_.anchor, prob, PromptMode::regenerate_with_summary,
                                 extras, prompts_, config_.seed, next_round);
        if (!regenerated) {
            out.failure = "anchor abstained after re-prompts in round " + std::to_string(next_round);
            return out;
        }
        out.response = std::move(*regenerated);

        out.gate = categorize(out.response.evidence, assistant_evidence, matcher);

        std::vector<std::string> assistant_answers;
        assistant_answers.reserve(book.assistant_responses.size());
        for (const auto& resp : book.assistant_responses) assistant_answers.push_back(resp.answer);
        const ConsensusResult consensus =
            answer_consensus(out.response.answer, assistant_answers,
                             static_cast<int>(config_.assistants.size()),
                             equivalence_for(prob, next_round));
        out.decision = refine_decision(out.gate.conflict_ratio, consensus.agree_count,
                                       consensus.high_consensus, config_.conflict_threshold);
    } catch (const Error& e) {
        out.failure = e.code() + ": " + e.what();
    } catch (const std::exception& e) {
        out.failure = e.what();
    }
    return out;
}

void Engine::run_round(PipelineState& state) {
    if (state.unresolved.empty()) {
        throw Error("EmptyInput", "run_round called with no unresolved problems");
    }
    const int next_round = state.round + 1;
    const std::vector<std::string> pids(state.unresolved.begin(), state.unresolved.end());
    std::vector<RoundOutcome> outcomes(pids.size());
    parallel_for(pids.size(), config_.parallelism, [&](std::size_t i) {
        outcomes[i] = refine_problem(problem(pids[i]), state.books.at(pids[i]), next_round);
    });

    for (auto& outcome : outcomes) {
        const std::string& pid = outcome.problem_id;
        ContextBook& book = state.books.at(pid);
        if (outcome.already_done) continue;
        if (!outcome.failure.empty()) {
            const std::string last =
                book.anchor_history.empty() ? std::string{} : book.anchor_history.back().answer;
            finalize(book, last, false);
            state.unresolved.erase(pid);
            state.non_converged.insert(pid);
            summary_cache_.erase(pid);
            persist_book(book);
            append_transcript(pid, next_round, "quarantined", json{{"reason", outcome.failure}});
            continue;
        }
        book.summaries.push_back(std::move(outcome.input_summary));
        book.decisions.push_back(outcome.decision);
        book.anchor_history.push_back(std::move(outcome.response));
        append_transcript(pid, next_round, "summarized", to_json(book.summaries.back()));
        append_transcript(pid, next_round, "regenerated", to_json(book.anchor_history.back()));
        append_transcript(pid, next_round, "decided", to_json(outcome.decision));
        if (outcome.decision.verdict == Verdict::Select) {
            finalize(book, book.anchor_history.back().answer, true);
            state.unresolved.erase(pid);
            state.selected.insert(pid);
            summary_cache_.erase(pid);
            append_transcript(pid, next_round, "selected", json{{"answer", *book.final_answer}});
        } else {
            // The gate categorization of the new evidence doubles as the
            // regeneration input of the next round; caching it avoids
            // recomputing identical judge verdicts.
            summary_cache_[pid] = std::move(outcome.gate);
        }
        persist_book(book);
    }
    state.round = next_round;
}

void Engine::finalize_leftovers(PipelineState& state) {
    const std::vector<std::string> leftovers(state.unresolved.begin(), state.unresolved.end());
    for (const auto& pid : leftovers) {
        ContextBook& book = state.books.at(pid);
        const std::string last =
            book.anchor_history.empty() ? std::string{} : book.anchor_history.back().answer;
        finalize(book, last, false);
        state.unresolved.erase(pid);
        state.non_converged.insert(pid);
        summary_cache_.erase(pid);
        persist_book(book);
        append_transcript(pid, state.round, "finalized_non_converged", json{{"answer", last}});
    }
}

RunResult Engine::run() { return complete(initialize()); }

RunResult Engine::complete(PipelineState state) {
    if (!state.pending_init.empty()) {
        const std::vector<std::string> pending(state.pending_init.begin(), state.pending_init.end());
        std::vector<InitOutcome> outcomes(pending.size());
        parallel_for(pending.size(), config_.parallelism,
                     [&](std::size_t i) { outcomes[i] = initialize_problem(problem(pending[i])); });
        for (auto& outcome : outcomes) apply_init_outcome(state, std::move(outcome));
        state.pending_init.clear();
        persist_state(state, "running");
    }

    while (!state.unresolved.empty() && state.round < config_.max_rounds) {
        if (!config_.always_reflect_rejected && state.selection_ratio() >= config_.tau) break;
        run_round(state);
        persist_state(state, "running");
    }
    finalize_leftovers(state);
    persist_state(state, "done");
    write_manifest(true);
    write_completion_artifacts(state);

    RunResult result;
    result.state = std::move(state);
    for (const auto& [pid, book] : result.state.books) {
        result.answers[pid] = book.final_answer.value_or("");
    }
    return result;
}

void Engine::write_completion_artifacts(const PipelineState& state) {
    if (run_dir_.empty()) return;
    StageGrader grader;
    if (!answer_judge_.empty()) {
        grader = [this](const std::string& predicted, const Problem& p) -> std::optional<bool> {
            if (!p.ground_truth) return std::nullopt;
            if (p.answer_kind != AnswerKind::free_form) return try_grade_answer(predicted, p);
            try {
                const std::string prompt = prompts_.render(
                    "judge_answer_pair", {{"answer_a", predicted}, {"answer_b", *p.ground_truth}});
                return answer_verdict_from_text(invoke_judge(registry_, answer_judge_, p, -1, prompt));
            } catch (const std::exception&) {
                return std::nullopt;
            }
        };
    }
    const StageMetrics metrics = stage_metrics(problems_, state.books, grader);
    write_file_atomic(fs::path(run_dir_) / "metrics.json", dump_canonical(to_json(metrics)));
    write_file_atomic(fs::path(run_dir_) / "report.md", report_markdown(metrics));
    write_file_atomic(fs::path(run_dir_) / "report.csv", report_csv(metrics));
}

void Engine::persist_book(const ContextBook& book) {
    if (run_dir_.empty()) return;
    write_file_atomic(fs::path(run_dir_) / "books" / book_file_name(book.problem_id),
                      dump_canonical(to_json(book)));
}

void Engine::persist_state(const PipelineState& state, const std::string& phase) {
    if (run_dir_.empty()) return;
    json j;
    j["phase"] = phase;
    j["round"] = state.round;
    j["transcript_seq"] = transcript_seq_;
    write_file_atomic(fs::path(run_dir_) / "state.json", dump_canonical(j));
}

void Engine::append_transcript(const std::string& problem_id, int round, const std::string& event,
                               const json& payload) {
    if (run_dir_.empty()) return;
    json j;
    j["ts"] = transcript_seq_++;
    j["problem_id"] = problem_id;
    j["round"] = round;
    j["event"] = event;
    j["payload_digest"] = digest_hex(payload.dump());
    std::ofstream out(fs::path(run_dir_) / "transcript.jsonl", std::ios::app);
    out << j.dump() << "\n";
}

void Engine::write_manifest(bool finished) {
    if (run_dir_.empty()) return;
    const fs::path path = fs::path(run_dir_) / "manifest.json";
    json m = json::object();
    if (fs::exists(path)) {
        try {
            m = json::parse(read_file_or_corrupt(path));
        } catch (const std::exception&) {
            m = json::object();
        }
    }
    m["run_id"] = fs::path(run_dir_).filename().string();
    m["version"] = kVersion;
    m["config_digest"] = digest_hex(dump_canonical(cli_config_));
    std::string problem_lines;
    for (const auto& p : problems_) problem_lines += to_json(p).dump() + "\n";
    m["dataset_digest"] = digest_hex(problem_lines);
    json agents = json::array();
    for (const auto& id : registry_.ids()) agents.push_back(to_json(registry_.spec(id)));
    m["agents_digest"] = digest_hex(dump_canonical(agents));
    if (!m.contains("started_at") || m["started_at"].is_null()) {
        m["started_at"] = started_at_.empty() ? iso_now() : started_at_;
    }
    m["finished_at"] = finished ? json(iso_now()) : json(nullptr);
    write_file_atomic(path, dump_canonical(m));
}

std::string book_file_name(const std::string& problem_id) {
    std::string safe;
    bool changed = false;
    for (const char c : problem_id) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.') {
            safe.push_back(c);
        } else {
            safe.push_back('_');
            changed = true;
        }
    }
    if (safe.empty()) {
        safe = "problem";
        changed = true;
    }
    // A sanitized name could collide with another id; the digest suffix
    // keeps file names unique.
    if (changed) safe += "-" + digest_hex(problem_id).substr(0, 8);
    return safe + ".json";
}

std::string digest_hex(const std::string& content) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(content)));
    return buf;
}

std::vector<Problem> run_problems(const std::string& run_dir) {
    const fs::path path = fs::path(run_dir) / "problems.jsonl";
    const std::string content = read_file_or_corrupt(path);
    std::vector<Problem> problems;
    int line_no = 0;
    for (const auto& line : split_lines(content)) {
        ++line_no;
        if (trim(line).empty()) continue;
        try {
            problems.push_back(problem_from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw CorruptRun("problems.jsonl line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (problems.empty()) throw CorruptRun("problems.jsonl lists no problems");
    return problems;
}

namespace {

json parse_json_or_corrupt(const fs::path& path) {
    try {
        return json::parse(read_file_or_corrupt(path));
    } catch (const json::exception& e) {
        throw CorruptRun(path.filename().string() + " unreadable: " + e.what());
    }
}

} // namespace

PipelineState resume(const std::string& run_dir) {
    const fs::path root(run_dir);
    if (!fs::is_directory(root)) throw CorruptRun("run directory does not exist: " + run_dir);
    if (!fs::exists(root / "state.json")) throw CorruptRun("state.json missing in " + run_dir);

    const json state_json = parse_json_or_corrupt(root / "state.json");
    const json config_json = parse_json_or_corrupt(root / "config.json");
    if (!config_json.contains("pipeline")) throw CorruptRun("config.json has no pipeline section");

    PipelineState state;
    try {
        state.config = pipeline_config_from_json(config_json.at("pipeline"));
    } catch (const std::exception& e) {
        throw CorruptRun(std::string("config.json pipeline section invalid: ") + e.what());
    }
    const std::string phase = state_json.value("phase", std::string("running"));
    state.round = state_json.value("round", 0);

    for (const auto& p : run_problems(run_dir)) {
        const fs::path book_path = root / "books" / book_file_name(p.id);
        if (!fs::exists(book_path)) {
            if (phase == "initializing") {
                state.pending_init.insert(p.id);
                continue;
            }
            throw CorruptRun("book for problem " + p.id + " is missing (" +
                             book_path.filename().string() + ")");
        }
        ContextBook book;
        try {
            book = context_book_from_json(json::parse(read_file_or_corrupt(book_path)));
        } catch (const std::exception& e) {
            throw CorruptRun("book file " + book_path.filename().string() + " for problem " + p.id +
                             " is unreadable: " + e.what());
        }
        if (book.problem_id != p.id) {
            throw CorruptRun("book file " + book_path.filename().string() + " names problem '" +
                             book.problem_id + "', expected '" + p.id + "'");
        }
        switch (book.status) {
            case BookStatus::selected: state.selected.insert(p.id); break;
            case BookStatus::finalized_non_converged: state.non_converged.insert(p.id); break;
            case BookStatus::unresolved: state.unresolved.insert(p.id); break;
        }
        state.books.emplace(p.id, std::move(book));
    }
    return state;
}

ResumedRun resume_run(const std::string& run_dir) {
    const fs::path root(run_dir);
    PipelineState state = resume(run_dir);
    const json config_json = parse_json_or_corrupt(root / "config.json");
    std::vector<Problem> problems = run_problems(run_dir);
    try {
        Engine engine = engine_from_config(config_json, std::move(problems));
        engine.enable_persistence(run_dir, config_json);
        return ResumedRun{std::move(engine), std::move(state), config_json};
    } catch (const ConfigError& e) {
        throw CorruptRun(std::string("stored config is invalid: ") + e.what());
    }
}

Engine engine_from_config(const json& config, std::vector<Problem> problems) {
    if (!config.is_object() || !config.contains("pipeline")) {
        throw ConfigError("pipeline", "config must contain a pipeline section");
    }
    PipelineConfig pipeline_config = pipeline_config_from_json(config.at("pipeline"));
    pipeline_config.validate();

    if (!config.contains("agents") || !config.at("agents").is_array() || config.at("agents").empty()) {
        throw ConfigError("agents", "config must list at least one agent");
    }
    AgentRegistry registry;
    for (const auto& spec : config.at("agents")) registry.add(agent_spec_from_json(spec));

    if (config.contains("fixtures") && !config.at("fixtures").is_null()) {
        const std::string path = config.at("fixtures").get<std::string>();
        registry.attach_fixtures(std::make_shared<ScriptedStore>(ScriptedStore::from_jsonl(path)));
    }

    PromptLibrary prompts = PromptLibrary::defaults();
    if (config.contains("prompts_dir") && !config.at("prompts_dir").is_null()) {
        prompts = PromptLibrary::from_dir(config.at("prompts_dir").get<std::string>());
    }

    Engine engine(std::move(problems), std::move(pipeline_config), std::move(registry),
                  std::move(prompts));
    if (config.contains("judge") && config.at("judge").is_object()) {
        const json& judge = config.at("judge");
        if (judge.contains("evidence") && !judge.at("evidence").is_null()) {
            engine.set_evidence_judge(judge.at("evidence").get<std::string>());
        }
        if (judge.contains("answer") && !judge.at("answer").is_null()) {
            engine.set_answer_judge(judge.at("answer").get<std::string>());
        }
    }
    return engine;
}

} // namespace m3ace
