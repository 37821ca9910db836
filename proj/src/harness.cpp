#include "m3ace/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "m3ace/pipeline.hpp"
#include "m3ace/refine.hpp"
#include "m3ace/simmodel.hpp"
#include "m3ace/strings.hpp"

namespace m3ace {

namespace {

// Shortest decimal that round-trips the exact double.
std::string double_str(double value) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, value);
    return std::string(buf, res.ptr);
}

} // namespace

std::vector<Problem> load_dataset(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError(0, "file", "cannot open " + path);
    std::stringstream buf;
    buf << in.rdbuf();

    std::vector<Problem> problems;
    std::set<std::string> seen;
    int line_no = 0;
    for (const auto& line : split_lines(buf.str())) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(line_no, "json", e.what());
        }
        if (!j.is_object()) throw SchemaError(line_no, "json", "line is not an object");
        for (const char* field : {"id", "question", "image", "answer", "answer_kind"}) {
            if (!j.contains(field)) throw SchemaError(line_no, field, "missing");
        }
        Problem p;
        try {
            p = problem_from_json(j);
        } catch (const Error& e) {
            throw SchemaError(line_no, "answer_kind", e.what());
        } catch (const json::exception& e) {
            throw SchemaError(line_no, "json", e.what());
        }
        if (p.answer_kind == AnswerKind::multiple_choice && p.choices.empty()) {
            throw SchemaError(line_no, "choices", "multiple_choice problems need a choices list");
        }
        if (!seen.insert(p.id).second) {
            throw SchemaError(line_no, "id", "duplicate_id '" + p.id + "'");
        }
        problems.push_back(std::move(p));
    }
    return problems;
}

bool grade_answer(const std::string& predicted, const Problem& problem, const AnswerJudge& judge) {
    if (!problem.ground_truth) {
        throw Error("IncompleteRun", "problem '" + problem.id + "' has no ground truth to grade against");
    }
    const std::string& expected = *problem.ground_truth;
    switch (problem.answer_kind) {
        case AnswerKind::multiple_choice: {
            const std::string a = normalize_label(predicted);
            const std::string b = normalize_label(expected);
            return !a.empty() && a == b;
        }
        case AnswerKind::numeric:
            return numeric_equal(predicted, expected);
        case AnswerKind::free_form: {
            if (!judge) {
                throw Error("JudgeRequired",
                            "free-form problem '" + problem.id + "' needs an answer judge to grade");
            }
            return judge(predicted, expected);
        }
    }
    return false;
}

std::optional<bool> try_grade_answer(const std::string& predicted, const Problem& problem,
                                     const AnswerJudge& judge) {
    try {
        return grade_answer(predicted, problem, judge);
    } catch (const Error&) {
        return std::nullopt;
    }
}

const StageStat* StageMetrics::find(const std::string& stage) const {
    for (const auto& s : stages) {
        if (s.stage == stage) return &s;
    }
    return nullptr;
}

bool StageMetrics::operator==(const StageMetrics& other) const {
    if (stages.size() != other.stages.size()) return false;
    for (std::size_t i = 0; i < stages.size(); ++i) {
        const StageStat& a = stages[i];
        const StageStat& b = other.stages[i];
        if (a.stage != b.stage || a.count != b.count || a.correct != b.correct) return false;
        if (a.accuracy_pct.has_value() != b.accuracy_pct.has_value()) return false;
        if (a.accuracy_pct && *a.accuracy_pct != *b.accuracy_pct) return false;
    }
    return true;
}

json to_json(const StageMetrics& metrics) {
    json stages = json::array();
    for (const auto& s : metrics.stages) {
        json row;
        row["stage"] = s.stage;
        row["count"] = s.count;
        row["correct"] = s.correct ? json(*s.correct) : json(nullptr);
        row["accuracy_pct"] = s.accuracy_pct ? json(*s.accuracy_pct) : json(nullptr);
        stages.push_back(std::move(row));
    }
    json j;
    j["stages"] = std::move(stages);
    return j;
}

StageMetrics stage_metrics_from_json(const json& j) {
    StageMetrics metrics;
    for (const auto& row : j.at("stages")) {
        StageStat s;
        s.stage = row.at("stage").get<std::string>();
        s.count = row.at("count").get<long long>();
        if (row.contains("correct") && !row.at("correct").is_null()) {
            s.correct = row.at("correct").get<long long>();
        }
        if (row.contains("accuracy_pct") && !row.at("accuracy_pct").is_null()) {
            s.accuracy_pct = row.at("accuracy_pct").get<double>();
        }
        metrics.stages.push_back(std::move(s));
    }
    return metrics;
}

namespace {

struct Tally {
    long long count = 0;
    long long graded = 0;
    long long correct = 0;

    void add(const std::optional<bool>& verdict) {
        ++count;
        if (verdict) {
            ++graded;
            if (*verdict) ++correct;
        }
    }

    StageStat stat(const std::string& stage) const {
        StageStat s;
        s.stage = stage;
        s.count = count;
        if (graded > 0) {
            s.correct = correct;
            s.accuracy_pct = 100.0 * static_cast<double>(correct) / static_cast<double>(graded);
        }
        return s;
    }
};

} // namespace

StageMetrics stage_metrics(const std::vector<Problem>& problems,
                           const std::map<std::string, ContextBook>& books,
                           const StageGrader& grader) {
    if (problems.empty()) throw Error("IncompleteRun", "no problems to grade");
    const StageGrader grade = grader ? grader : [](const std::string& predicted, const Problem& p) {
        return try_grade_answer(predicted, p);
    };

    int max_round = 0;
    for (const auto& p : problems) {
        const auto it = books.find(p.id);
        if (it == books.end()) {
            throw Error("IncompleteRun", "problem '" + p.id + "' has no book");
        }
        if (!it->second.final_answer) {
            throw Error("IncompleteRun", "problem '" + p.id + "' is not finalized");
        }
        max_round = std::max(max_round, static_cast<int>(it->second.decisions.size()));
    }

    Tally cot;
    std::vector<Tally> regenerate(max_round + 1), select(max_round + 1), reject(max_round + 1),
        reflect(max_round + 1);
    Tally all;

    for (const auto& p : problems) {
        const ContextBook& book = books.at(p.id);
        if (!book.anchor_history.empty()) {
            cot.add(grade(book.anchor_history.front().answer, p));
        }
        const int rounds = static_cast<int>(book.decisions.size());
        for (int r = 1; r <= rounds; ++r) {
            const std::string& answer = book.anchor_history.at(r).answer;
            const auto verdict = grade(answer, p);
            regenerate[r].add(verdict);
            if (book.decisions[r - 1].verdict == Verdict::Select) {
                select[r].add(verdict);
            } else {
                reject[r].add(verdict);
                // What the rejected answer became after one more pass; the
                // final answer when no further round happened.
                const std::string& after = static_cast<int>(book.anchor_history.size()) > r + 1
                                               ? book.anchor_history.at(r + 1).answer
                                               : *book.final_answer;
                reflect[r].add(grade(after, p));
            }
        }
        all.add(grade(*book.final_answer, p));
    }

    StageMetrics metrics;
    metrics.stages.push_back(cot.stat("cot_infer"));
    for (int r = 1; r <= max_round; ++r) {
        const std::string suffix = "_" + std::to_string(r);
        metrics.stages.push_back(regenerate[r].stat("regenerate" + suffix));
        metrics.stages.push_back(select[r].stat("refine_select" + suffix));
        metrics.stages.push_back(reject[r].stat("refine_reject" + suffix));
        metrics.stages.push_back(reflect[r].stat("reflect" + suffix));
    }
    metrics.stages.push_back(all.stat("all"));
    return metrics;
}

double count_weighted_mean(const std::vector<std::pair<long long, double>>& parts) {
    long double weighted = 0.0L;
    long double total = 0.0L;
    for (const auto& [count, value] : parts) {
        weighted += static_cast<long double>(count) * static_cast<long double>(value);
        total += static_cast<long double>(count);
    }
    if (total <= 0.0L) throw Error("EmptyInput", "count-weighted mean over zero samples");
    return static_cast<double>(weighted / total);
}

std::string format_pct(double value) {
    const double rounded = std::round(value * 10.0) / 10.0;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", rounded);
    return buf;
}

namespace {

// cot_infer for the regenerate and all deltas, the same-round reject
// cohort for reflect deltas.
std::optional<std::string> delta_base(const std::string& stage) {
    if (stage.rfind("regenerate_", 0) == 0 || stage == "all") return std::string("cot_infer");
    if (stage.rfind("reflect_", 0) == 0) {
        return "refine_reject" + stage.substr(std::string("reflect").size());
    }
    return std::nullopt;
}

std::optional<double> delta_for(const StageMetrics& metrics, const StageStat& stat) {
    const auto base_name = delta_base(stat.stage);
    if (!base_name || !stat.accuracy_pct) return std::nullopt;
    const StageStat* base = metrics.find(*base_name);
    if (!base || !base->accuracy_pct) return std::nullopt;
    return *stat.accuracy_pct - *base->accuracy_pct;
}

std::string delta_markdown(double delta) {
    const bool up = delta >= 0.0;
    return std::string(up ? "+" : "-") + format_pct(std::fabs(delta)) + (up ? " ↑" : " ↓");
}

std::string delta_csv(double delta) {
    return std::string("(") + (delta >= 0.0 ? "+" : "-") + format_pct(std::fabs(delta)) + ")";
}

void require_nonempty(const StageMetrics& metrics) {
    if (metrics.stages.empty()) throw Error("IncompleteRun", "no stage metrics to report");
}

} // namespace

std::string report_markdown(const StageMetrics& metrics) {
    require_nonempty(metrics);
    std::string out = "# Accuracy by stage\n\n";
    out += "| Stage | Samples | Accuracy (%) | Delta |\n";
    out += "| --- | ---: | ---: | ---: |\n";
    for (const auto& s : metrics.stages) {
        out += "| " + s.stage + " | " + std::to_string(s.count) + " | ";
        out += s.accuracy_pct ? format_pct(*s.accuracy_pct) : std::string("n/a");
        out += " | ";
        if (const auto delta = delta_for(metrics, s)) out += delta_markdown(*delta);
        out += " |\n";
    }
    return out;
}

std::string report_csv(const StageMetrics& metrics) {
    require_nonempty(metrics);
    std::string out = "stage,count,correct,accuracy_pct,delta\n";
    for (const auto& s : metrics.stages) {
        out += s.stage + "," + std::to_string(s.count) + ",";
        if (s.correct) out += std::to_string(*s.correct);
        out += ",";
        if (s.accuracy_pct) out += double_str(*s.accuracy_pct);
        out += ",";
        if (const auto delta = delta_for(metrics, s)) out += delta_csv(*delta);
        out += "\n";
    }
    return out;
}

std::string report(const StageMetrics& metrics, const std::string& format) {
    if (format == "markdown" || format == "md") return report_markdown(metrics);
    if (format == "csv") return report_csv(metrics);
    if (format == "json") {
        require_nonempty(metrics);
        return dump_canonical(to_json(metrics));
    }
    throw ConfigError("format", "unknown report format '" + format + "'");
}

StageMetrics stage_metrics_from_csv(const std::string& csv) {
    StageMetrics metrics;
    bool header = true;
    int line_no = 0;
    for (const auto& line : split_lines(csv)) {
        ++line_no;
        if (trim(line).empty()) continue;
        if (header) {
            header = false;
            continue;
        }
        std::vector<std::string> cells;
        std::string cell;
        std::istringstream row(line);
        while (std::getline(row, cell, ',')) cells.push_back(cell);
        if (cells.size() < 4) throw SchemaError(line_no, "row", "expected at least 4 columns");
        StageStat s;
        s.stage = cells[0];
        try {
            s.count = std::stoll(cells[1]);
            if (!trim(cells[2]).empty()) s.correct = std::stoll(cells[2]);
            if (!trim(cells[3]).empty()) s.accuracy_pct = std::stod(cells[3]);
        } catch (const std::exception& e) {
            throw SchemaError(line_no, "row", e.what());
        }
        metrics.stages.push_back(std::move(s));
    }
    return metrics;
}

// ---------------------------------------------------------------------------
// Stochastic ensemble simulator

void SimConfig::validate() const {
    if (num_problems < 1) throw ConfigError("sim.num_problems", "must be at least 1");
    if (evidence_per_problem < 1) throw ConfigError("sim.evidence_per_problem", "must be at least 1");
    if (distractor_count < 0) throw ConfigError("sim.distractor_count", "must be non-negative");
    if (assistant_profiles.empty()) {
        throw ConfigError("sim.assistant_profiles", "at least one assistant profile is required");
    }
    if (seeds.empty()) throw ConfigError("sim.seeds", "at least one seed is required");
    if (max_rounds < 1) throw ConfigError("sim.max_rounds", "must be at least 1");
    if (parallelism < 1) throw ConfigError("sim.parallelism", "must be at least 1");
    anchor_profile.validate();
    for (const auto& p : assistant_profiles) p.validate();
    if (tau < Fraction{0, 1} || Fraction{1, 1} < tau) {
        throw ConfigError("sim.tau", "must be within [0, 1]");
    }
    if (conflict_threshold < Fraction{0, 1} || Fraction{1, 1} < conflict_threshold) {
        throw ConfigError("sim.conflict_threshold", "must be within [0, 1]");
    }
}

SimConfig default_sim_config() {
    SimConfig sim;
    sim.anchor_profile.p_ve = 0.85;
    sim.anchor_profile.p_traj = 0.95;
    // The anchor's perception failures are mostly misreads, so they surface
    // as cross-agent conflicts the refine gate can catch. Assistants fail
    // mostly by omission: an assistant that asserted wrong values would
    // indict correct anchor evidence and drown the reject pool in false
    // alarms.
    sim.anchor_profile.misread_share = 0.9;
    for (const double p_ve : {0.85, 0.75, 0.65}) {
        StochasticProfile prof;
        prof.p_ve = p_ve;
        prof.p_traj = 0.95;
        prof.misread_share = 0.1;
        sim.assistant_profiles.push_back(prof);
    }
    for (std::uint64_t s = 1; s <= 20; ++s) sim.seeds.push_back(s);
    return sim;
}

SimConfig sim_config_from_json(const json& j) {
    SimConfig sim = default_sim_config();
    if (j.contains("num_problems")) sim.num_problems = j.at("num_problems").get<int>();
    if (j.contains("evidence_per_problem")) {
        sim.evidence_per_problem = j.at("evidence_per_problem").get<int>();
    }
    if (j.contains("distractor_count")) sim.distractor_count = j.at("distractor_count").get<int>();
    if (j.contains("anchor_profile")) {
        sim.anchor_profile = stochastic_profile_from_json(j.at("anchor_profile"));
    }
    if (j.contains("assistant_profiles")) {
        sim.assistant_profiles.clear();
        for (const auto& p : j.at("assistant_profiles")) {
            sim.assistant_profiles.push_back(stochastic_profile_from_json(p));
        }
    }
    if (j.contains("seeds")) sim.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (j.contains("tau")) sim.tau = Fraction::from_decimal(j.at("tau").get<double>());
    if (j.contains("conflict_threshold")) {
        sim.conflict_threshold = Fraction::from_decimal(j.at("conflict_threshold").get<double>());
    }
    if (j.contains("max_rounds")) sim.max_rounds = j.at("max_rounds").get<int>();
    if (j.contains("parallelism")) sim.parallelism = j.at("parallelism").get<int>();
    if (j.contains("always_reflect_rejected")) {
        sim.always_reflect_rejected = j.at("always_reflect_rejected").get<bool>();
    }
    return sim;
}

json to_json(const SimConfig& sim) {
    json j;
    j["num_problems"] = sim.num_problems;
    j["evidence_per_problem"] = sim.evidence_per_problem;
    j["distractor_count"] = sim.distractor_count;
    j["anchor_profile"] = to_json(sim.anchor_profile);
    json profiles = json::array();
    for (const auto& p : sim.assistant_profiles) profiles.push_back(to_json(p));
    j["assistant_profiles"] = std::move(profiles);
    j["seeds"] = sim.seeds;
    j["tau"] = sim.tau.as_double();
    j["conflict_threshold"] = sim.conflict_threshold.as_double();
    j["max_rounds"] = sim.max_rounds;
    j["parallelism"] = sim.parallelism;
    j["always_reflect_rejected"] = sim.always_reflect_rejected;
    return j;
}

std::vector<Problem> synthetic_problems(const SimConfig& sim, std::uint64_t seed) {
    std::vector<Problem> problems;
    problems.reserve(static_cast<std::size_t>(sim.num_problems));
    for (int i = 1; i <= sim.num_problems; ++i) {
        char buf[48];
        std::snprintf(buf, sizeof buf, "s%llu-p%04d", static_cast<unsigned long long>(seed), i);
        problems.push_back(sim::make_problem(buf, sim.evidence_per_problem, sim.distractor_count));
    }
    return problems;
}

AgentRegistry sim_registry(const SimConfig& sim) {
    AgentRegistry registry;
    AgentSpec anchor;
    anchor.id = "anchor";
    anchor.backend = AgentSpec::Backend::stochastic;
    anchor.profile = sim.anchor_profile;
    registry.add(anchor);
    for (std::size_t i = 0; i < sim.assistant_profiles.size(); ++i) {
        AgentSpec assistant;
        assistant.id = "assist" + std::to_string(i + 1);
        assistant.backend = AgentSpec::Backend::stochastic;
        assistant.profile = sim.assistant_profiles[i];
        registry.add(assistant);
    }
    return registry;
}

PipelineConfig sim_pipeline_config(const SimConfig& sim, std::uint64_t seed) {
    PipelineConfig cfg;
    cfg.tau = sim.tau;
    cfg.conflict_threshold = sim.conflict_threshold;
    cfg.max_rounds = sim.max_rounds;
    cfg.parallelism = sim.parallelism;
    cfg.seed = seed;
    cfg.anchor = "anchor";
    for (std::size_t i = 0; i < sim.assistant_profiles.size(); ++i) {
        cfg.assistants.push_back("assist" + std::to_string(i + 1));
    }
    cfg.always_reflect_rejected = sim.always_reflect_rejected;
    return cfg;
}

SimSummary simulate_ensemble(const SimConfig& sim) {
    sim.validate();
    SimSummary summary;
    summary.config = sim;
    for (const std::uint64_t seed : sim.seeds) {
        std::vector<Problem> problems = synthetic_problems(sim, seed);
        Engine engine(problems, sim_pipeline_config(sim, seed), sim_registry(sim));
        const RunResult result = engine.run();
        SeedOutcome outcome;
        outcome.seed = seed;
        outcome.metrics = stage_metrics(problems, result.state.books);
        summary.per_seed.push_back(std::move(outcome));
    }
    return summary;
}

json summarize(const SimSummary& summary) {
    std::vector<std::string> stage_order;
    for (const auto& outcome : summary.per_seed) {
        for (const auto& s : outcome.metrics.stages) {
            if (std::find(stage_order.begin(), stage_order.end(), s.stage) == stage_order.end()) {
                stage_order.push_back(s.stage);
            }
        }
    }

    json stages = json::array();
    for (const auto& stage : stage_order) {
        double sum = 0.0;
        double lo = 0.0;
        double hi = 0.0;
        long long count_sum = 0;
        int graded_seeds = 0;
        int present_seeds = 0;
        for (const auto& outcome : summary.per_seed) {
            const StageStat* s = outcome.metrics.find(stage);
            if (!s) continue;
            ++present_seeds;
            count_sum += s->count;
            if (!s->accuracy_pct) continue;
            if (graded_seeds == 0) {
                lo = hi = *s->accuracy_pct;
            } else {
                lo = std::min(lo, *s->accuracy_pct);
                hi = std::max(hi, *s->accuracy_pct);
            }
            sum += *s->accuracy_pct;
            ++graded_seeds;
        }
        json row;
        row["stage"] = stage;
        row["seeds"] = present_seeds;
        row["mean_count"] = present_seeds > 0
                                ? json(static_cast<double>(count_sum) / present_seeds)
                                : json(nullptr);
        row["mean_accuracy_pct"] = graded_seeds > 0 ? json(sum / graded_seeds) : json(nullptr);
        row["min_accuracy_pct"] = graded_seeds > 0 ? json(lo) : json(nullptr);
        row["max_accuracy_pct"] = graded_seeds > 0 ? json(hi) : json(nullptr);
        stages.push_back(std::move(row));
    }

    json per_seed = json::array();
    for (const auto& outcome : summary.per_seed) {
        json row;
        row["seed"] = outcome.seed;
        row["metrics"] = to_json(outcome.metrics);
        per_seed.push_back(std::move(row));
    }

    json j;
    j["config"] = to_json(summary.config);
    j["stages"] = std::move(stages);
    j["per_seed"] = std::move(per_seed);
    return j;
}

} // namespace m3ace
