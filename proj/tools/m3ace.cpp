#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "m3ace/diagnostics.hpp"
#include "m3ace/harness.hpp"
#include "m3ace/pipeline.hpp"
#include "m3ace/strings.hpp"

namespace fs = std::filesystem;
using m3ace::json;

namespace {

struct GlobalFlags {
    std::optional<std::uint64_t> seed;
    std::optional<int> parallelism;
    std::vector<std::string> sets;
};

json load_config_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw m3ace::ConfigError("config", "cannot open " + path);
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw m3ace::ConfigError("config", path + " is not valid JSON: " + e.what());
    }
}

// --set a.b.c=value, parsed as JSON when possible, else kept as a string.
void apply_set(json& config, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw m3ace::ConfigError("--set", "expected key=value, got '" + assignment + "'");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string value_text = assignment.substr(eq + 1);
    json value;
    try {
        value = json::parse(value_text);
    } catch (const json::exception&) {
        value = value_text;
    }
    json* node = &config;
    std::string key;
    std::istringstream parts(path);
    std::vector<std::string> keys;
    while (std::getline(parts, key, '.')) keys.push_back(key);
    if (keys.empty()) throw m3ace::ConfigError("--set", "empty key in '" + assignment + "'");
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->contains(keys[i]) || !(*node)[keys[i]].is_object()) (*node)[keys[i]] = json::object();
        node = &(*node)[keys[i]];
    }
    (*node)[keys.back()] = std::move(value);
}

void apply_pipeline_overrides(json& config, const GlobalFlags& flags) {
    for (const auto& assignment : flags.sets) apply_set(config, assignment);
    if (flags.seed || flags.parallelism) {
        if (!config.contains("pipeline") || !config["pipeline"].is_object()) {
            config["pipeline"] = json::object();
        }
        if (flags.seed) config["pipeline"]["seed"] = *flags.seed;
        if (flags.parallelism) config["pipeline"]["parallelism"] = *flags.parallelism;
    }
}

void apply_sim_overrides(json& config, const GlobalFlags& flags) {
    for (const auto& assignment : flags.sets) apply_set(config, assignment);
    if (flags.seed) config["seeds"] = json::array({*flags.seed});
    if (flags.parallelism) config["parallelism"] = *flags.parallelism;
}

// Fixture and prompt paths are resolved against the caller's cwd once, so
// the stored config keeps working when the run is resumed from elsewhere.
void absolutize_paths(json& config) {
    for (const char* key : {"fixtures", "prompts_dir"}) {
        if (config.contains(key) && config[key].is_string()) {
            config[key] = fs::absolute(config[key].get<std::string>()).string();
        }
    }
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw m3ace::Error("IoError", "cannot write " + path.string());
    out << content;
}

void print_run_summary(const m3ace::RunResult& result, const std::string& run_dir) {
    std::cout << "problems: " << result.state.books.size() << "\n";
    std::cout << "selected: " << result.state.selected.size() << "\n";
    std::cout << "non_converged: " << result.state.non_converged.size() << "\n";
    std::cout << "rounds: " << result.state.round << "\n";
    if (!run_dir.empty()) std::cout << "artifacts: " << run_dir << "\n";
}

int cmd_run(const std::string& config_path, const std::string& dataset_path,
            const std::string& out_dir, const GlobalFlags& flags) {
    json config = load_config_file(config_path);
    apply_pipeline_overrides(config, flags);
    absolutize_paths(config);
    std::vector<m3ace::Problem> problems = m3ace::load_dataset(dataset_path);

    if (fs::exists(fs::path(out_dir) / "state.json")) {
        throw m3ace::Error("RunExists",
                           out_dir + " already holds a run; use `resume` to continue it");
    }
    m3ace::Engine engine = m3ace::engine_from_config(config, std::move(problems));
    engine.enable_persistence(out_dir, config);
    const m3ace::RunResult result = engine.run();
    print_run_summary(result, out_dir);
    return 0;
}

int cmd_resume(const std::string& run_dir) {
    m3ace::ResumedRun resumed = m3ace::resume_run(run_dir);
    const m3ace::RunResult result = resumed.engine.complete(std::move(resumed.state));
    print_run_summary(result, run_dir);
    return 0;
}

int cmd_report(const std::string& run_dir, const std::string& format) {
    const m3ace::PipelineState state = m3ace::resume(run_dir);
    const std::vector<m3ace::Problem> problems = m3ace::run_problems(run_dir);

    // A mid-run directory is reported over its finalized books only.
    std::vector<m3ace::Problem> finalized;
    for (const auto& p : problems) {
        const auto it = state.books.find(p.id);
        if (it != state.books.end() && it->second.final_answer) finalized.push_back(p);
    }
    if (finalized.empty()) {
        throw m3ace::Error("IncompleteRun", run_dir + " holds no finalized books to report on");
    }
    const m3ace::StageMetrics metrics = m3ace::stage_metrics(finalized, state.books);
    std::cout << m3ace::report(metrics, format);
    return 0;
}

std::string diagnostics_markdown_header(const std::string& mode) {
    return "# Diagnostics (" + mode + ")\n\n";
}

int cmd_diagnose(const std::string& config_path, const std::string& dataset_path,
                 const std::string& mode, const std::string& out_dir, const GlobalFlags& flags) {
    json config = load_config_file(config_path);
    apply_pipeline_overrides(config, flags);
    absolutize_paths(config);
    std::vector<m3ace::Problem> problems = m3ace::load_dataset(dataset_path);
    if (problems.empty()) throw m3ace::Error("NoProblems", "dataset " + dataset_path + " is empty");

    m3ace::Engine engine = m3ace::engine_from_config(config, problems);
    const std::string& agent_id = engine.config().anchor;
    const std::uint64_t seed = engine.config().seed;

    fs::create_directories(out_dir);
    std::string report_md;
    std::string report_csv;

    if (mode == "decouple") {
        std::vector<m3ace::DecoupledRecord> records;
        long long unparsed = 0;
        for (const auto& problem : problems) {
            try {
                m3ace::DecoupledRecord record =
                    m3ace::decoupled_solve(problem, engine.registry(), agent_id, engine.prompts(), seed);
                m3ace::ComponentGrader grader;
                if (!problem.is_simulated() && !problem.gt_evidence.empty()) {
                    const m3ace::EvidenceMatcher matcher = engine.matcher_for(problem, 0);
                    if (matcher.kind == m3ace::EvidenceMatcher::Kind::judge) {
                        grader.evidence = [&matcher](const std::string& statement,
                                                     const m3ace::Problem& p) {
                            m3ace::EvidenceItem candidate;
                            candidate.statement = statement;
                            for (const auto& reference : p.gt_evidence) {
                                m3ace::EvidenceItem truth;
                                truth.statement = reference;
                                if (matcher.classify(candidate, truth).label ==
                                    m3ace::PairLabel::supports) {
                                    return true;
                                }
                            }
                            return false;
                        };
                    }
                }
                records.push_back(m3ace::grade_components(std::move(record), problem, grader));
            } catch (const m3ace::ParseFailure&) {
                ++unparsed;
            }
        }
        if (records.empty()) throw m3ace::Error("EmptyInput", "no record parsed; nothing to tabulate");
        const m3ace::ContingencyTable table = m3ace::contingency_table(records);
        report_md = m3ace::format_contingency_markdown(table);
        if (unparsed > 0) {
            report_md += "\nUnparsed responses excluded: " + std::to_string(unparsed) + "\n";
        }
        report_csv = m3ace::format_contingency_csv(table);
    } else if (mode.rfind("supervise:", 0) == 0) {
        const m3ace::SupervisionMode sup_mode =
            m3ace::supervision_mode_from_string(mode.substr(std::string("supervise:").size()));
        if (sup_mode == m3ace::SupervisionMode::gt_ve) {
            for (std::size_t i = 0; i < problems.size(); ++i) {
                if (problems[i].gt_evidence.empty()) {
                    throw m3ace::SchemaError(static_cast<int>(i + 1), "gt_evidence",
                                             "problem '" + problems[i].id +
                                                 "' lacks gt_evidence required by supervise:gt_ve");
                }
            }
        }
        const m3ace::SupervisionSweep sweep = m3ace::supervision_sweep(
            problems, engine.registry(), agent_id, sup_mode, engine.prompts(), seed);
        const std::string rate =
            sweep.failed > 0
                ? m3ace::format_pct(100.0 * static_cast<double>(sweep.corrected) /
                                    static_cast<double>(sweep.failed))
                : std::string("n/a");
        report_md = diagnostics_markdown_header(mode);
        report_md += "| Mode | Graded | Failed round 0 | Corrected | Correction rate (%) |\n";
        report_md += "| --- | ---: | ---: | ---: | ---: |\n";
        report_md += "| " + to_string(sweep.mode) + " | " + std::to_string(sweep.total) + " | " +
                     std::to_string(sweep.failed) + " | " + std::to_string(sweep.corrected) + " | " +
                     rate + " |\n";
        report_csv = "mode,total,failed,corrected,correction_pct\n";
        report_csv += to_string(sweep.mode) + "," + std::to_string(sweep.total) + "," +
                      std::to_string(sweep.failed) + "," + std::to_string(sweep.corrected) + "," +
                      (sweep.failed > 0 ? rate : std::string{}) + "\n";
    } else if (mode == "reflect:answer" || mode == "reflect:ve") {
        const m3ace::PromptMode reflect_mode = mode == "reflect:answer"
                                                   ? m3ace::PromptMode::reflect_on_answer
                                                   : m3ace::PromptMode::reflect_on_ve;
        const m3ace::ReflectionSweep sweep = m3ace::reflection_sweep(
            problems, engine.registry(), agent_id, reflect_mode, engine.prompts(), seed);
        report_md = diagnostics_markdown_header(mode);
        report_md += "| Mode | Graded | Correct before | Correct after | Changed answers |\n";
        report_md += "| --- | ---: | ---: | ---: | ---: |\n";
        report_md += "| " + mode + " | " + std::to_string(sweep.total) + " | " +
                     std::to_string(sweep.correct_before) + " | " +
                     std::to_string(sweep.correct_after) + " | " +
                     std::to_string(sweep.changed_answers) + " |\n";
        report_csv = "mode,total,correct_before,correct_after,changed_answers\n";
        report_csv += mode + "," + std::to_string(sweep.total) + "," +
                      std::to_string(sweep.correct_before) + "," +
                      std::to_string(sweep.correct_after) + "," +
                      std::to_string(sweep.changed_answers) + "\n";
    } else {
        throw m3ace::ConfigError(
            "mode", "'" + mode +
                        "' is not one of decouple, supervise:<gt_judge|gt_judge_plus_answer|gt_ve>, "
                        "reflect:<answer|ve>");
    }

    write_text(fs::path(out_dir) / "diagnostics_report.md", report_md);
    write_text(fs::path(out_dir) / "diagnostics.csv", report_csv);
    std::cout << report_md;
    return 0;
}

int cmd_simulate(const std::string& config_path, const std::string& out_dir,
                 const GlobalFlags& flags) {
    json config_json = config_path.empty() ? json::object() : load_config_file(config_path);
    apply_sim_overrides(config_json, flags);
    const m3ace::SimConfig sim = m3ace::sim_config_from_json(config_json);
    sim.validate();

    const m3ace::SimSummary summary = m3ace::simulate_ensemble(sim);
    const json digest = m3ace::summarize(summary);

    std::string md = "# Simulation summary\n\n";
    md += "| Stage | Seeds | Mean count | Mean acc (%) | Min | Max |\n";
    md += "| --- | ---: | ---: | ---: | ---: | ---: |\n";
    for (const auto& row : digest.at("stages")) {
        md += "| " + row.at("stage").get<std::string>() + " | " +
              std::to_string(row.at("seeds").get<int>()) + " | ";
        md += row.at("mean_count").is_null()
                  ? std::string("n/a")
                  : m3ace::format_pct(row.at("mean_count").get<double>());
        for (const char* key : {"mean_accuracy_pct", "min_accuracy_pct", "max_accuracy_pct"}) {
            md += " | ";
            md += row.at(key).is_null() ? std::string("n/a")
                                        : m3ace::format_pct(row.at(key).get<double>());
        }
        md += " |\n";
    }

    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        write_text(fs::path(out_dir) / "sim_manifest.json", m3ace::dump_canonical(to_json(sim)));
        write_text(fs::path(out_dir) / "summary.json", m3ace::dump_canonical(digest));
        write_text(fs::path(out_dir) / "summary.md", md);
        for (const auto& outcome : summary.per_seed) {
            write_text(fs::path(out_dir) / ("metrics_seed_" + std::to_string(outcome.seed) + ".json"),
                       m3ace::dump_canonical(to_json(outcome.metrics)));
        }
    }
    std::cout << md;
    return 0;
}

int exit_code_for(const m3ace::Error& e) {
    const std::string& code = e.code();
    if (code == "ConfigError" || code == "MissingExtras" || code == "JudgeRequired" ||
        code == "JudgeUnavailable") {
        return 2;
    }
    if (code == "SchemaError" || code == "NoProblems" || code == "EmptyInput") return 3;
    return 4; // CorruptRun, IncompleteRun, Transport, and everything unrecoverable
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Multi-agent context engineering pipeline"};
    app.require_subcommand(1);
    app.fallthrough();

    GlobalFlags flags;
    std::uint64_t seed_value = 0;
    int parallelism_value = 0;
    auto* seed_opt = app.add_option("--seed", seed_value, "Override the run seed");
    auto* par_opt =
        app.add_option("--parallelism", parallelism_value, "Override worker thread count");
    app.add_option("--set", flags.sets, "Override a config leaf, e.g. --set pipeline.tau=0.8");

    std::string config_path, dataset_path, out_dir, run_dir, mode;
    std::string format = "markdown";

    CLI::App* run = app.add_subcommand("run", "Execute the pipeline over a dataset");
    run->add_option("--config", config_path, "Pipeline + agents JSON config")->required();
    run->add_option("--dataset", dataset_path, "JSONL benchmark file")->required();
    run->add_option("--out", out_dir, "Run directory to create")->required();

    CLI::App* resume = app.add_subcommand("resume", "Continue an interrupted run");
    resume->add_option("--run", run_dir, "Run directory")->required();

    CLI::App* diagnose = app.add_subcommand("diagnose", "Run a diagnostic probe over a dataset");
    diagnose->add_option("--config", config_path, "Pipeline + agents JSON config")->required();
    diagnose->add_option("--dataset", dataset_path, "JSONL benchmark file")->required();
    diagnose->add_option("--mode", mode, "decouple | supervise:<m> | reflect:<answer|ve>")->required();
    diagnose->add_option("--out", out_dir, "Directory for diagnostics artifacts")->required();

    CLI::App* simulate = app.add_subcommand("simulate", "Run the stochastic ensemble simulator");
    simulate->add_option("--config", config_path, "SimConfig JSON (defaults when omitted)");
    simulate->add_option("--out", out_dir, "Directory for simulator artifacts");

    CLI::App* report = app.add_subcommand("report", "Regenerate reports from a run directory");
    report->add_option("--run", run_dir, "Run directory")->required();
    report->add_option("--format", format, "markdown | csv | json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (seed_opt->count() > 0) flags.seed = seed_value;
    if (par_opt->count() > 0) flags.parallelism = parallelism_value;

    try {
        if (run->parsed()) return cmd_run(config_path, dataset_path, out_dir, flags);
        if (resume->parsed()) return cmd_resume(run_dir);
        if (diagnose->parsed()) return cmd_diagnose(config_path, dataset_path, mode, out_dir, flags);
        if (simulate->parsed()) return cmd_simulate(config_path, out_dir, flags);
        if (report->parsed()) return cmd_report(run_dir, format);
    } catch (const m3ace::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return exit_code_for(e);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
