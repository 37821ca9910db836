#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <sys/wait.h>

#include "m3ace/core.hpp"
#include "m3ace/simmodel.hpp"

using namespace m3ace;
namespace fs = std::filesystem;

namespace {

struct CliResult {
    int exit_code = -1;
    std::string output; // stdout and stderr interleaved
};

CliResult run_cli(const std::string& args, const std::string& env_prefix = "") {
    const char* bin = std::getenv("M3ACE_CLI_PATH");
#ifdef M3ACE_CLI_PATH
    if (bin == nullptr) bin = M3ACE_CLI_PATH;
#endif
    REQUIRE_MESSAGE(bin != nullptr, "M3ACE_CLI_PATH must point at the built binary");
    const std::string cmd = env_prefix + std::string(bin) + " " + args + " 2>&1";
    FILE* pipe = ::popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    CliResult result;
    char buf[4096];
    std::size_t n = 0;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) result.output.append(buf, n);
    const int status = ::pclose(pipe);
    if (WIFEXITED(status)) result.exit_code = WEXITSTATUS(status);
    return result;
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / (tag + "-" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& path, const std::string& body) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out << body;
}

std::string slurp(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(bool(in));
    std::stringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::string structured_reply(int value, const std::string& answer) {
    return "VISUAL_EVIDENCE:\n1. measurement k1 reads " + std::to_string(value) +
           "\nANSWER: " + answer + "\n";
}

std::string fixture_line(const std::string& agent, int round, const std::string& text) {
    json j;
    j["problem_id"] = "p1";
    j["agent_id"] = agent;
    j["round"] = round;
    j["text"] = text;
    return j.dump() + "\n";
}

// A one-problem scripted workspace: the anchor is rejected once, then
// selected with answer B on the second refinement round.
struct ScriptedWorkspace {
    TempDir dir{"m3ace-cli"};
    fs::path config = dir.path / "config.json";
    fs::path dataset = dir.path / "dataset.jsonl";
    fs::path fixtures = dir.path / "fixtures.jsonl";

    ScriptedWorkspace() {
        std::string lines;
        lines += fixture_line("anchor", 0, structured_reply(10, "A"));
        lines += fixture_line("a1", 0, structured_reply(11, "B"));
        lines += fixture_line("a2", 0, structured_reply(11, "B"));
        lines += fixture_line("a3", 0, structured_reply(11, "C"));
        lines += fixture_line("anchor", 1, structured_reply(12, "D"));
        lines += fixture_line("anchor", 2, structured_reply(11, "B"));
        write_file(fixtures, lines);

        json pipeline;
        pipeline["tau"] = 1.0;
        pipeline["conflict_threshold"] = 0.2;
        pipeline["max_rounds"] = 3;
        pipeline["parallelism"] = 1;
        pipeline["seed"] = 7;
        pipeline["anchor"] = "anchor";
        pipeline["assistants"] = json::array({"a1", "a2", "a3"});
        json agents = json::array();
        for (const char* id : {"anchor", "a1", "a2", "a3"}) {
            json agent = {{"id", id}, {"backend", "scripted"}};
            // Names the env var an API-backed deployment would read; the
            // value itself must never surface in run artifacts.
            if (std::string(id) == "anchor") agent["api_key_env"] = "M3ACE_TEST_SECRET";
            agents.push_back(agent);
        }
        json cfg;
        cfg["pipeline"] = pipeline;
        cfg["agents"] = agents;
        cfg["fixtures"] = fixtures.string();
        write_file(config, cfg.dump(2) + "\n");

        json problem;
        problem["id"] = "p1";
        problem["question"] = "Which option matches the panel?";
        problem["image"] = "";
        problem["answer"] = "B";
        problem["choices"] = json::array({"A) one", "B) two", "C) three", "D) four"});
        problem["answer_kind"] = "multiple_choice";
        problem["sim_keys"] = json::array({"k1"});
        problem["sim_distractors"] = 3;
        write_file(dataset, problem.dump() + "\n");
    }

    std::string run_args(const std::string& out, const std::string& extra = "") const {
        return "run --config " + config.string() + " --dataset " + dataset.string() + " --out " +
               out + (extra.empty() ? "" : " " + extra);
    }
};

// A stochastic workspace over synthetic problems, for the diagnostics and
// simulation paths.
struct SimWorkspace {
    TempDir dir{"m3ace-cli-sim"};
    fs::path config = dir.path / "config.json";
    fs::path dataset = dir.path / "dataset.jsonl";

    SimWorkspace() {
        json profile;
        profile["p_ve"] = 0.6;
        profile["p_traj"] = 1.0;
        profile["misread_share"] = 1.0;
        json cfg;
        cfg["pipeline"] = {{"anchor", "anchor"}, {"assistants", json::array({"a1"})}, {"seed", 5}};
        cfg["agents"] = json::array({json{{"id", "anchor"}, {"backend", "stochastic"}, {"profile", profile}},
                                     json{{"id", "a1"}, {"backend", "stochastic"}, {"profile", profile}}});
        write_file(config, cfg.dump(2) + "\n");

        std::string lines;
        for (int i = 0; i < 8; ++i) {
            lines += to_json(sim::make_problem("cli-s" + std::to_string(i), 2, 2)).dump() + "\n";
        }
        write_file(dataset, lines);
    }

    std::string diagnose_args(const std::string& mode, const std::string& out) const {
        return "diagnose --config " + config.string() + " --dataset " + dataset.string() +
               " --mode " + mode + " --out " + out;
    }
};

} // namespace

TEST_CASE("run executes a dataset and refuses to clobber itself") {
    const ScriptedWorkspace ws;
    const std::string out = (ws.dir.path / "run1").string();

    // popen goes through sh, so a leading assignment sets the env var.
    const CliResult ok = run_cli(ws.run_args(out), "M3ACE_TEST_SECRET=hunter2-secret-value ");
    CHECK(ok.exit_code == 0);
    CHECK(ok.output.find("problems: 1") != std::string::npos);
    CHECK(ok.output.find("selected: 1") != std::string::npos);
    CHECK(ok.output.find("non_converged: 0") != std::string::npos);
    CHECK(ok.output.find("rounds: 2") != std::string::npos);
    CHECK(ok.output.find("artifacts: " + out) != std::string::npos);

    CHECK(fs::exists(fs::path(out) / "metrics.json"));
    CHECK(fs::exists(fs::path(out) / "report.md"));
    CHECK(fs::exists(fs::path(out) / "report.csv"));
    CHECK(fs::exists(fs::path(out) / "books" / "p1.json"));
    const json manifest = json::parse(slurp(fs::path(out) / "manifest.json"));
    CHECK_FALSE(manifest.at("finished_at").is_null());

    // The stored config names the key's env var but never its value; no
    // artifact in the run directory may leak the secret.
    const std::string stored_config = slurp(fs::path(out) / "config.json");
    CHECK(stored_config.find("M3ACE_TEST_SECRET") != std::string::npos);
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
        if (!entry.is_regular_file()) continue;
        INFO("artifact: ", entry.path().string());
        CHECK(slurp(entry.path()).find("hunter2-secret-value") == std::string::npos);
    }

    const CliResult clash = run_cli(ws.run_args(out));
    CHECK(clash.exit_code == 4);
    CHECK(clash.output.find("already holds a run") != std::string::npos);
}

TEST_CASE("run validates configuration and dataset up front") {
    const ScriptedWorkspace ws;

    const CliResult bad_tau =
        run_cli(ws.run_args((ws.dir.path / "r-tau").string(), "--set pipeline.tau=1.5"));
    CHECK(bad_tau.exit_code == 2);
    CHECK(bad_tau.output.find("'tau'") != std::string::npos);
    CHECK(bad_tau.output.find("3/2") != std::string::npos);
    CHECK_FALSE(fs::exists(ws.dir.path / "r-tau" / "state.json"));

    const CliResult no_dataset = run_cli("run --config " + ws.config.string() +
                                         " --dataset /nonexistent.jsonl --out " +
                                         (ws.dir.path / "r-ds").string());
    CHECK(no_dataset.exit_code == 3);
    CHECK(no_dataset.output.find("cannot open") != std::string::npos);

    const CliResult no_config = run_cli("run --config /nonexistent.json --dataset " +
                                        ws.dataset.string() + " --out " +
                                        (ws.dir.path / "r-cfg").string());
    CHECK(no_config.exit_code == 2);

    const CliResult bad_set =
        run_cli(ws.run_args((ws.dir.path / "r-set").string(), "--set nonsense"));
    CHECK(bad_set.exit_code == 2);
    CHECK(bad_set.output.find("key=value") != std::string::npos);
}

TEST_CASE("seed and parallelism flags override the stored pipeline config") {
    const ScriptedWorkspace ws;
    const std::string out = (ws.dir.path / "run-flags").string();
    const CliResult r = run_cli(ws.run_args(out, "--seed 123 --parallelism 2"));
    CHECK(r.exit_code == 0);
    const json stored = json::parse(slurp(fs::path(out) / "config.json"));
    CHECK(stored.at("pipeline").at("seed") == 123);
    CHECK(stored.at("pipeline").at("parallelism") == 2);
}

TEST_CASE("resume continues or revalidates a run directory") {
    const ScriptedWorkspace ws;
    const std::string out = (ws.dir.path / "run-resume").string();
    REQUIRE(run_cli(ws.run_args(out)).exit_code == 0);

    // A completed run resumes as a no-op even with the fixtures gone.
    write_file(ws.fixtures, "");
    const CliResult resumed = run_cli("resume --run " + out);
    CHECK(resumed.exit_code == 0);
    CHECK(resumed.output.find("selected: 1") != std::string::npos);

    const CliResult missing = run_cli("resume --run " + (ws.dir.path / "nowhere").string());
    CHECK(missing.exit_code == 4);
    CHECK(missing.output.find("does not exist") != std::string::npos);
}

TEST_CASE("report regenerates stage tables from stored books") {
    const ScriptedWorkspace ws;
    const std::string out = (ws.dir.path / "run-report").string();
    REQUIRE(run_cli(ws.run_args(out)).exit_code == 0);

    const CliResult md = run_cli("report --run " + out);
    CHECK(md.exit_code == 0);
    CHECK(md.output.find("# Accuracy by stage") != std::string::npos);
    CHECK(md.output.find("| all | 1 | 100.0 |") != std::string::npos);

    const CliResult csv = run_cli("report --run " + out + " --format csv");
    CHECK(csv.exit_code == 0);
    CHECK(csv.output.find("stage,count,correct,accuracy_pct,delta") != std::string::npos);

    const CliResult as_json = run_cli("report --run " + out + " --format json");
    CHECK(as_json.exit_code == 0);
    const json parsed_report = json::parse(as_json.output, nullptr, false);
    CHECK(!parsed_report.is_discarded());
    CHECK(parsed_report.contains("stages"));

    const CliResult bad_format = run_cli("report --run " + out + " --format pdf");
    CHECK(bad_format.exit_code == 2);

    write_file(fs::path(out) / "books" / "p1.json", "{oops");
    const CliResult corrupt = run_cli("report --run " + out);
    CHECK(corrupt.exit_code == 4);
    CHECK(corrupt.output.find("p1.json") != std::string::npos);
}

TEST_CASE("diagnose runs decoupled, supervised, and reflection probes") {
    const SimWorkspace ws;

    const std::string dec_out = (ws.dir.path / "diag-dec").string();
    const CliResult dec = run_cli(ws.diagnose_args("decouple", dec_out));
    CHECK(dec.exit_code == 0);
    CHECK(dec.output.find("# Component accuracy by outcome") != std::string::npos);
    CHECK(slurp(fs::path(dec_out) / "diagnostics.csv")
              .find("outcome,count,count_pct") != std::string::npos);
    CHECK(slurp(fs::path(dec_out) / "diagnostics_report.md")
              .find("| All | 8 (100.0%)") != std::string::npos);

    const std::string sup_out = (ws.dir.path / "diag-sup").string();
    const CliResult sup = run_cli(ws.diagnose_args("supervise:gt_ve", sup_out));
    CHECK(sup.exit_code == 0);
    CHECK(sup.output.find("# Diagnostics (supervise:gt_ve)") != std::string::npos);
    CHECK(sup.output.find("Correction rate") != std::string::npos);
    CHECK(slurp(fs::path(sup_out) / "diagnostics.csv").find("gt_ve,") != std::string::npos);

    const std::string refl_out = (ws.dir.path / "diag-refl").string();
    const CliResult refl = run_cli(ws.diagnose_args("reflect:answer", refl_out));
    CHECK(refl.exit_code == 0);
    CHECK(refl.output.find("| reflect:answer |") != std::string::npos);

    const CliResult bad_mode = run_cli(ws.diagnose_args("nope", (ws.dir.path / "diag-bad").string()));
    CHECK(bad_mode.exit_code == 2);
    CHECK(bad_mode.output.find("not one of") != std::string::npos);
}

TEST_CASE("diagnose fails honestly when inputs cannot support the probe") {
    // gt_ve supervision needs reference evidence on every problem.
    const ScriptedWorkspace scripted;
    const CliResult no_gt = run_cli("diagnose --config " + scripted.config.string() +
                                    " --dataset " + scripted.dataset.string() +
                                    " --mode supervise:gt_ve --out " +
                                    (scripted.dir.path / "diag-gt").string());
    CHECK(no_gt.exit_code == 3);
    CHECK(no_gt.output.find("gt_evidence") != std::string::npos);

    // The scripted round-0 reply has no trajectory block, so the decoupled
    // probe parses nothing and says so instead of fabricating a table.
    const CliResult unparsed = run_cli("diagnose --config " + scripted.config.string() +
                                       " --dataset " + scripted.dataset.string() +
                                       " --mode decouple --out " +
                                       (scripted.dir.path / "diag-none").string());
    CHECK(unparsed.exit_code == 3);
    CHECK(unparsed.output.find("no record parsed") != std::string::npos);
}

TEST_CASE("simulate writes seed-addressed artifacts deterministically") {
    const TempDir dir("m3ace-cli-simulate");
    const std::string overrides = "--set num_problems=20 --set 'seeds=[2,3]' --set max_rounds=2";

    const std::string out1 = (dir.path / "sim1").string();
    const CliResult first = run_cli("simulate " + overrides + " --out " + out1);
    CHECK(first.exit_code == 0);
    CHECK(first.output.find("# Simulation summary") != std::string::npos);
    CHECK(first.output.find("cot_infer") != std::string::npos);
    for (const char* name :
         {"sim_manifest.json", "summary.json", "summary.md", "metrics_seed_2.json",
          "metrics_seed_3.json"}) {
        CHECK(fs::exists(fs::path(out1) / name));
    }
    const json manifest = json::parse(slurp(fs::path(out1) / "sim_manifest.json"));
    CHECK(manifest.at("num_problems") == 20);
    CHECK(manifest.at("seeds") == json::array({2, 3}));

    const std::string out2 = (dir.path / "sim2").string();
    REQUIRE(run_cli("simulate " + overrides + " --out " + out2).exit_code == 0);
    for (const char* name : {"summary.json", "summary.md", "metrics_seed_2.json"}) {
        CHECK(slurp(fs::path(out1) / name) == slurp(fs::path(out2) / name));
    }

    const CliResult no_seeds = run_cli("simulate --set 'seeds=[]'");
    CHECK(no_seeds.exit_code == 2);
    CHECK(no_seeds.output.find("sim.seeds") != std::string::npos);

    // A config file works as the base layer for overrides.
    const fs::path cfg = dir.path / "sim.json";
    write_file(cfg, R"({"num_problems":10,"seeds":[4],"max_rounds":2})" "\n");
    const CliResult from_file = run_cli("simulate --config " + cfg.string());
    CHECK(from_file.exit_code == 0);
}

TEST_CASE("argument errors and help use conventional exit codes") {
    CHECK(run_cli("--help").exit_code == 0);
    CHECK(run_cli("run --help").exit_code == 0);
    CHECK(run_cli("").exit_code == 2);             // a subcommand is required
    CHECK(run_cli("frobnicate").exit_code == 2);   // unknown subcommand
    CHECK(run_cli("run").exit_code == 2);          // missing required options
    CHECK(run_cli("report").exit_code == 2);
}
