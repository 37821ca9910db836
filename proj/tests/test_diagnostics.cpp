#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <memory>
#include <string>
#include <vector>

#include "m3ace/diagnostics.hpp"
#include "m3ace/rng.hpp"
#include "m3ace/simmodel.hpp"

using namespace m3ace;

namespace {

AgentRegistry probe_registry(const StochasticProfile& profile) {
    AgentRegistry registry;
    AgentSpec spec;
    spec.id = "probe";
    spec.backend = AgentSpec::Backend::stochastic;
    spec.profile = profile;
    registry.add(spec);
    return registry;
}

StochasticProfile misread_profile(double p_ve) {
    StochasticProfile prof;
    prof.p_ve = p_ve;
    prof.p_traj = 1.0;
    // Failures assert a concrete wrong value instead of omitting the key,
    // so a failed probe still reports every key.
    prof.misread_share = 1.0;
    return prof;
}

std::vector<Problem> sweep_problems(int n) {
    std::vector<Problem> problems;
    for (int i = 0; i < n; ++i) {
        problems.push_back(sim::make_problem("sw-p" + std::to_string(i), 3, 3));
    }
    return problems;
}

DecoupledRecord graded(bool ans, bool traj, bool ve, const std::string& pid = "r") {
    DecoupledRecord r;
    r.problem_id = pid;
    r.ans_correct = ans;
    r.traj_correct = traj;
    r.ve_correct = ve;
    return r;
}

// The fixture behind the published component split: 304 probes, 208 with a
// correct answer (205 valid trajectories, 170 fully correct evidence) and
// 96 failures (67 valid trajectories, 12 correct evidence).
std::vector<DecoupledRecord> component_fixture() {
    std::vector<DecoupledRecord> records;
    for (int i = 0; i < 208; ++i) records.push_back(graded(true, i < 205, i < 170));
    for (int i = 0; i < 96; ++i) records.push_back(graded(false, i < 67, i < 12));
    return records;
}

} // namespace

TEST_CASE("a decoupled probe is a single ungroomed invocation") {
    const Problem problem = sim::make_problem("d1", 3, 2);

    SUBCASE("perfect perception grades perfectly") {
        StochasticProfile perfect;
        perfect.p_ve = 1.0;
        perfect.p_traj = 1.0;
        const AgentRegistry registry = probe_registry(perfect);
        DecoupledRecord record =
            decoupled_solve(problem, registry, "probe", PromptLibrary::defaults(), 11);
        CHECK(record.problem_id == "d1");
        CHECK(record.response.round == 0);
        CHECK(record.response.agent == "probe");
        REQUIRE(record.response.trajectory.has_value());
        CHECK_FALSE(record.response.trajectory->empty());
        CHECK(record.response.evidence.size() == 3);
        for (const auto& item : record.response.evidence) {
            CHECK(item.polarity == Polarity::correct);
            CHECK(item.source_agent == "probe");
        }
        record = grade_components(std::move(record), problem);
        CHECK(record.ans_correct == std::optional<bool>(true));
        CHECK(record.traj_correct == std::optional<bool>(true));
        CHECK(record.ve_correct == std::optional<bool>(true));
    }

    SUBCASE("broken perception and reasoning grade as failures") {
        StochasticProfile broken = misread_profile(0.0);
        broken.p_traj = 0.0;
        const AgentRegistry registry = probe_registry(broken);
        DecoupledRecord record =
            decoupled_solve(problem, registry, "probe", PromptLibrary::defaults(), 11);
        record = grade_components(std::move(record), problem);
        CHECK(record.ve_correct == std::optional<bool>(false));
        CHECK(record.traj_correct == std::optional<bool>(false));
        CHECK(record.ans_correct == std::optional<bool>(false));
        CHECK(*record.response.trajectory != sim::correct_trajectory(problem));
    }

    SUBCASE("a malformed reply raises instead of being re-prompted") {
        auto store = std::make_shared<ScriptedStore>();
        ScriptedStore::Entry bad;
        bad.problem_id = "d1";
        bad.agent_id = "probe";
        bad.round = 0;
        bad.text = "no structure here";
        store->add(bad);
        ScriptedStore::Entry good = bad;
        good.text = "VISUAL_EVIDENCE:\n1. measurement k1 reads 10\nTRAJECTORY:\n1. read the "
                    "gauges\nANSWER: 30\n";
        store->add(good);

        AgentRegistry registry;
        AgentSpec spec;
        spec.id = "probe";
        spec.backend = AgentSpec::Backend::scripted;
        registry.add(spec);
        registry.attach_fixtures(store);

        CHECK_THROWS_AS(decoupled_solve(problem, registry, "probe", PromptLibrary::defaults(), 0),
                        ParseFailure);
        // Only one fixture was consumed: the probe did not retry.
        CHECK(store->pop("d1", "probe", 0) == good.text);
    }
}

TEST_CASE("component grading falls back from metadata to reference oracles") {
    Problem live;
    live.id = "q1";
    live.question = "total?";
    live.answer_kind = AnswerKind::numeric;
    live.ground_truth = "30";
    live.gt_evidence = {"gauge a reads 10", "gauge b reads 20"};

    DecoupledRecord record;
    record.problem_id = "q1";
    record.response.answer = "30";
    record.response.trajectory = std::vector<std::string>{"add both gauges"};
    EvidenceItem item;
    item.index = 1;
    item.statement = "gauge a reads 10";
    record.response.evidence.push_back(item);
    item.index = 2;
    item.statement = "gauge b reads 20";
    record.response.evidence.push_back(item);

    ComponentGrader grader;
    grader.evidence = [](const std::string& statement, const Problem& p) {
        for (const auto& ref : p.gt_evidence) {
            if (ref == statement) return true;
        }
        return false;
    };
    grader.trajectory = [](const std::vector<std::string>& steps, const Problem&) {
        return !steps.empty();
    };

    const DecoupledRecord ok = grade_components(record, live, grader);
    CHECK(ok.ans_correct == std::optional<bool>(true));
    CHECK(ok.ve_correct == std::optional<bool>(true));
    CHECK(ok.traj_correct == std::optional<bool>(true));

    DecoupledRecord off = record;
    off.response.evidence[1].statement = "gauge b reads 21";
    CHECK(grade_components(off, live, grader).ve_correct == std::optional<bool>(false));

    SUBCASE("polarity metadata wins over the oracle") {
        DecoupledRecord annotated = record;
        for (auto& e : annotated.response.evidence) e.polarity = Polarity::correct;
        annotated.response.evidence[0].polarity = Polarity::corrupted;
        ComponentGrader traj_only;
        traj_only.trajectory = grader.trajectory;
        const DecoupledRecord g = grade_components(annotated, live, traj_only);
        CHECK(g.ve_correct == std::optional<bool>(false)); // no evidence oracle consulted
        CHECK(g.traj_correct == std::optional<bool>(true));
    }

    SUBCASE("ungradable inputs are reported, not guessed") {
        try {
            grade_components(record, live, {}); // no metadata, no evidence oracle
            FAIL("expected UngradableVE");
        } catch (const Error& e) {
            CHECK(e.code() == "UngradableVE");
        }

        Problem bare = live;
        bare.gt_evidence.clear();
        CHECK_THROWS_AS(grade_components(record, bare, grader), Error);

        DecoupledRecord no_traj = record;
        no_traj.response.trajectory.reset();
        try {
            grade_components(no_traj, live, grader);
            FAIL("expected UngradableVE");
        } catch (const Error& e) {
            CHECK(e.code() == "UngradableVE");
            CHECK(std::string(e.what()).find("trajectory") != std::string::npos);
        }

        ComponentGrader no_traj_oracle = grader;
        no_traj_oracle.trajectory = nullptr;
        CHECK_THROWS_AS(grade_components(record, live, no_traj_oracle), Error);

        Problem nogt = live;
        nogt.ground_truth.reset();
        try {
            grade_components(record, nogt, grader);
            FAIL("expected IncompleteRun");
        } catch (const Error& e) {
            CHECK(e.code() == "IncompleteRun");
        }
    }
}

TEST_CASE("the contingency table reproduces the component split") {
    const ContingencyTable table = contingency_table(component_fixture());
    CHECK(table.total == 304);
    CHECK(table.success.count == 208);
    CHECK(table.success.traj_correct == 205);
    CHECK(table.success.ve_correct == 170);
    CHECK(table.failed.count == 96);
    CHECK(table.failed.traj_correct == 67);
    CHECK(table.failed.ve_correct == 12);
    CHECK(table.all.traj_correct == 272);
    CHECK(table.all.ve_correct == 182);

    const std::string md = format_contingency_markdown(table);
    CHECK(md.find("| Outcome | Samples | Trajectory correct | Evidence correct |") !=
          std::string::npos);
    CHECK(md.find("| Answer correct | 208 (68.4%) | 205 (98.6%) | 170 (81.7%) |") !=
          std::string::npos);
    CHECK(md.find("| Answer wrong | 96 (31.6%) | 67 (69.8%) | 12 (12.5%) |") != std::string::npos);
    CHECK(md.find("| All | 304 (100.0%) | 272 (89.5%) | 182 (59.9%) |") != std::string::npos);

    const std::string csv = format_contingency_csv(table);
    CHECK(csv.find("outcome,count,count_pct,traj_correct,traj_pct,ve_correct,ve_pct") == 0);
    CHECK(csv.find("answer_correct,208,68.4,205,98.6,170,81.7") != std::string::npos);
    CHECK(csv.find("answer_wrong,96,31.6,67,69.8,12,12.5") != std::string::npos);
    CHECK(csv.find("all,304,100.0,272,89.5,182,59.9") != std::string::npos);

    SUBCASE("degenerate tables render without dividing by zero") {
        const ContingencyTable solo = contingency_table({graded(true, true, true)});
        CHECK(solo.failed.count == 0);
        const std::string text = format_contingency_markdown(solo);
        CHECK(text.find("| Answer wrong | 0 (0.0%) | 0 (n/a) | 0 (n/a) |") != std::string::npos);
    }

    SUBCASE("ungraded or empty inputs are rejected") {
        try {
            contingency_table({});
            FAIL("expected EmptyInput");
        } catch (const Error& e) {
            CHECK(e.code() == "EmptyInput");
        }
        DecoupledRecord partial = graded(true, true, true, "p7");
        partial.ve_correct.reset();
        try {
            contingency_table({partial});
            FAIL("expected UngradedRecord");
        } catch (const Error& e) {
            CHECK(e.code() == "UngradedRecord");
            CHECK(std::string(e.what()).find("p7") != std::string::npos);
        }
    }
}

TEST_CASE("contingency counts always close over their groups") {
    SplitMix64 rng(0xdecafULL);
    int cases = 0;
    for (int iter = 0; iter < 1100; ++iter) {
        const int n = 1 + static_cast<int>(rng.next_below(40));
        std::vector<DecoupledRecord> records;
        long long want_success = 0, want_straj = 0, want_sve = 0;
        long long want_failed = 0, want_ftraj = 0, want_fve = 0;
        for (int i = 0; i < n; ++i) {
            const bool ans = rng.bernoulli(0.6);
            const bool traj = rng.bernoulli(0.8);
            const bool ve = rng.bernoulli(0.5);
            records.push_back(graded(ans, traj, ve));
            (ans ? want_success : want_failed) += 1;
            if (traj) (ans ? want_straj : want_ftraj) += 1;
            if (ve) (ans ? want_sve : want_fve) += 1;
        }
        const ContingencyTable t = contingency_table(records);
        REQUIRE(t.total == n);
        REQUIRE(t.success.count + t.failed.count == t.all.count);
        REQUIRE(t.all.count == t.total);
        REQUIRE(t.success.count == want_success);
        REQUIRE(t.success.traj_correct == want_straj);
        REQUIRE(t.success.ve_correct == want_sve);
        REQUIRE(t.failed.count == want_failed);
        REQUIRE(t.failed.traj_correct == want_ftraj);
        REQUIRE(t.failed.ve_correct == want_fve);
        REQUIRE(t.all.traj_correct == want_straj + want_ftraj);
        REQUIRE(t.all.ve_correct == want_sve + want_fve);
        REQUIRE(t.success.traj_correct <= t.success.count);
        REQUIRE(t.failed.ve_correct <= t.failed.count);
        ++cases;
    }
    CHECK(cases == 1100);
}

TEST_CASE("supervision strength orders the correction rate") {
    const auto problems = sweep_problems(60);
    const PromptLibrary& prompts = PromptLibrary::defaults();
    const std::uint64_t seed = 21;

    StochasticProfile stubborn = misread_profile(0.5);
    stubborn.stubbornness = 1.0;
    stubborn.p_fix_external = 0.9;
    stubborn.p_fix_internal = 0.7;

    StochasticProfile fixer = misread_profile(0.5);
    fixer.stubbornness = 0.0;
    fixer.p_fix_external = 1.0;
    fixer.p_fix_internal = 1.0;

    // With identical perception parameters, every profile fails the same
    // problems at round 0.
    const SupervisionSweep judge_stubborn = supervision_sweep(
        problems, probe_registry(stubborn), "probe", SupervisionMode::gt_judge, prompts, seed);
    const SupervisionSweep ve_stubborn = supervision_sweep(
        problems, probe_registry(stubborn), "probe", SupervisionMode::gt_ve, prompts, seed);
    const SupervisionSweep judge_fixer = supervision_sweep(
        problems, probe_registry(fixer), "probe", SupervisionMode::gt_judge, prompts, seed);

    CHECK(judge_stubborn.total == 60);
    CHECK(judge_stubborn.failed == ve_stubborn.failed);
    CHECK(judge_stubborn.failed == judge_fixer.failed);
    CHECK(judge_stubborn.failed > 10); // p_ve 0.5 over three keys fails most problems

    // A fully stubborn agent ignores a bare "you were wrong" verdict but
    // cannot argue with handed-over evidence; a zero-stubbornness perfect
    // fixer corrects everything from the verdict alone.
    CHECK(judge_stubborn.corrected == 0);
    CHECK(ve_stubborn.corrected == ve_stubborn.failed);
    CHECK(judge_fixer.corrected == judge_fixer.failed);

    // Mid-range profile: correction is pointwise monotone in supervision
    // strength because all modes share the same fix and trajectory draws.
    StochasticProfile mid = misread_profile(0.5);
    mid.stubbornness = 0.6;
    mid.p_fix_internal = 0.5;
    const SupervisionSweep judge_mid = supervision_sweep(
        problems, probe_registry(mid), "probe", SupervisionMode::gt_judge, prompts, seed);
    const SupervisionSweep plus_mid =
        supervision_sweep(problems, probe_registry(mid), "probe",
                          SupervisionMode::gt_judge_plus_answer, prompts, seed);
    const SupervisionSweep ve_mid = supervision_sweep(problems, probe_registry(mid), "probe",
                                                      SupervisionMode::gt_ve, prompts, seed);
    CHECK(judge_mid.failed == plus_mid.failed);
    CHECK(plus_mid.failed == ve_mid.failed);
    CHECK(judge_mid.corrected <= plus_mid.corrected);
    CHECK(plus_mid.corrected <= ve_mid.corrected);
    CHECK(ve_mid.corrected == ve_mid.failed); // p_traj 1.0: handed evidence always lands
}

TEST_CASE("supervised retries validate their payload and surface abstention") {
    Problem plain;
    plain.id = "q1";
    plain.question = "pick";
    plain.answer_kind = AnswerKind::multiple_choice;
    plain.choices = {"A) x", "B) y"};
    plain.ground_truth = "A";

    AgentResponse prior;
    prior.agent = "probe";
    prior.round = 0;
    prior.raw = "ANSWER: B";
    prior.answer = "B";

    auto store = std::make_shared<ScriptedStore>();
    AgentRegistry registry;
    AgentSpec spec;
    spec.id = "probe";
    spec.backend = AgentSpec::Backend::scripted;
    registry.add(spec);
    registry.attach_fixtures(store);

    SupervisionPayload payload;
    payload.mode = SupervisionMode::gt_ve;
    payload.prior_history = {prior};
    // gt_ve without reference evidence is a configuration hole, caught
    // before any invocation happens.
    CHECK_THROWS_AS(supervised_retry(plain, payload, registry, "probe", PromptLibrary::defaults(), 0),
                    Error);

    payload.mode = SupervisionMode::gt_judge;
    for (int i = 0; i <= kReprompts; ++i) {
        ScriptedStore::Entry e;
        e.problem_id = "q1";
        e.agent_id = "probe";
        e.round = 1;
        e.text = "still gibberish";
        store->add(e);
    }
    try {
        supervised_retry(plain, payload, registry, "probe", PromptLibrary::defaults(), 0);
        FAIL("expected ParseFailure");
    } catch (const ParseFailure& e) {
        CHECK(std::string(e.what()).find("abstained") != std::string::npos);
    }
}

TEST_CASE("reflection without new information leaves frozen agents unmoved") {
    const auto problems = sweep_problems(60);
    const PromptLibrary& prompts = PromptLibrary::defaults();

    StochasticProfile frozen = misread_profile(0.5);
    frozen.stubbornness = 1.0;
    frozen.p_fix_internal = 0.0;

    for (const PromptMode mode : {PromptMode::reflect_on_answer, PromptMode::reflect_on_ve}) {
        const ReflectionSweep sweep =
            reflection_sweep(problems, probe_registry(frozen), "probe", mode, prompts, 33);
        INFO("mode: ", to_string(mode));
        CHECK(sweep.total == 60);
        CHECK(sweep.changed_answers == 0);
        CHECK(sweep.correct_after == sweep.correct_before);
    }

    // An agent that can actually fix itself moves, and mostly upward.
    StochasticProfile open_minded = misread_profile(0.5);
    open_minded.stubbornness = 0.0;
    open_minded.p_fix_external = 1.0;
    open_minded.p_fix_internal = 1.0;
    const ReflectionSweep moved = reflection_sweep(
        problems, probe_registry(open_minded), "probe", PromptMode::reflect_on_answer, prompts, 33);
    CHECK(moved.changed_answers > 0);
    CHECK(moved.correct_after > moved.correct_before);

    CHECK_THROWS_AS(reflection_retry(problems[0], AgentResponse{}, PromptMode::structured_ve,
                                     probe_registry(frozen), "probe", prompts, 0),
                    ConfigError);
}
