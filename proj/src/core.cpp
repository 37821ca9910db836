#include "m3ace/core.hpp"

namespace m3ace {

std::string to_string(AnswerKind kind) {
    switch (kind) {
        case AnswerKind::multiple_choice: return "multiple_choice";
        case AnswerKind::numeric: return "numeric";
        case AnswerKind::free_form: return "free_form";
    }
    return "free_form";
}

AnswerKind answer_kind_from_string(const std::string& text) {
    if (text == "multiple_choice") return AnswerKind::multiple_choice;
    if (text == "numeric") return AnswerKind::numeric;
    if (text == "free_form") return AnswerKind::free_form;
    throw Error("SchemaError", "unknown answer_kind '" + text + "'");
}

std::string to_string(Polarity p) {
    return p == Polarity::correct ? "correct" : "corrupted";
}

Polarity polarity_from_string(const std::string& text) {
    if (text == "correct") return Polarity::correct;
    if (text == "corrupted") return Polarity::corrupted;
    throw Error("SchemaError", "unknown polarity '" + text + "'");
}

std::string to_string(Verdict v) {
    return v == Verdict::Select ? "Select" : "Reject";
}

Verdict verdict_from_string(const std::string& text) {
    if (text == "Select") return Verdict::Select;
    if (text == "Reject") return Verdict::Reject;
    throw Error("SchemaError", "unknown verdict '" + text + "'");
}

std::string to_string(BookStatus s) {
    switch (s) {
        case BookStatus::unresolved: return "unresolved";
        case BookStatus::selected: return "selected";
        case BookStatus::finalized_non_converged: return "finalized_non_converged";
    }
    return "unresolved";
}

BookStatus book_status_from_string(const std::string& text) {
    if (text == "unresolved") return BookStatus::unresolved;
    if (text == "selected") return BookStatus::selected;
    if (text == "finalized_non_converged") return BookStatus::finalized_non_converged;
    throw Error("SchemaError", "unknown book status '" + text + "'");
}

void PipelineConfig::validate() const {
    const Fraction zero{0, 1};
    const Fraction one{1, 1};
    if (tau <= zero || tau > one) {
        throw ConfigError("tau", "must be in (0, 1], got " + tau.str());
    }
    if (conflict_threshold < zero || conflict_threshold > one) {
        throw ConfigError("conflict_threshold", "must be in [0, 1], got " + conflict_threshold.str());
    }
    if (max_rounds < 1) throw ConfigError("max_rounds", "must be >= 1");
    if (parallelism < 1) throw ConfigError("parallelism", "must be >= 1");
    if (anchor.empty()) throw ConfigError("anchor", "must name an agent");
    if (assistants.empty()) throw ConfigError("assistants", "must be nonempty");
    for (const auto& a : assistants) {
        if (a == anchor) throw ConfigError("assistants", "anchor '" + anchor + "' may not also be an assistant");
    }
}

ContextBook new_context_book(const Problem& problem,
                             const std::string& anchor_id,
                             const AgentResponse& anchor_resp,
                             const std::vector<AgentResponse>& assistant_resps) {
    if (assistant_resps.empty()) {
        throw Error("EmptyEnsemble", "problem " + problem.id + ": no assistant responses");
    }
    if (anchor_resp.round != 0) {
        throw Error("MixedRounds", "problem " + problem.id + ": anchor response has round " +
                                       std::to_string(anchor_resp.round) + ", expected 0");
    }
    for (const auto& r : assistant_resps) {
        if (r.round != 0) {
            throw Error("MixedRounds", "problem " + problem.id + ": assistant '" + r.agent +
                                           "' response has round " + std::to_string(r.round) + ", expected 0");
        }
    }
    if (anchor_resp.agent != anchor_id) {
        throw Error("WrongAnchor", "problem " + problem.id + ": response from '" + anchor_resp.agent +
                                       "', configured anchor is '" + anchor_id + "'");
    }
    ContextBook book;
    book.problem_id = problem.id;
    book.status = BookStatus::unresolved;
    book.assistant_responses = assistant_resps;
    book.anchor_history = {anchor_resp};
    return book;
}

void finalize(ContextBook& book, const std::string& answer, bool converged) {
    if (book.status != BookStatus::unresolved) {
        throw Error("AlreadyFinal", "book " + book.problem_id + " already has status " + to_string(book.status));
    }
    book.status = converged ? BookStatus::selected : BookStatus::finalized_non_converged;
    book.final_answer = answer;
}

json to_json(const Fraction& f) {
    json j;
    j["num"] = f.num;
    j["den"] = f.den;
    return j;
}

Fraction fraction_from_json(const json& j) {
    return Fraction(j.at("num").get<std::int64_t>(), j.at("den").get<std::int64_t>());
}

json to_json(const EvidenceItem& item) {
    json j;
    j["index"] = item.index;
    j["statement"] = item.statement;
    j["source_agent"] = item.source_agent;
    j["round"] = item.round;
    j["key"] = item.key ? json(*item.key) : json(nullptr);
    j["polarity"] = item.polarity ? json(to_string(*item.polarity)) : json(nullptr);
    return j;
}

EvidenceItem evidence_item_from_json(const json& j) {
    EvidenceItem item;
    item.index = j.at("index").get<int>();
    item.statement = j.at("statement").get<std::string>();
    item.source_agent = j.at("source_agent").get<std::string>();
    item.round = j.at("round").get<int>();
    if (!j.at("key").is_null()) item.key = j.at("key").get<std::string>();
    if (!j.at("polarity").is_null()) item.polarity = polarity_from_string(j.at("polarity").get<std::string>());
    return item;
}

json to_json(const AgentResponse& resp) {
    json j;
    j["agent"] = resp.agent;
    j["round"] = resp.round;
    j["answer"] = resp.answer;
    j["evidence"] = json::array();
    for (const auto& item : resp.evidence) j["evidence"].push_back(to_json(item));
    j["trajectory"] = resp.trajectory ? json(*resp.trajectory) : json(nullptr);
    j["raw"] = resp.raw;
    return j;
}

AgentResponse agent_response_from_json(const json& j) {
    AgentResponse resp;
    resp.agent = j.at("agent").get<std::string>();
    resp.round = j.at("round").get<int>();
    resp.answer = j.at("answer").get<std::string>();
    for (const auto& e : j.at("evidence")) resp.evidence.push_back(evidence_item_from_json(e));
    if (!j.at("trajectory").is_null()) resp.trajectory = j.at("trajectory").get<std::vector<std::string>>();
    resp.raw = j.at("raw").get<std::string>();
    return resp;
}

json to_json(const RefineDecision& d) {
    json j;
    j["verdict"] = to_string(d.verdict);
    j["conflict_ratio"] = to_json(d.conflict_ratio);
    j["agree_count"] = d.agree_count;
    j["high_consensus"] = d.high_consensus;
    return j;
}

RefineDecision refine_decision_from_json(const json& j) {
    RefineDecision d;
    d.verdict = verdict_from_string(j.at("verdict").get<std::string>());
    d.conflict_ratio = fraction_from_json(j.at("conflict_ratio"));
    d.agree_count = j.at("agree_count").get<int>();
    d.high_consensus = j.at("high_consensus").get<bool>();
    return d;
}

json to_json(const CategorizedEvidence& cat) {
    json j;
    j["anchor_total"] = cat.anchor_total;
    j["conflict_ratio"] = to_json(cat.conflict_ratio);
    j["consistent"] = json::array();
    for (const auto& e : cat.consistent) j["consistent"].push_back(to_json(e));
    j["complementary"] = json::array();
    for (const auto& e : cat.complementary) j["complementary"].push_back(to_json(e));
    j["conflicting"] = json::array();
    for (const auto& p : cat.conflicting) {
        json pair;
        pair["anchor"] = to_json(p.anchor);
        pair["assistant"] = to_json(p.assistant);
        j["conflicting"].push_back(pair);
    }
    j["anchor_only"] = json::array();
    for (const auto& e : cat.anchor_only) j["anchor_only"].push_back(to_json(e));
    j["audit"] = cat.audit;
    return j;
}

CategorizedEvidence categorized_evidence_from_json(const json& j) {
    CategorizedEvidence cat;
    cat.anchor_total = j.at("anchor_total").get<int>();
    cat.conflict_ratio = fraction_from_json(j.at("conflict_ratio"));
    for (const auto& e : j.at("consistent")) cat.consistent.push_back(evidence_item_from_json(e));
    for (const auto& e : j.at("complementary")) cat.complementary.push_back(evidence_item_from_json(e));
    for (const auto& p : j.at("conflicting")) {
        cat.conflicting.push_back({evidence_item_from_json(p.at("anchor")), evidence_item_from_json(p.at("assistant"))});
    }
    for (const auto& e : j.at("anchor_only")) cat.anchor_only.push_back(evidence_item_from_json(e));
    cat.audit = j.at("audit").get<std::vector<std::string>>();
    return cat;
}

json to_json(const ContextBook& book) {
    json j;
    j["problem_id"] = book.problem_id;
    j["status"] = to_string(book.status);
    j["final_answer"] = book.final_answer ? json(*book.final_answer) : json(nullptr);
    j["assistant_responses"] = json::array();
    for (const auto& r : book.assistant_responses) j["assistant_responses"].push_back(to_json(r));
    j["anchor_history"] = json::array();
    for (const auto& r : book.anchor_history) j["anchor_history"].push_back(to_json(r));
    j["summaries"] = json::array();
    for (const auto& s : book.summaries) j["summaries"].push_back(to_json(s));
    j["decisions"] = json::array();
    for (const auto& d : book.decisions) j["decisions"].push_back(to_json(d));
    return j;
}

ContextBook context_book_from_json(const json& j) {
    ContextBook book;
    book.problem_id = j.at("problem_id").get<std::string>();
    book.status = book_status_from_string(j.at("status").get<std::string>());
    if (!j.at("final_answer").is_null()) book.final_answer = j.at("final_answer").get<std::string>();
    for (const auto& r : j.at("assistant_responses")) book.assistant_responses.push_back(agent_response_from_json(r));
    for (const auto& r : j.at("anchor_history")) book.anchor_history.push_back(agent_response_from_json(r));
    for (const auto& s : j.at("summaries")) book.summaries.push_back(categorized_evidence_from_json(s));
    for (const auto& d : j.at("decisions")) book.decisions.push_back(refine_decision_from_json(d));
    return book;
}

json to_json(const Problem& p) {
    json j;
    j["id"] = p.id;
    j["question"] = p.question;
    j["image"] = p.image;
    j["answer"] = p.ground_truth ? json(*p.ground_truth) : json(nullptr);
    j["choices"] = p.choices;
    j["answer_kind"] = to_string(p.answer_kind);
    j["gt_evidence"] = p.gt_evidence;
    j["sim_keys"] = p.sim_keys;
    j["sim_distractors"] = p.sim_distractors;
    return j;
}

Problem problem_from_json(const json& j) {
    Problem p;
    p.id = j.at("id").get<std::string>();
    p.question = j.at("question").get<std::string>();
    p.image = j.value("image", std::string{});
    if (j.contains("answer") && !j.at("answer").is_null()) p.ground_truth = j.at("answer").get<std::string>();
    if (j.contains("choices") && !j.at("choices").is_null()) p.choices = j.at("choices").get<std::vector<std::string>>();
    p.answer_kind = answer_kind_from_string(j.at("answer_kind").get<std::string>());
    if (j.contains("gt_evidence") && !j.at("gt_evidence").is_null()) {
        p.gt_evidence = j.at("gt_evidence").get<std::vector<std::string>>();
    }
    if (j.contains("sim_keys") && !j.at("sim_keys").is_null()) {
        p.sim_keys = j.at("sim_keys").get<std::vector<std::string>>();
    }
    if (j.contains("sim_distractors") && !j.at("sim_distractors").is_null()) {
        p.sim_distractors = j.at("sim_distractors").get<int>();
    }
    return p;
}

std::string dump_canonical(const json& j) { return j.dump(2) + "\n"; }

PipelineConfig pipeline_config_from_json(const json& j) {
    PipelineConfig cfg;
    if (j.contains("tau")) cfg.tau = Fraction::from_decimal(j.at("tau").get<double>());
    if (j.contains("conflict_threshold")) {
        cfg.conflict_threshold = Fraction::from_decimal(j.at("conflict_threshold").get<double>());
    }
    if (j.contains("max_rounds")) cfg.max_rounds = j.at("max_rounds").get<int>();
    if (j.contains("parallelism")) cfg.parallelism = j.at("parallelism").get<int>();
    if (j.contains("seed")) cfg.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("anchor")) cfg.anchor = j.at("anchor").get<std::string>();
    if (j.contains("assistants")) cfg.assistants = j.at("assistants").get<std::vector<std::string>>();
    if (j.contains("always_reflect_rejected")) {
        cfg.always_reflect_rejected = j.at("always_reflect_rejected").get<bool>();
    }
    return cfg;
}

json to_json(const PipelineConfig& cfg) {
    json j;
    j["tau"] = cfg.tau.as_double();
    j["conflict_threshold"] = cfg.conflict_threshold.as_double();
    j["max_rounds"] = cfg.max_rounds;
    j["parallelism"] = cfg.parallelism;
    j["seed"] = cfg.seed;
    j["anchor"] = cfg.anchor;
    j["assistants"] = cfg.assistants;
    j["always_reflect_rejected"] = cfg.always_reflect_rejected;
    return j;
}

} // namespace m3ace
