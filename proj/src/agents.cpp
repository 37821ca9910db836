#include "m3ace/agents.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include <httplib.h>

#include "m3ace/simmodel.hpp"
#include "m3ace/strings.hpp"

namespace m3ace {

namespace detail {
const std::map<std::string, std::string>& embedded_prompts();
}

std::string to_string(PromptMode mode) {
    switch (mode) {
        case PromptMode::cot_plain: return "cot_plain";
        case PromptMode::structured_ve: return "structured_ve";
        case PromptMode::decoupled_three_step: return "decoupled_three_step";
        case PromptMode::regenerate_with_summary: return "regenerate_with_summary";
        case PromptMode::reflect_on_answer: return "reflect_on_answer";
        case PromptMode::reflect_on_ve: return "reflect_on_ve";
        case PromptMode::supervised_retry: return "supervised_retry";
    }
    return "structured_ve";
}

std::string to_string(SupervisionMode mode) {
    switch (mode) {
        case SupervisionMode::gt_judge: return "gt_judge";
        case SupervisionMode::gt_judge_plus_answer: return "gt_judge_plus_answer";
        case SupervisionMode::gt_ve: return "gt_ve";
    }
    return "gt_judge";
}

SupervisionMode supervision_mode_from_string(const std::string& text) {
    if (text == "gt_judge") return SupervisionMode::gt_judge;
    if (text == "gt_judge_plus_answer") return SupervisionMode::gt_judge_plus_answer;
    if (text == "gt_ve") return SupervisionMode::gt_ve;
    throw ConfigError("supervision_mode", "unknown mode '" + text + "'");
}

void SupervisionPayload::validate() const {
    if (mode == SupervisionMode::gt_judge_plus_answer && !gt_answer) {
        throw Error("MissingExtras", "gt_judge_plus_answer supervision requires gt_answer");
    }
    if (mode == SupervisionMode::gt_ve && gt_evidence.empty()) {
        throw Error("MissingExtras", "gt_ve supervision requires gt_evidence");
    }
}

void StochasticProfile::validate() const {
    const auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!in_unit(p_ve)) throw ConfigError("profile.p_ve", "must be in [0,1]");
    if (!in_unit(p_traj)) throw ConfigError("profile.p_traj", "must be in [0,1]");
    if (!in_unit(p_fix_external)) throw ConfigError("profile.p_fix_external", "must be in [0,1]");
    if (!in_unit(p_fix_internal)) throw ConfigError("profile.p_fix_internal", "must be in [0,1]");
    if (!in_unit(stubbornness)) throw ConfigError("profile.stubbornness", "must be in [0,1]");
    if (!in_unit(misread_share)) throw ConfigError("profile.misread_share", "must be in [0,1]");
    if (p_fix_external < p_fix_internal) {
        throw ConfigError("profile.p_fix_external", "must be >= p_fix_internal");
    }
}

StochasticProfile stochastic_profile_from_json(const json& j) {
    StochasticProfile p;
    if (j.contains("p_ve")) p.p_ve = j.at("p_ve").get<double>();
    if (j.contains("p_traj")) p.p_traj = j.at("p_traj").get<double>();
    if (j.contains("p_fix_external")) p.p_fix_external = j.at("p_fix_external").get<double>();
    if (j.contains("p_fix_internal")) p.p_fix_internal = j.at("p_fix_internal").get<double>();
    if (j.contains("stubbornness")) p.stubbornness = j.at("stubbornness").get<double>();
    if (j.contains("misread_share")) p.misread_share = j.at("misread_share").get<double>();
    return p;
}

json to_json(const StochasticProfile& p) {
    json j;
    j["p_ve"] = p.p_ve;
    j["p_traj"] = p.p_traj;
    j["p_fix_external"] = p.p_fix_external;
    j["p_fix_internal"] = p.p_fix_internal;
    j["stubbornness"] = p.stubbornness;
    j["misread_share"] = p.misread_share;
    return j;
}

std::string to_string(AgentSpec::Backend b) {
    switch (b) {
        case AgentSpec::Backend::remote: return "remote";
        case AgentSpec::Backend::scripted: return "scripted";
        case AgentSpec::Backend::stochastic: return "stochastic";
    }
    return "scripted";
}

AgentSpec::Backend backend_from_string(const std::string& text) {
    if (text == "remote") return AgentSpec::Backend::remote;
    if (text == "scripted") return AgentSpec::Backend::scripted;
    if (text == "stochastic") return AgentSpec::Backend::stochastic;
    throw ConfigError("backend", "unknown backend '" + text + "'");
}

void AgentSpec::validate() const {
    if (id.empty()) throw ConfigError("agents.id", "must be nonempty");
    if (temperature < 0) throw ConfigError("agents.temperature", "must be >= 0");
    if (max_retries < 0) throw ConfigError("agents.max_retries", "must be >= 0");
    if (backend == Backend::remote && (endpoint.empty() || model_name.empty())) {
        throw ConfigError("agents." + id, "remote backend requires endpoint and model_name");
    }
    if (backend == Backend::stochastic) {
        if (!profile) throw ConfigError("agents." + id, "stochastic backend requires a profile");
        profile->validate();
    }
}

AgentSpec agent_spec_from_json(const json& j) {
    AgentSpec spec;
    spec.id = j.at("id").get<std::string>();
    spec.backend = backend_from_string(j.at("backend").get<std::string>());
    spec.endpoint = j.value("endpoint", std::string{});
    spec.model_name = j.value("model_name", std::string{});
    spec.api_key_env = j.value("api_key_env", std::string{});
    spec.temperature = j.value("temperature", 0.0);
    spec.max_retries = j.value("max_retries", 2);
    if (j.contains("profile") && !j.at("profile").is_null()) {
        spec.profile = stochastic_profile_from_json(j.at("profile"));
    }
    return spec;
}

json to_json(const AgentSpec& spec) {
    json j;
    j["id"] = spec.id;
    j["backend"] = to_string(spec.backend);
    j["endpoint"] = spec.endpoint;
    j["model_name"] = spec.model_name;
    j["api_key_env"] = spec.api_key_env;
    j["temperature"] = spec.temperature;
    j["max_retries"] = spec.max_retries;
    j["profile"] = spec.profile ? to_json(*spec.profile) : json(nullptr);
    return j;
}

PromptLibrary PromptLibrary::defaults() {
    PromptLibrary lib;
    lib.templates_ = detail::embedded_prompts();
    return lib;
}

PromptLibrary PromptLibrary::from_dir(const std::string& dir) {
    PromptLibrary lib = defaults();
    namespace fs = std::filesystem;
    if (!fs::is_directory(dir)) {
        throw ConfigError("prompts_dir", "not a directory: " + dir);
    }
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (!entry.is_regular_file() || entry.path().extension() != ".txt") continue;
        std::ifstream in(entry.path());
        std::stringstream buf;
        buf << in.rdbuf();
        lib.templates_[entry.path().stem().string()] = buf.str();
    }
    return lib;
}

const std::string& PromptLibrary::text(const std::string& name) const {
    const auto it = templates_.find(name);
    if (it == templates_.end()) throw ConfigError("prompt." + name, "no such template");
    return it->second;
}

std::string PromptLibrary::render(const std::string& name,
                                  const std::map<std::string, std::string>& values) const {
    std::string out = text(name);
    for (const auto& [key, value] : values) {
        const std::string token = "{{" + key + "}}";
        std::size_t at = 0;
        while ((at = out.find(token, at)) != std::string::npos) {
            out.replace(at, token.size(), value);
            at += value.size();
        }
    }
    // Unfilled placeholders are dropped rather than leaked to the model.
    std::size_t open = 0;
    while ((open = out.find("{{", open)) != std::string::npos) {
        const std::size_t close = out.find("}}", open);
        if (close == std::string::npos) break;
        out.erase(open, close - open + 2);
    }
    return out;
}

namespace {

std::string strip_emphasis_ends(const std::string& s) {
    const auto is_mark = [](char c) {
        return c == '*' || c == '_' || c == '`' || c == ' ' || c == '\t';
    };
    std::size_t b = 0;
    std::size_t e = s.size();
    while (b < e && is_mark(s[b])) ++b;
    while (e > b && is_mark(s[e - 1])) --e;
    return s.substr(b, e - b);
}

// "1. text" / "2) text" / "- text" / "* text" -> "text"
std::optional<std::string> item_text(const std::string& line) {
    const std::string t = trim(line);
    if (t.empty()) return std::nullopt;
    std::size_t i = 0;
    if (std::isdigit(static_cast<unsigned char>(t[0]))) {
        while (i < t.size() && std::isdigit(static_cast<unsigned char>(t[i]))) ++i;
        if (i >= t.size() || (t[i] != '.' && t[i] != ')')) return std::nullopt;
        ++i;
    } else if (t[0] == '-' || t[0] == '*') {
        i = 1;
    } else {
        return std::nullopt;
    }
    if (i >= t.size() || !std::isspace(static_cast<unsigned char>(t[i]))) return std::nullopt;
    const std::string rest = strip_emphasis_ends(trim(t.substr(i)));
    if (rest.empty()) return std::nullopt;
    return rest;
}

enum class HeaderKind { none, visual_evidence, trajectory, answer };

struct HeaderScan {
    HeaderKind kind = HeaderKind::none;
    std::string inline_rest;
};

// Matches a grammar header at the start of a line, tolerating markdown
// emphasis, '#' heading markers, underscores-as-spaces, and any casing.
HeaderScan scan_header(const std::string& line) {
    std::string filtered;
    std::vector<std::size_t> origin;
    for (std::size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        if (c == '*' || c == '#' || c == '`') continue;
        if (c == '_') c = ' ';
        filtered.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
        origin.push_back(i);
    }

    std::size_t j = 0;
    while (j < filtered.size() && filtered[j] == ' ') ++j;
    const auto read_word = [&](std::size_t& at) {
        const std::size_t start = at;
        while (at < filtered.size() && std::isalpha(static_cast<unsigned char>(filtered[at]))) ++at;
        return filtered.substr(start, at - start);
    };

    const std::string w1 = read_word(j);
    HeaderKind kind = HeaderKind::none;
    std::size_t end = j;
    if (w1 == "answer") {
        kind = HeaderKind::answer;
    } else if (w1 == "trajectory") {
        kind = HeaderKind::trajectory;
    } else if (w1 == "visual") {
        std::size_t k = j;
        while (k < filtered.size() && filtered[k] == ' ') ++k;
        if (read_word(k) == "evidence") {
            kind = HeaderKind::visual_evidence;
            end = k;
        }
    }
    if (kind == HeaderKind::none) return {};

    // Consume the separator in the original line: emphasis and spaces, at
    // most one ':', then more emphasis and spaces.
    std::size_t after = end > 0 ? origin[end - 1] + 1 : 0;
    const auto skippable = [](char c) {
        return c == ' ' || c == '\t' || c == '*' || c == '_' || c == '#' || c == '`';
    };
    while (after < line.size() && skippable(line[after])) ++after;
    if (after < line.size() && line[after] == ':') {
        ++after;
        while (after < line.size() && skippable(line[after])) ++after;
    }
    return {kind, strip_emphasis_ends(line.substr(after))};
}

std::string join(const std::vector<std::string>& parts, const std::string& sep) {
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i) out += sep;
        out += parts[i];
    }
    return out;
}

// Prompt block builders. These section markers are part of the machine
// contract between the prompt builder and the stochastic backend, so they
// are produced by code, never by templates.

std::string question_block(const Problem& problem) {
    std::string out = "QUESTION:\n" + problem.question + "\n";
    if (!problem.choices.empty()) {
        out += "\nCHOICES:\n";
        for (const auto& c : problem.choices) out += c + "\n";
    }
    return out;
}

std::string numbered_items(const std::vector<EvidenceItem>& items) {
    if (items.empty()) return "(none)\n";
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i].statement + "\n";
    }
    return out;
}

std::string numbered_strings(const std::vector<std::string>& items) {
    if (items.empty()) return "(none)\n";
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out += std::to_string(i + 1) + ". " + items[i] + "\n";
    }
    return out;
}

std::string summary_block(const CategorizedEvidence& cat) {
    std::string out = "CONSISTENT:\n" + numbered_items(cat.consistent);
    out += "\nCOMPLEMENTARY:\n" + numbered_items(cat.complementary);
    out += "\nCONFLICTING:\n";
    if (cat.conflicting.empty()) {
        out += "(none)\n";
    } else {
        for (std::size_t i = 0; i < cat.conflicting.size(); ++i) {
            out += std::to_string(i + 1) + ". yours: " + cat.conflicting[i].anchor.statement +
                   " || theirs: " + cat.conflicting[i].assistant.statement + "\n";
        }
    }
    out += "\nUNVERIFIED:\n" + numbered_items(cat.anchor_only);
    return out;
}

std::string prior_evidence_block(const AgentResponse& prior) {
    std::string out = "YOUR_PREVIOUS_EVIDENCE:\n" + numbered_items(prior.evidence);
    out += "YOUR_PREVIOUS_ANSWER: " + prior.answer + "\n";
    return out;
}

std::string prior_response_block(const AgentResponse& prior) {
    return "YOUR_PREVIOUS_RESPONSE:\n" + prior.raw + "\nEND_PREVIOUS_RESPONSE\n";
}

std::string history_block(const std::vector<AgentResponse>& history) {
    std::string out;
    for (const auto& resp : history) out += prior_response_block(resp);
    return out;
}

// Section scanner for the stochastic backend: collects the item lines
// under ALL_CAPS headers it recognizes in its own prompt.
std::map<std::string, std::vector<std::string>> scan_sections(const std::string& text,
                                                              const std::set<std::string>& wanted) {
    std::map<std::string, std::vector<std::string>> out;
    std::string current;
    for (const auto& line : split_lines(text)) {
        const std::string t = trim(line);
        if (!t.empty() && t.back() == ':') {
            bool caps = true;
            for (std::size_t i = 0; i + 1 < t.size(); ++i) {
                const char c = t[i];
                if (!(std::isupper(static_cast<unsigned char>(c)) || c == '_')) {
                    caps = false;
                    break;
                }
            }
            if (caps) {
                const std::string name = t.substr(0, t.size() - 1);
                current = wanted.count(name) ? name : std::string{};
                continue;
            }
        }
        if (current.empty()) continue;
        if (auto item = item_text(line)) out[current].push_back(*item);
    }
    return out;
}

std::optional<std::string> single_line_value(const std::string& text, const std::string& name) {
    const std::string prefix = name + ":";
    for (const auto& line : split_lines(text)) {
        const std::string t = trim(line);
        if (starts_with(t, prefix)) return trim(t.substr(prefix.size()));
    }
    return std::nullopt;
}

std::optional<std::string> previous_response_section(const std::string& text) {
    const auto lines = split_lines(text);
    std::optional<std::string> out;
    std::vector<std::string> collected;
    bool in_section = false;
    for (const auto& line : lines) {
        const std::string t = trim(line);
        if (t == "YOUR_PREVIOUS_RESPONSE:") {
            in_section = true;
            collected.clear();
            continue;
        }
        if (t == "END_PREVIOUS_RESPONSE") {
            if (in_section) out = join(collected, "\n");
            in_section = false;
            continue;
        }
        if (in_section) collected.push_back(line);
    }
    return out;
}

} // namespace

std::string build_solve_prompt(const Problem& problem,
                               PromptMode mode,
                               const PromptExtras& extras,
                               const PromptLibrary& prompts) {
    std::map<std::string, std::string> values;
    values["question_block"] = question_block(problem);

    switch (mode) {
        case PromptMode::cot_plain:
        case PromptMode::structured_ve:
        case PromptMode::decoupled_three_step:
            return prompts.render(to_string(mode), values);

        case PromptMode::regenerate_with_summary:
            if (!extras.summary) {
                throw Error("MissingExtras", "regenerate_with_summary requires a categorized summary");
            }
            values["summary_block"] = summary_block(*extras.summary);
            return prompts.render("regenerate_with_summary", values);

        case PromptMode::reflect_on_ve:
            if (!extras.prior) throw Error("MissingExtras", "reflect_on_ve requires the prior response");
            values["prior_evidence_block"] = prior_evidence_block(*extras.prior);
            return prompts.render("reflect_on_ve", values);

        case PromptMode::reflect_on_answer:
            if (!extras.prior) throw Error("MissingExtras", "reflect_on_answer requires the prior response");
            values["prior_response_block"] = prior_response_block(*extras.prior);
            return prompts.render("reflect_on_answer", values);

        case PromptMode::supervised_retry: {
            if (!extras.supervision) throw Error("MissingExtras", "supervised_retry requires a payload");
            const SupervisionPayload& payload = *extras.supervision;
            payload.validate();
            values["prior_response_block"] = history_block(payload.prior_history);
            if (payload.gt_answer) values["gt_answer"] = *payload.gt_answer;
            values["gt_evidence_block"] = numbered_strings(payload.gt_evidence);
            return prompts.render("supervised_" + to_string(payload.mode), values);
        }
    }
    throw Error("MissingExtras", "unhandled prompt mode");
}

AgentResponse parse_structured_response(const std::string& raw, PromptMode mode) {
    if (trim(raw).empty()) throw ParseFailure("empty_response");

    enum class Section { none, evidence, trajectory, answer };
    Section current = Section::none;
    std::vector<std::string> evidence;
    std::vector<std::string> trajectory;
    std::vector<std::string> answer_lines;
    bool saw_answer_header = false;

    for (const auto& line : split_lines(raw)) {
        const HeaderScan h = scan_header(line);
        switch (h.kind) {
            case HeaderKind::visual_evidence:
                current = Section::evidence;
                if (!h.inline_rest.empty()) evidence.push_back(h.inline_rest);
                continue;
            case HeaderKind::trajectory:
                current = Section::trajectory;
                if (!h.inline_rest.empty()) trajectory.push_back(h.inline_rest);
                continue;
            case HeaderKind::answer:
                // The grammar takes the text after the LAST answer header.
                current = Section::answer;
                saw_answer_header = true;
                answer_lines.clear();
                if (!h.inline_rest.empty()) answer_lines.push_back(h.inline_rest);
                continue;
            case HeaderKind::none:
                break;
        }
        switch (current) {
            case Section::evidence:
                if (auto item = item_text(line)) evidence.push_back(*item);
                break;
            case Section::trajectory:
                if (auto item = item_text(line)) trajectory.push_back(*item);
                break;
            case Section::answer: {
                const std::string t = trim(line);
                if (!t.empty()) answer_lines.push_back(t);
                break;
            }
            case Section::none:
                break;
        }
    }

    if (!saw_answer_header) throw ParseFailure("no_answer_header");
    const std::string answer = strip_emphasis_ends(join(answer_lines, "\n"));
    if (answer.empty()) throw ParseFailure("empty_answer");
    if (evidence.empty() && mode != PromptMode::cot_plain) throw ParseFailure("no_evidence_block");
    if (mode == PromptMode::decoupled_three_step && trajectory.empty()) {
        throw ParseFailure("no_trajectory_block");
    }

    AgentResponse resp;
    resp.answer = answer;
    resp.raw = raw;
    for (std::size_t i = 0; i < evidence.size(); ++i) {
        EvidenceItem item;
        item.index = static_cast<int>(i) + 1;
        item.statement = evidence[i];
        resp.evidence.push_back(std::move(item));
    }
    if (!trajectory.empty()) resp.trajectory = trajectory;
    return resp;
}

ScriptedStore ScriptedStore::from_jsonl(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("ConfigError", "cannot open fixture file " + path);
    ScriptedStore store;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (trim(line).empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw SchemaError(line_no, "fixture", e.what());
        }
        Entry entry;
        entry.problem_id = j.at("problem_id").get<std::string>();
        entry.agent_id = j.at("agent_id").get<std::string>();
        entry.round = j.at("round").get<int>();
        entry.text = j.at("text").get<std::string>();
        store.add(std::move(entry));
    }
    return store;
}

namespace {
std::string fixture_key(const std::string& problem_id, const std::string& agent_id, int round) {
    return problem_id + "\x1f" + agent_id + "\x1f" + std::to_string(round);
}
} // namespace

void ScriptedStore::add(Entry entry) {
    const std::lock_guard<std::mutex> lock(mutex_);
    queues_[fixture_key(entry.problem_id, entry.agent_id, entry.round)].push_back(std::move(entry.text));
}

std::string ScriptedStore::pop(const std::string& problem_id, const std::string& agent_id, int round) {
    const std::lock_guard<std::mutex> lock(mutex_);
    const auto it = queues_.find(fixture_key(problem_id, agent_id, round));
    if (it == queues_.end() || it->second.empty()) {
        throw FixtureExhausted("(" + problem_id + ", " + agent_id + ", round " + std::to_string(round) + ")");
    }
    std::string text = std::move(it->second.front());
    it->second.pop_front();
    return text;
}

// ---------------------------------------------------------------------------
// Remote backend

namespace {

std::string base64_encode(const std::string& bytes) {
    static const char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    while (i + 2 < bytes.size()) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                           static_cast<unsigned char>(bytes[i + 2]);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += table[v & 63];
        i += 3;
    }
    if (i + 1 == bytes.size()) {
        const unsigned v = static_cast<unsigned char>(bytes[i]) << 16;
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += "==";
    } else if (i + 2 == bytes.size()) {
        const unsigned v = (static_cast<unsigned char>(bytes[i]) << 16) |
                           (static_cast<unsigned char>(bytes[i + 1]) << 8);
        out += table[(v >> 18) & 63];
        out += table[(v >> 12) & 63];
        out += table[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::string image_part_url(const std::string& image) {
    if (image.empty()) return image;
    if (starts_with(image, "http://") || starts_with(image, "https://") || starts_with(image, "data:")) {
        return image;
    }
    namespace fs = std::filesystem;
    if (fs::is_regular_file(image)) {
        std::ifstream in(image, std::ios::binary);
        std::stringstream buf;
        buf << in.rdbuf();
        const std::string ext = lower(fs::path(image).extension().string());
        std::string mime = "application/octet-stream";
        if (ext == ".png") mime = "image/png";
        else if (ext == ".jpg" || ext == ".jpeg") mime = "image/jpeg";
        else if (ext == ".gif") mime = "image/gif";
        else if (ext == ".webp") mime = "image/webp";
        return "data:" + mime + ";base64," + base64_encode(buf.str());
    }
    return image;
}

struct EndpointParts {
    std::string host;
    std::string path_prefix;
};

EndpointParts split_endpoint(const std::string& endpoint) {
    const std::size_t scheme = endpoint.find("://");
    if (scheme == std::string::npos) return {endpoint, ""};
    const std::size_t slash = endpoint.find('/', scheme + 3);
    if (slash == std::string::npos) return {endpoint, ""};
    std::string prefix = endpoint.substr(slash);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {endpoint.substr(0, slash), prefix};
}

bool retryable_status(int status) { return status == 429 || status >= 500; }

std::string invoke_remote(const AgentSpec& agent, const std::string& prompt, const std::string& image) {
    json content = json::array();
    content.push_back({{"type", "text"}, {"text", prompt}});
    const std::string image_url = image_part_url(image);
    if (!image_url.empty()) {
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", image_url}}}});
    }
    json body;
    body["model"] = agent.model_name;
    body["temperature"] = agent.temperature;
    body["messages"] = json::array({json{{"role", "user"}, {"content", content}}});

    std::string bearer;
    if (!agent.api_key_env.empty()) {
        const char* key = std::getenv(agent.api_key_env.c_str());
        if (!key || !*key) {
            throw ConfigError(agent.api_key_env, "environment variable with the API key is not set");
        }
        bearer = key;
    }

    const EndpointParts parts = split_endpoint(agent.endpoint);
    int last_status = 0;
    std::string last_excerpt;
    const int attempts = agent.max_retries + 1;
    for (int attempt = 0; attempt < attempts; ++attempt) {
        if (attempt > 0) {
            const auto delay = std::chrono::milliseconds(std::min(100L << (attempt - 1), 2000L));
            std::this_thread::sleep_for(delay);
        }
        httplib::Client client(parts.host);
        client.set_connection_timeout(10, 0);
        client.set_read_timeout(120, 0);
        if (!bearer.empty()) client.set_bearer_token_auth(bearer);

        const auto res = client.Post(parts.path_prefix + "/chat/completions", body.dump(),
                                     "application/json");
        if (!res) {
            last_status = 0;
            last_excerpt = "connection error: " + httplib::to_string(res.error());
            continue;
        }
        last_status = res->status;
        last_excerpt = res->body.substr(0, 200);
        if (res->status == 200) {
            try {
                const json reply = json::parse(res->body);
                const json& message = reply.at("choices").at(0).at("message").at("content");
                if (message.is_string()) return message.get<std::string>();
                if (message.is_array()) {
                    std::string text;
                    for (const auto& part : message) {
                        if (part.contains("text")) text += part.at("text").get<std::string>();
                    }
                    return text;
                }
                throw json::other_error::create(501, "unexpected content shape", nullptr);
            } catch (const json::exception& e) {
                throw Transport(200, std::string("malformed completion body: ") + e.what());
            }
        }
        if (!retryable_status(res->status)) break;
    }
    throw Transport(last_status, last_excerpt);
}

// ---------------------------------------------------------------------------
// Stochastic backend
//
// The simulated agent behaves like a model: everything it knows arrives in
// the prompt, its "perception" comes from the problem's ground truth
// plus seeded noise, and its output obeys the structured grammar. Every
// draw is taken from a stream keyed by (seed, problem, agent, round,
// purpose) so results never depend on call order.

struct Beliefs {
    // key -> believed value for canonical statements, plus any free-text
    // statements carried through untouched (echo paths only).
    std::map<std::string, int> values;
    std::vector<std::string> freeform;
};

std::string render_structured(const Problem& problem,
                              const Beliefs& beliefs,
                              const std::string& answer,
                              const std::vector<std::string>* trajectory) {
    std::string out = "VISUAL_EVIDENCE:\n";
    int n = 1;
    for (const auto& [key, value] : beliefs.values) {
        out += std::to_string(n++) + ". " + sim::statement(key, value) + "\n";
    }
    for (const auto& stmt : beliefs.freeform) {
        out += std::to_string(n++) + ". " + stmt + "\n";
    }
    if (trajectory) {
        out += "\nTRAJECTORY:\n";
        int t = 1;
        for (const auto& step : *trajectory) out += std::to_string(t++) + ". " + step + "\n";
    }
    out += "\nANSWER: " + answer + "\n";
    (void)problem;
    return out;
}

long long derived_answer(const Problem& problem, const Beliefs& beliefs, bool traj_ok) {
    const long long sum = sim::weighted_sum(problem, beliefs.values);
    return traj_ok ? sum : sum + sim::traj_delta(problem.id);
}

SplitMix64 draw_stream(const InvokeContext& ctx, const std::string& salt) {
    std::string full_salt = salt;
    if (ctx.attempt > 0) full_salt += ":a" + std::to_string(ctx.attempt);
    return stream_for(ctx.seed, ctx.problem->id, ctx.agent_id, ctx.round, full_salt);
}

void ensure_nonempty(Beliefs& beliefs, const Problem& problem) {
    if (beliefs.values.empty() && beliefs.freeform.empty()) {
        const auto& key = problem.sim_keys.front();
        beliefs.values[key] = sim::corrupted_value(problem.id, key, problem.sim_distractors);
    }
}

std::string synthesize_round0(const AgentSpec& agent, const InvokeContext& ctx) {
    const Problem& problem = *ctx.problem;
    const StochasticProfile& prof = *agent.profile;
    Beliefs beliefs;
    for (const auto& key : problem.sim_keys) {
        auto stream = draw_stream(ctx, "ve:" + key);
        if (stream.bernoulli(prof.p_ve)) {
            beliefs.values[key] = sim::true_value(problem.id, key);
        } else if (stream.bernoulli(prof.misread_share)) {
            // Misread rather than overlooked.
            beliefs.values[key] = sim::corrupted_value(problem.id, key, problem.sim_distractors);
        }
    }
    ensure_nonempty(beliefs, problem);
    const bool traj_ok = draw_stream(ctx, "traj").bernoulli(prof.p_traj);
    const std::string answer = std::to_string(derived_answer(problem, beliefs, traj_ok));

    if (ctx.mode == PromptMode::cot_plain) {
        return "Reading the measurements off the panel and accumulating the weighted total.\n\nANSWER: " +
               answer + "\n";
    }
    if (ctx.mode == PromptMode::decoupled_three_step) {
        const auto traj = traj_ok ? sim::correct_trajectory(problem) : sim::wrong_trajectory(problem);
        return render_structured(problem, beliefs, answer, &traj);
    }
    return render_structured(problem, beliefs, answer, nullptr);
}

std::string synthesize_regenerate(const AgentSpec& agent,
                                  const std::string& prompt,
                                  const InvokeContext& ctx) {
    const Problem& problem = *ctx.problem;
    const StochasticProfile& prof = *agent.profile;
    const auto sections =
        scan_sections(prompt, {"CONSISTENT", "COMPLEMENTARY", "CONFLICTING", "UNVERIFIED"});

    Beliefs beliefs;
    const auto keep = [&](const std::string& stmt) {
        if (const auto kv = sim::parse_statement(stmt)) beliefs.values[kv->first] = kv->second;
    };
    if (const auto it = sections.find("CONSISTENT"); it != sections.end()) {
        for (const auto& s : it->second) keep(s);
    }
    if (const auto it = sections.find("UNVERIFIED"); it != sections.end()) {
        for (const auto& s : it->second) keep(s);
    }

    // Disputed items: re-examine. With a correct external version on the
    // table the fix lands with p_fix_external, otherwise the agent must
    // re-read the image on its own.
    struct Dispute {
        int own_value = 0;
        bool correct_external = false;
    };
    std::map<std::string, Dispute> disputes;
    if (const auto it = sections.find("CONFLICTING"); it != sections.end()) {
        for (const auto& line : it->second) {
            const std::size_t sep = line.find("||");
            if (sep == std::string::npos) continue;
            std::string yours = trim(line.substr(0, sep));
            std::string theirs = trim(line.substr(sep + 2));
            if (starts_with(yours, "yours:")) yours = trim(yours.substr(6));
            if (starts_with(theirs, "theirs:")) theirs = trim(theirs.substr(7));
            const auto own = sim::parse_statement(yours);
            if (!own) continue;
            auto& d = disputes[own->first];
            d.own_value = own->second;
            if (const auto other = sim::parse_statement(theirs)) {
                if (other->first == own->first &&
                    other->second == sim::true_value(problem.id, own->first)) {
                    d.correct_external = true;
                }
            }
        }
    }
    for (const auto& [key, dispute] : disputes) {
        const double p = dispute.correct_external ? prof.p_fix_external : prof.p_fix_internal;
        auto stream = draw_stream(ctx, "fix:" + key);
        beliefs.values[key] = stream.bernoulli(p) ? sim::true_value(problem.id, key) : dispute.own_value;
    }

    if (const auto it = sections.find("COMPLEMENTARY"); it != sections.end()) {
        for (const auto& stmt : it->second) {
            const auto kv = sim::parse_statement(stmt);
            if (!kv || beliefs.values.count(kv->first)) continue;
            auto stream = draw_stream(ctx, "adopt:" + kv->first);
            if (stream.bernoulli(prof.p_fix_external)) beliefs.values[kv->first] = kv->second;
        }
    }

    ensure_nonempty(beliefs, problem);
    const bool traj_ok = draw_stream(ctx, "traj").bernoulli(prof.p_traj);
    const std::string answer = std::to_string(derived_answer(problem, beliefs, traj_ok));
    return render_structured(problem, beliefs, answer, nullptr);
}

struct PriorState {
    Beliefs beliefs;
    std::string answer;
};

PriorState prior_from_prompt(const std::string& prompt, const Problem& problem) {
    PriorState prior;
    bool in_evidence = false;
    for (const auto& line : split_lines(prompt)) {
        const std::string t = trim(line);
        if (t == "YOUR_PREVIOUS_EVIDENCE:") {
            in_evidence = true;
            continue;
        }
        if (!in_evidence) continue;
        // The block ends at the answer line (or any other header).
        if (starts_with(t, "YOUR_PREVIOUS_ANSWER:") || (!t.empty() && t.back() == ':')) {
            in_evidence = false;
            continue;
        }
        if (const auto item = item_text(line)) {
            if (const auto kv = sim::parse_statement(*item)) prior.beliefs.values[kv->first] = kv->second;
            else prior.beliefs.freeform.push_back(*item);
        }
    }
    if (const auto answer = single_line_value(prompt, "YOUR_PREVIOUS_ANSWER")) prior.answer = *answer;

    if (prior.beliefs.values.empty() && prior.beliefs.freeform.empty()) {
        if (const auto section = previous_response_section(prompt)) {
            try {
                const AgentResponse parsed = parse_structured_response(*section, PromptMode::structured_ve);
                for (const auto& item : parsed.evidence) {
                    if (const auto kv = sim::parse_statement(item.statement)) {
                        prior.beliefs.values[kv->first] = kv->second;
                    } else {
                        prior.beliefs.freeform.push_back(item.statement);
                    }
                }
                if (prior.answer.empty()) prior.answer = parsed.answer;
            } catch (const ParseFailure&) {
                // Prior response was free text; the echo path keeps nothing.
            }
        }
    }
    ensure_nonempty(prior.beliefs, problem);
    if (prior.answer.empty()) prior.answer = "0";
    return prior;
}

std::string echo_prior(const Problem& problem, const PriorState& prior) {
    return render_structured(problem, prior.beliefs, prior.answer, nullptr);
}

std::string synthesize_reflect(const AgentSpec& agent,
                               const std::string& prompt,
                               const InvokeContext& ctx) {
    const Problem& problem = *ctx.problem;
    const StochasticProfile& prof = *agent.profile;
    const PriorState prior = prior_from_prompt(prompt, problem);

    // Without an external signal the model usually stands by its own work.
    if (draw_stream(ctx, "reflect-stubborn").bernoulli(prof.stubbornness)) {
        return echo_prior(problem, prior);
    }

    Beliefs beliefs = prior.beliefs;
    for (auto& [key, value] : beliefs.values) {
        const int truth = sim::true_value(problem.id, key);
        if (value != truth) {
            if (draw_stream(ctx, "reflect-fix:" + key).bernoulli(prof.p_fix_internal)) value = truth;
        } else {
            // Second-guessing a correct reading: fresh perception noise,
            // much weaker than the first pass.
            if (draw_stream(ctx, "reflect-destab:" + key).bernoulli((1.0 - prof.p_ve) * 0.15)) {
                value = sim::corrupted_value(problem.id, key, problem.sim_distractors);
            }
        }
    }
    if (ctx.mode == PromptMode::reflect_on_ve) {
        for (const auto& key : problem.sim_keys) {
            if (beliefs.values.count(key)) continue;
            if (draw_stream(ctx, "reflect-readd:" + key).bernoulli(prof.p_fix_internal)) {
                beliefs.values[key] = sim::true_value(problem.id, key);
            }
        }
    }
    ensure_nonempty(beliefs, problem);
    const bool traj_ok = draw_stream(ctx, "reflect-traj").bernoulli(prof.p_traj);
    const std::string answer = std::to_string(derived_answer(problem, beliefs, traj_ok));
    return render_structured(problem, beliefs, answer, nullptr);
}

std::string synthesize_supervised(const AgentSpec& agent,
                                  const std::string& prompt,
                                  const InvokeContext& ctx) {
    const Problem& problem = *ctx.problem;
    const StochasticProfile& prof = *agent.profile;
    const PriorState prior = prior_from_prompt(prompt, problem);

    const auto gt_sections = scan_sections(prompt, {"CORRECT_EVIDENCE"});
    const bool has_gt_evidence =
        gt_sections.count("CORRECT_EVIDENCE") && !gt_sections.at("CORRECT_EVIDENCE").empty();
    const bool has_gt_answer = single_line_value(prompt, "CORRECT_ANSWER").has_value();

    if (has_gt_evidence) {
        // Handed the verified evidence, the agent re-answers from it; only
        // the reasoning trajectory can still fail.
        Beliefs beliefs;
        for (const auto& stmt : gt_sections.at("CORRECT_EVIDENCE")) {
            if (const auto kv = sim::parse_statement(stmt)) beliefs.values[kv->first] = kv->second;
            else beliefs.freeform.push_back(stmt);
        }
        ensure_nonempty(beliefs, problem);
        const bool traj_ok = draw_stream(ctx, "sup-traj").bernoulli(prof.p_traj);
        const std::string answer = std::to_string(derived_answer(problem, beliefs, traj_ok));
        return render_structured(problem, beliefs, answer, nullptr);
    }

    // Pure "you were wrong" supervision hits the stubbornness wall; being
    // shown the correct answer breaks through it. Both share the same fix
    // draws so a sample corrected under the weaker signal is always
    // corrected under the stronger one.
    if (!has_gt_answer && draw_stream(ctx, "sup-stubborn").bernoulli(prof.stubbornness)) {
        return echo_prior(problem, prior);
    }

    Beliefs beliefs = prior.beliefs;
    for (const auto& key : problem.sim_keys) {
        const int truth = sim::true_value(problem.id, key);
        const auto it = beliefs.values.find(key);
        if (it != beliefs.values.end() && it->second == truth) continue;
        if (draw_stream(ctx, "sup-fix:" + key).bernoulli(prof.p_fix_internal)) {
            beliefs.values[key] = truth;
        }
    }
    ensure_nonempty(beliefs, problem);
    const bool traj_ok = draw_stream(ctx, "sup-traj").bernoulli(prof.p_traj);
    const std::string answer = std::to_string(derived_answer(problem, beliefs, traj_ok));
    return render_structured(problem, beliefs, answer, nullptr);
}

std::string invoke_stochastic(const AgentSpec& agent,
                              const std::string& prompt,
                              const InvokeContext& ctx) {
    if (!ctx.problem || !ctx.problem->is_simulated()) {
        throw ConfigError("agents." + agent.id,
                          "stochastic backend requires a synthetic problem with simulation metadata");
    }
    switch (ctx.mode) {
        case PromptMode::cot_plain:
        case PromptMode::structured_ve:
        case PromptMode::decoupled_three_step:
            return synthesize_round0(agent, ctx);
        case PromptMode::regenerate_with_summary:
            return synthesize_regenerate(agent, prompt, ctx);
        case PromptMode::reflect_on_answer:
        case PromptMode::reflect_on_ve:
            return synthesize_reflect(agent, prompt, ctx);
        case PromptMode::supervised_retry:
            return synthesize_supervised(agent, prompt, ctx);
    }
    throw ConfigError("agents." + agent.id, "unhandled prompt mode");
}

} // namespace

std::string invoke(const AgentSpec& agent,
                   const std::string& prompt,
                   const std::string& image,
                   const InvokeContext& ctx,
                   ScriptedStore* fixtures) {
    switch (agent.backend) {
        case AgentSpec::Backend::remote:
            return invoke_remote(agent, prompt, image);
        case AgentSpec::Backend::scripted: {
            if (!fixtures) throw ConfigError("fixtures", "scripted agent '" + agent.id + "' has no fixture store");
            if (!ctx.problem) throw ConfigError("fixtures", "scripted invocation without a problem");
            return fixtures->pop(ctx.problem->id, agent.id, ctx.round);
        }
        case AgentSpec::Backend::stochastic:
            return invoke_stochastic(agent, prompt, ctx);
    }
    throw ConfigError("agents." + agent.id, "unknown backend");
}

void AgentRegistry::add(AgentSpec spec) {
    spec.validate();
    const std::string id = spec.id;
    if (specs_.count(id)) throw ConfigError("agents", "duplicate agent id '" + id + "'");
    specs_.emplace(id, std::move(spec));
}

bool AgentRegistry::has(const std::string& id) const { return specs_.count(id) > 0; }

const AgentSpec& AgentRegistry::spec(const std::string& id) const {
    const auto it = specs_.find(id);
    if (it == specs_.end()) throw ConfigError("agents", "unknown agent id '" + id + "'");
    return it->second;
}

std::vector<std::string> AgentRegistry::ids() const {
    std::vector<std::string> out;
    for (const auto& [id, spec] : specs_) out.push_back(id);
    return out;
}

void AgentRegistry::attach_fixtures(std::shared_ptr<ScriptedStore> store) {
    fixtures_ = std::move(store);
}

std::string AgentRegistry::invoke(const std::string& agent_id,
                                  const std::string& prompt,
                                  const std::string& image,
                                  const InvokeContext& ctx) const {
    return m3ace::invoke(spec(agent_id), prompt, image, ctx, fixtures_.get());
}

std::optional<AgentResponse> solve(const AgentRegistry& registry,
                                   const std::string& agent_id,
                                   const Problem& problem,
                                   PromptMode mode,
                                   const PromptExtras& extras,
                                   const PromptLibrary& prompts,
                                   std::uint64_t seed,
                                   int round) {
    const std::string prompt = build_solve_prompt(problem, mode, extras, prompts);
    InvokeContext ctx;
    ctx.problem = &problem;
    ctx.agent_id = agent_id;
    ctx.round = round;
    ctx.mode = mode;
    ctx.seed = seed;

    for (int attempt = 0; attempt <= kReprompts; ++attempt) {
        ctx.attempt = attempt;
        const std::string raw = registry.invoke(agent_id, prompt, problem.image, ctx);
        AgentResponse resp;
        try {
            resp = parse_structured_response(raw, mode);
        } catch (const ParseFailure&) {
            continue;
        }
        resp.agent = agent_id;
        resp.round = round;
        for (auto& item : resp.evidence) {
            item.source_agent = agent_id;
            item.round = round;
        }
        sim::annotate(resp, problem);
        return resp;
    }
    return std::nullopt;
}

} // namespace m3ace
