#include "m3ace/refine.hpp"

#include <cmath>
#include <cstdlib>

#include "m3ace/strings.hpp"

namespace m3ace {

AnswerEquivalence AnswerEquivalence::choice_letter() {
    AnswerEquivalence eq;
    eq.kind = Kind::choice_letter;
    return eq;
}

AnswerEquivalence AnswerEquivalence::numeric() {
    AnswerEquivalence eq;
    eq.kind = Kind::numeric;
    return eq;
}

AnswerEquivalence AnswerEquivalence::with_judge(
    std::function<bool(const std::string&, const std::string&)> judge_fn) {
    AnswerEquivalence eq;
    eq.kind = Kind::judge;
    eq.judge = std::move(judge_fn);
    return eq;
}

bool AnswerEquivalence::equivalent(const std::string& a, const std::string& b) const {
    switch (kind) {
        case Kind::choice_letter: {
            const std::string na = normalize_label(a);
            const std::string nb = normalize_label(b);
            return !na.empty() && na == nb;
        }
        case Kind::numeric:
            return numeric_equal(a, b);
        case Kind::judge:
            if (!judge) throw JudgeUnavailable("no answer judge configured");
            return judge(a, b);
    }
    return false;
}

std::optional<double> parse_numeric(const std::string& text) {
    const std::string t = trim(text);
    if (t.empty()) return std::nullopt;

    const auto parse_plain = [](const std::string& s) -> std::optional<double> {
        if (s.empty()) return std::nullopt;
        char* end = nullptr;
        const double v = std::strtod(s.c_str(), &end);
        if (end != s.c_str() + s.size()) return std::nullopt;
        if (!std::isfinite(v)) return std::nullopt;
        return v;
    };

    const std::size_t slash = t.find('/');
    if (slash != std::string::npos && slash > 0 && slash + 1 < t.size() &&
        t.find('/', slash + 1) == std::string::npos) {
        const auto num = parse_plain(trim(t.substr(0, slash)));
        const auto den = parse_plain(trim(t.substr(slash + 1)));
        if (num && den && *den != 0.0) return *num / *den;
        return std::nullopt;
    }
    return parse_plain(t);
}

bool numeric_equal(const std::string& a, const std::string& b) {
    const auto va = parse_numeric(a);
    const auto vb = parse_numeric(b);
    if (!va || !vb) return false;
    const double diff = std::fabs(*va - *vb);
    if (diff <= 1e-9) return true;
    const double scale = std::max(std::fabs(*va), std::fabs(*vb));
    return diff <= 1e-6 * scale;
}

ConsensusResult answer_consensus(const std::string& anchor_answer,
                                 const std::vector<std::string>& assistant_answers,
                                 int n_assistants,
                                 const AnswerEquivalence& eq) {
    ConsensusResult res;
    for (const auto& ans : assistant_answers) {
        if (eq.equivalent(anchor_answer, ans)) ++res.agree_count;
    }
    res.high_consensus = 2 * res.agree_count >= n_assistants;
    return res;
}

RefineDecision refine_decision(const Fraction& conflict_ratio,
                               int agree_count,
                               bool high_consensus,
                               const Fraction& threshold) {
    RefineDecision d;
    d.conflict_ratio = conflict_ratio;
    d.agree_count = agree_count;
    d.high_consensus = high_consensus;
    d.verdict = (conflict_ratio > threshold && !high_consensus) ? Verdict::Reject : Verdict::Select;
    return d;
}

} // namespace m3ace
