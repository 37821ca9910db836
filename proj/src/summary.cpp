#include "m3ace/summary.hpp"

#include <algorithm>
#include <map>
#include <set>

#include "m3ace/strings.hpp"

namespace m3ace {

EvidenceMatcher EvidenceMatcher::canonical() {
    EvidenceMatcher m;
    m.kind = Kind::canonical;
    return m;
}

EvidenceMatcher EvidenceMatcher::with_judge(
    std::function<PairVerdict(const EvidenceItem&, const EvidenceItem&)> judge_fn) {
    EvidenceMatcher m;
    m.kind = Kind::judge;
    m.judge = std::move(judge_fn);
    return m;
}

PairVerdict EvidenceMatcher::classify(const EvidenceItem& anchor, const EvidenceItem& assistant) const {
    if (kind == Kind::judge) {
        if (!judge) throw JudgeUnavailable("no judge callback configured");
        return judge(anchor, assistant);
    }
    if (anchor.key && assistant.key) {
        if (*anchor.key != *assistant.key) return {PairLabel::unrelated, ""};
        if (normalize_text(anchor.statement) == normalize_text(assistant.statement)) {
            return {PairLabel::supports, ""};
        }
        return {PairLabel::contradicts, ""};
    }
    if (!anchor.key && !assistant.key &&
        normalize_text(anchor.statement) == normalize_text(assistant.statement)) {
        return {PairLabel::supports, ""};
    }
    return {PairLabel::unrelated, ""};
}

bool EvidenceMatcher::same_item(const EvidenceItem& a, const EvidenceItem& b) const {
    if (kind == Kind::canonical && a.key && b.key) return *a.key == *b.key;
    return normalize_text(a.statement) == normalize_text(b.statement);
}

namespace {

// Deduplication class for a complementary candidate: key when the
// canonical matcher can use one, normalized statement otherwise.
std::string dedup_class(const EvidenceMatcher& matcher, const EvidenceItem& item) {
    if (matcher.kind == EvidenceMatcher::Kind::canonical && item.key) return "k:" + *item.key;
    return "t:" + normalize_text(item.statement);
}

} // namespace

CategorizedEvidence categorize(const std::vector<EvidenceItem>& anchor_evidence,
                               const std::vector<std::vector<EvidenceItem>>& assistant_evidence,
                               const EvidenceMatcher& matcher) {
    if (anchor_evidence.empty()) {
        throw Error("EmptyAnchor", "summary requires at least one anchor evidence item");
    }

    CategorizedEvidence out;
    out.anchor_total = static_cast<int>(anchor_evidence.size());

    // Assistant items that support or contradict some anchor item are
    // accounted for; the rest become complementary candidates.
    std::vector<std::vector<bool>> matched(assistant_evidence.size());
    for (std::size_t a = 0; a < assistant_evidence.size(); ++a) {
        matched[a].assign(assistant_evidence[a].size(), false);
    }

    int conflicted_anchor_items = 0;
    for (const auto& anchor_item : anchor_evidence) {
        bool supported = false;
        std::vector<ConflictPair> contradictions;
        for (std::size_t a = 0; a < assistant_evidence.size(); ++a) {
            for (std::size_t i = 0; i < assistant_evidence[a].size(); ++i) {
                const auto& assistant_item = assistant_evidence[a][i];
                const PairVerdict v = matcher.classify(anchor_item, assistant_item);
                if (!v.raw.empty()) out.audit.push_back(v.raw);
                if (v.label == PairLabel::supports) {
                    supported = true;
                    matched[a][i] = true;
                } else if (v.label == PairLabel::contradicts) {
                    contradictions.push_back({anchor_item, assistant_item});
                    matched[a][i] = true;
                }
            }
        }
        if (!contradictions.empty()) {
            ++conflicted_anchor_items;
            std::sort(contradictions.begin(), contradictions.end(),
                      [](const ConflictPair& x, const ConflictPair& y) {
                          if (x.assistant.source_agent != y.assistant.source_agent) {
                              return x.assistant.source_agent < y.assistant.source_agent;
                          }
                          if (x.assistant.statement != y.assistant.statement) {
                              return x.assistant.statement < y.assistant.statement;
                          }
                          return x.assistant.index < y.assistant.index;
                      });
            for (auto& c : contradictions) out.conflicting.push_back(std::move(c));
        } else if (supported) {
            out.consistent.push_back(anchor_item);
        } else {
            out.anchor_only.push_back(anchor_item);
        }
    }

    // Complementary: assistant items unrelated to every anchor item,
    // deduplicated per matcher equality class. The surviving representative
    // is the majority statement within the class (ties broken
    // lexicographically) so downstream consumers see the dominant version.
    std::map<std::string, std::vector<const EvidenceItem*>> classes;
    for (std::size_t a = 0; a < assistant_evidence.size(); ++a) {
        for (std::size_t i = 0; i < assistant_evidence[a].size(); ++i) {
            if (!matched[a][i]) classes[dedup_class(matcher, assistant_evidence[a][i])].push_back(&assistant_evidence[a][i]);
        }
    }
    for (auto& [cls, members] : classes) {
        std::map<std::string, int> votes;
        for (const auto* m : members) ++votes[m->statement];
        std::string winner;
        int best = -1;
        for (const auto& [stmt, n] : votes) {
            if (n > best) {
                best = n;
                winner = stmt;
            }
        }
        const EvidenceItem* rep = nullptr;
        for (const auto* m : members) {
            if (m->statement != winner) continue;
            if (!rep || m->source_agent < rep->source_agent ||
                (m->source_agent == rep->source_agent && m->index < rep->index)) {
                rep = m;
            }
        }
        out.complementary.push_back(*rep);
    }
    std::sort(out.complementary.begin(), out.complementary.end(),
              [](const EvidenceItem& x, const EvidenceItem& y) {
                  if (x.statement != y.statement) return x.statement < y.statement;
                  return x.source_agent < y.source_agent;
              });

    out.conflict_ratio = Fraction::ratio(conflicted_anchor_items, out.anchor_total);
    return out;
}

Fraction compute_conflict_ratio(const CategorizedEvidence& categorized) {
    std::set<std::pair<int, std::string>> distinct;
    for (const auto& pair : categorized.conflicting) {
        distinct.insert({pair.anchor.index, pair.anchor.statement});
    }
    return Fraction::ratio(static_cast<std::int64_t>(distinct.size()), categorized.anchor_total);
}

} // namespace m3ace
