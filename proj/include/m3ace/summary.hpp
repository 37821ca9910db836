#pragma once

#include <functional>
#include <string>
#include <vector>

#include "m3ace/core.hpp"

namespace m3ace {

enum class PairLabel { supports, contradicts, unrelated };

struct PairVerdict {
    PairLabel label = PairLabel::unrelated;
    std::string raw; // judge transcript line, empty for the canonical matcher
};

// Classifies one anchor item against one assistant item.
//
// canonical: pure rule on the simulation metadata. Items with keys match
// iff the keys are equal; equal statements then support, different ones
// contradict. Keyless items support on normalized text equality and never
// contradict.
//
// judge: defers every pair to a judge callback (a lightweight agent in
// live runs, a script in tests). Raw verdict text is kept for audit.
struct EvidenceMatcher {
    enum class Kind { canonical, judge };

    Kind kind = Kind::canonical;
    std::function<PairVerdict(const EvidenceItem& anchor, const EvidenceItem& assistant)> judge;

    static EvidenceMatcher canonical();
    static EvidenceMatcher with_judge(
        std::function<PairVerdict(const EvidenceItem&, const EvidenceItem&)> judge_fn);

    PairVerdict classify(const EvidenceItem& anchor, const EvidenceItem& assistant) const;

    // Equality used to deduplicate complementary items: canonical mode
    // groups by key (falling back to text), judge mode by normalized text.
    bool same_item(const EvidenceItem& a, const EvidenceItem& b) const;
};

// Sorts the anchor's items into consistent / conflicting / anchor-only and
// collects assistant-only items as complementary. Contradiction wins when
// an item is both supported and contradicted. Output order is fully
// deterministic and invariant to permuting the assistant lists.
CategorizedEvidence categorize(const std::vector<EvidenceItem>& anchor_evidence,
                               const std::vector<std::vector<EvidenceItem>>& assistant_evidence,
                               const EvidenceMatcher& matcher);

// Distinct conflicted anchor items over anchor_total, as an exact rational.
Fraction compute_conflict_ratio(const CategorizedEvidence& categorized);

} // namespace m3ace
