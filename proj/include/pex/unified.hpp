#pragma once

#include "pex/core.hpp"

namespace pex::unified {

// Combines rule explanations with an attribution surrogate. Both parts must
// come from the same predicate space.
UnifiedExplanation build_unified(const RuleSet& rules, const Attribution& attr,
                                 double decision_threshold = 0.5);

// Rules first (factual, then counterfactuals in their minimal-change
// order), thresholded attribution as the fallback: 1 if g(z) >= threshold
// else 0.
int unified_predict(const UnifiedExplanation& u, const BitVector& z);

}  // namespace pex::unified
