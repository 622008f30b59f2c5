#include "pex/unified.hpp"

namespace pex::unified {

UnifiedExplanation build_unified(const RuleSet& rules, const Attribution& attr,
                                 double decision_threshold) {
  const std::size_t d = attr.d();
  if (d == 0) throw ContractError("attribution has no weights");
  auto check = [d](const Rule& r) {
    if (r.max_id() > d)
      throw ContractError(
          "rule set and attribution come from different predicate spaces");
  };
  check(rules.factual);
  for (const auto& cf : rules.counterfactuals) check(cf);

  UnifiedExplanation u;
  u.rules = rules;
  u.attribution = attr;
  u.decision_threshold = decision_threshold;
  return u;
}

int unified_predict(const UnifiedExplanation& u, const BitVector& z) {
  if (z.size() != u.attribution.d())
    throw ContractError("bitvector length does not match the explanation");
  if (u.rules) {
    if (evaluate_conjunction(u.rules->factual, z)) return u.rules->factual.label;
    for (const auto& cf : u.rules->counterfactuals)
      if (evaluate_conjunction(cf, z)) return cf.label;
  }
  return evaluate_attribution(u.attribution, z) >= u.decision_threshold ? 1 : 0;
}

}  // namespace pex::unified
