#include <doctest.h>

#include "pex/serialize.hpp"
#include "pex/unified.hpp"

using namespace pex;
using namespace pex::unified;

namespace {

UnifiedExplanation sample_unified() {
  RuleSet rules;
  rules.factual = make_rule({0, 1}, {}, 1);
  rules.counterfactuals = {make_rule({}, {0}, 0)};
  Attribution attr;
  attr.intercept = 0.1;
  attr.weights = {0.5, -0.2, 0.3};
  attr.label = 1;
  return build_unified(rules, attr, 0.5);
}

}  // namespace

TEST_CASE("build_unified") {
  auto u = sample_unified();
  CHECK(u.decision_threshold == 0.5);

  SUBCASE("round-trips through serialization") {
    std::vector<PredicateDescriptor> preds(3);
    for (int i = 0; i < 3; ++i)
      preds[static_cast<std::size_t>(i)] = {i, "p" + std::to_string(i),
                                            "d" + std::to_string(i), {}, ""};
    PredicateSpace space(SpaceKind::Concept, preds, "x");
    Explanation e{space, ExplanationPayload{u}};
    auto j = to_json(e);
    auto back = explanation_from_json(j);
    CHECK(to_json(back) == j);
  }

  SUBCASE("dimension mismatches are rejected") {
    RuleSet rules;
    rules.factual = make_rule({5}, {}, 1);  // id 5 outside a 3-weight space
    Attribution attr;
    attr.weights = {0.5, -0.2, 0.3};
    CHECK_THROWS_AS(build_unified(rules, attr, 0.5), ContractError);
  }

  SUBCASE("default threshold is one half") {
    RuleSet rules;
    rules.factual = make_rule({}, {}, 1);
    Attribution attr;
    attr.weights = {0.0};
    CHECK(build_unified(rules, attr).decision_threshold == 0.5);
  }
}

TEST_CASE("unified_predict") {
  auto u = sample_unified();

  SUBCASE("factual rule hit") {
    CHECK(unified_predict(u, BitVector::from_string("110")) == 1);
  }

  SUBCASE("attribution fallback arithmetic") {
    // No rule covers 010: g = 0.1 - 0.2 = -0.1 < 0.5 -> 0.
    CHECK(unified_predict(u, BitVector::from_string("010")) == 0);
  }

  SUBCASE("counterfactual hit") {
    // 011 misses the factual (bit 0 off) and matches C = {0}.
    CHECK(unified_predict(u, BitVector::from_string("011")) == 0);
  }

  SUBCASE("factual wins over counterfactuals") {
    UnifiedExplanation both = u;
    // A counterfactual that also covers 110 (positive on bit 1).
    both.rules->counterfactuals.insert(both.rules->counterfactuals.begin(),
                                       make_rule({1}, {2}, 0));
    CHECK(evaluate_conjunction(both.rules->counterfactuals[0],
                               BitVector::from_string("110")));
    CHECK(unified_predict(both, BitVector::from_string("110")) == 1);
  }

  SUBCASE("dimension mismatch") {
    CHECK_THROWS_AS(unified_predict(u, BitVector::from_string("11")),
                    ContractError);
  }
}

TEST_CASE("unified_predict agrees with the factual label on its cover") {
  auto u = sample_unified();
  const std::size_t d = 3;
  for (std::uint64_t mask = 0; mask < (1u << d); ++mask) {
    auto z = BitVector::from_mask(d, mask);
    if (evaluate_conjunction(u.rules->factual, z))
      CHECK(unified_predict(u, z) == u.rules->factual.label);
  }
}

TEST_CASE("without rules the unified surrogate is the thresholded attribution") {
  auto u = sample_unified();
  UnifiedExplanation stripped = u;
  stripped.rules.reset();
  const std::size_t d = 3;
  for (std::uint64_t mask = 0; mask < (1u << d); ++mask) {
    auto z = BitVector::from_mask(d, mask);
    const int direct =
        evaluate_attribution(u.attribution, z) >= u.decision_threshold ? 1 : 0;
    CHECK(unified_predict(stripped, z) == direct);
  }

  SUBCASE("rule-free explanations serialize and load") {
    std::vector<PredicateDescriptor> preds(3);
    for (int i = 0; i < 3; ++i)
      preds[static_cast<std::size_t>(i)] = {i, "p" + std::to_string(i),
                                            "d" + std::to_string(i), {}, ""};
    PredicateSpace space(SpaceKind::Concept, preds, "x");
    auto j = to_json(Explanation{space, ExplanationPayload{stripped}});
    auto back = explanation_from_json(j);
    CHECK_FALSE(std::get<UnifiedExplanation>(back.payload).rules.has_value());
  }
}
