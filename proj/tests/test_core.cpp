#include <doctest.h>

#include "pex/core.hpp"
#include "pex/rng.hpp"
#include "pex/serialize.hpp"

using namespace pex;

TEST_CASE("bitvector basics") {
  auto z = BitVector::from_string("10100");
  CHECK(z.size() == 5);
  CHECK(z[0]);
  CHECK_FALSE(z[1]);
  CHECK(z.popcount() == 2);
  CHECK(z.str() == "10100");
  CHECK(BitVector::ones(3).str() == "111");
  CHECK(BitVector::from_mask(4, 0b0101).str() == "1010");
  CHECK_THROWS_AS(BitVector::from_string("102"), ParseError);

  auto flipped = z.with_bit(1, true);
  CHECK(flipped.str() == "11100");
  CHECK(z.str() == "10100");  // original untouched
  CHECK(z.hamming(flipped) == 1);
}

TEST_CASE("evaluate_conjunction on the documented cases") {
  CHECK(evaluate_conjunction(make_rule({0, 2}, {}, 1),
                             BitVector::from_string("10100")));
  CHECK_FALSE(evaluate_conjunction(make_rule({0}, {1}, 1),
                                   BitVector::from_string("11000")));

  // Empty conjunction is identically true: exhaustive over d = 10.
  const Rule empty = make_rule({}, {}, 0);
  for (std::uint64_t mask = 0; mask < (1u << 10); ++mask)
    CHECK(evaluate_conjunction(empty, BitVector::from_mask(10, mask)));

  CHECK_THROWS_AS(
      evaluate_conjunction(make_rule({5}, {}, 0), BitVector::from_string("101")),
      ContractError);
  CHECK_THROWS_AS(make_rule({1, 2}, {2}, 0), ContractError);
}

TEST_CASE("evaluate_attribution") {
  Attribution attr;
  attr.intercept = 3.0;
  attr.weights = {2.0, -1.0};
  CHECK(evaluate_attribution(attr, BitVector::from_string("10")) == 5.0);

  Attribution zero;
  zero.weights = {0.0, 0.0, 0.0};
  for (std::uint64_t mask = 0; mask < 8; ++mask)
    CHECK(evaluate_attribution(zero, BitVector::from_mask(3, mask)) == 0.0);

  Attribution third;
  third.intercept = 0.1;
  third.weights = {0.5, -0.2, 0.3};
  CHECK(evaluate_attribution(third, BitVector::from_string("010")) ==
        doctest::Approx(-0.1));

  CHECK_THROWS_AS(evaluate_attribution(third, BitVector::from_string("01")),
                  ContractError);
}

TEST_CASE("evaluate_attribution is additive in single bits") {
  Rng rng = rng_fork(7, 0);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t d = 1 + rng_index(rng, 12);
    Attribution attr;
    attr.intercept = rng_double(rng) - 0.5;
    for (std::size_t i = 0; i < d; ++i)
      attr.weights.push_back(2.0 * rng_double(rng) - 1.0);
    std::vector<std::uint8_t> bits(d);
    for (auto& b : bits) b = rng_bernoulli(rng, 0.5);
    const std::size_t i = rng_index(rng, d);
    bits[i] = 0;
    const BitVector off{bits};
    const BitVector on = off.with_bit(i, true);
    CHECK(evaluate_attribution(attr, on) - evaluate_attribution(attr, off) ==
          doctest::Approx(attr.weights[i]).epsilon(1e-12));
  }
}

TEST_CASE("rank_positive_predicates") {
  Attribution attr;
  attr.weights = {0.5, -0.2, 0.3};
  CHECK(rank_positive_predicates(attr) == std::vector<int>{0, 2});

  attr.weights = {0.4, 0.4};
  CHECK(rank_positive_predicates(attr) == std::vector<int>{0, 1});

  attr.weights = {-1.0, -2.0};
  CHECK(rank_positive_predicates(attr).empty());
}

TEST_CASE("top_k_mask") {
  // Positive ranking is [3, 7, 1] by weight.
  Attribution attr;
  attr.weights = std::vector<double>(10, -0.1);
  attr.weights[3] = 0.9;
  attr.weights[7] = 0.5;
  attr.weights[1] = 0.2;

  auto masked = top_k_mask(attr, 20);  // floor(20 * 10 / 100) = 2
  CHECK(masked.str() == "1110111011");

  CHECK(top_k_mask(attr, 0) == BitVector::ones(10));

  Attribution single;
  single.weights = {-1, -1, 0.7, -1, -1};
  CHECK(top_k_mask(single, 100).str() == "11011");  // capped at one positive

  CHECK_THROWS_AS(top_k_mask(attr, 101), ContractError);
}

TEST_CASE("top_k_mask is monotone in k") {
  Rng rng = rng_fork(11, 0);
  for (int trial = 0; trial < 10; ++trial) {
    const std::size_t d = 2 + rng_index(rng, 14);
    Attribution attr;
    for (std::size_t i = 0; i < d; ++i)
      attr.weights.push_back(2.0 * rng_double(rng) - 1.0);
    for (int k1 = 0; k1 <= 100; k1 += 10) {
      for (int k2 = k1; k2 <= 100; k2 += 20) {
        auto m1 = top_k_mask(attr, k1);
        auto m2 = top_k_mask(attr, k2);
        for (std::size_t i = 0; i < d; ++i) {
          if (!m1[i]) CHECK_FALSE(m2[i]);  // cleared set grows with k
        }
      }
    }
  }
}

TEST_CASE("predicate space invariants") {
  std::vector<PredicateDescriptor> preds(2);
  preds[0] = {0, "a", "token a", {0}, ""};
  preds[1] = {1, "b", "token b", {1}, ""};
  PredicateSpace space(SpaceKind::Feature, preds, "x1", 2);
  CHECK(space.d() == 2);
  CHECK(space.feature_count() == 2);

  // Missing feature index 1.
  preds[1].feature_indices = {};
  CHECK_THROWS_AS(PredicateSpace(SpaceKind::Feature, preds, "x", 2), InputError);

  // Overlapping index sets.
  preds[1].feature_indices = {0};
  CHECK_THROWS_AS(PredicateSpace(SpaceKind::Feature, preds, "x", 2), InputError);

  // Ids must be 0..d-1.
  preds[1].feature_indices = {1};
  preds[1].id = 5;
  CHECK_THROWS_AS(PredicateSpace(SpaceKind::Feature, preds, "x", 2), InputError);

  // Concept predicates need descriptions.
  std::vector<PredicateDescriptor> cpreds(1);
  cpreds[0] = {0, "mood", "", {}, ""};
  CHECK_THROWS_AS(PredicateSpace(SpaceKind::Concept, cpreds, "x"), InputError);
}

TEST_CASE("validate_rule_set") {
  RuleSet rules;
  rules.factual = make_rule({0, 1}, {}, 1);
  rules.counterfactuals = {make_rule({}, {0}, 0)};
  CHECK_NOTHROW(validate_rule_set(rules, 3));

  // Counterfactual must not cover the all-ones vector.
  RuleSet bad = rules;
  bad.counterfactuals = {make_rule({2}, {}, 0)};
  CHECK_THROWS_AS(validate_rule_set(bad, 3), ContractError);

  // Counterfactual label must differ.
  bad = rules;
  bad.counterfactuals = {make_rule({}, {0}, 1)};
  CHECK_THROWS_AS(validate_rule_set(bad, 3), ContractError);
}

TEST_CASE("explanation serialization round-trips") {
  std::vector<PredicateDescriptor> preds(3);
  for (int i = 0; i < 3; ++i) {
    preds[static_cast<std::size_t>(i)] = {
        i, "p" + std::to_string(i), "predicate " + std::to_string(i),
        {static_cast<std::size_t>(i)}, ""};
  }
  PredicateSpace space(SpaceKind::Feature, preds, "inst-1", 3);

  Attribution attr;
  attr.intercept = 0.25;
  attr.weights = {1.0, -0.5, 0.0};
  attr.label = 1;

  AnchorRule anchor;
  anchor.members = {0, 2};
  anchor.label = 1;
  anchor.precision_estimate = 0.97;
  anchor.coverage_estimate = 0.25;
  anchor.confidence = 0.05;

  RuleSet rules;
  rules.factual = make_rule({0}, {}, 1);
  rules.counterfactuals = {make_rule({}, {0}, 0)};

  UnifiedExplanation uni;
  uni.rules = rules;
  uni.attribution = attr;
  uni.decision_threshold = 0.5;

  for (ExplanationPayload payload :
       {ExplanationPayload{attr}, ExplanationPayload{anchor},
        ExplanationPayload{rules}, ExplanationPayload{uni}}) {
    Explanation e{space, payload};
    auto j = to_json(e);
    CHECK(j.at("version") == kExplanationFormatVersion);
    auto back = explanation_from_json(j);
    CHECK(to_json(back) == j);
    CHECK(back.space.d() == 3);
    CHECK(back.space.instance_ref() == "inst-1");
  }

  auto j = to_json(Explanation{space, ExplanationPayload{attr}});
  j["version"] = 99;
  CHECK_THROWS_AS(explanation_from_json(j), ParseError);
}
