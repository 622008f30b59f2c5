#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "pex/bitvector.hpp"
#include "pex/error.hpp"

namespace pex {

enum class SpaceKind { Feature, Concept };

std::string to_string(SpaceKind kind);
SpaceKind space_kind_from_string(const std::string& s);

struct PredicateDescriptor {
  int id = 0;
  std::string name;
  std::string description;
  // Feature indices this predicate governs (empty for concept predicates).
  std::vector<std::size_t> feature_indices;
  // Optional response-mapping text for concept questionnaires.
  std::string metadata;
};

// Ordered set of d predicates over one explained instance. Feature-level
// spaces partition the instance's feature indices; concept-level spaces carry
// described predicates with no index sets. The all-ones bitvector always
// stands for the original input.
class PredicateSpace {
public:
  PredicateSpace(SpaceKind kind, std::vector<PredicateDescriptor> predicates,
                 std::string instance_ref, std::size_t feature_count = 0);

  std::size_t d() const { return predicates_.size(); }
  SpaceKind kind() const { return kind_; }
  const std::vector<PredicateDescriptor>& predicates() const { return predicates_; }
  const PredicateDescriptor& predicate(std::size_t i) const { return predicates_.at(i); }
  const std::string& instance_ref() const { return instance_ref_; }
  // Number of raw features partitioned by a feature-level space (0 for
  // concept-level).
  std::size_t feature_count() const { return feature_count_; }

  bool same_shape(const PredicateSpace& other) const {
    return d() == other.d() && kind_ == other.kind_;
  }

private:
  SpaceKind kind_;
  std::vector<PredicateDescriptor> predicates_;
  std::string instance_ref_;
  std::size_t feature_count_;
};

// Conjunction of positive literals Q and negated literals C. Anchors use
// C = {}; counterfactual rules use both. `label` is the output the rule
// implies.
struct Rule {
  std::vector<int> positive;  // Q, ascending ids
  std::vector<int> negative;  // C, ascending ids
  int label = 0;

  bool empty() const { return positive.empty() && negative.empty(); }
  std::size_t max_id() const;
};

Rule make_rule(std::vector<int> positive, std::vector<int> negative, int label);

// True iff every bit in Q is 1 and every bit in C is 0. The empty rule is
// identically true.
bool evaluate_conjunction(const Rule& rule, const BitVector& z);

// Linear surrogate over predicate bits: g(z) = intercept + sum_{z_i=1} w_i.
struct Attribution {
  double intercept = 0.0;
  std::vector<double> weights;
  int label = 0;

  std::size_t d() const { return weights.size(); }
};

double evaluate_attribution(const Attribution& attr, const BitVector& z);

// Ids with strictly positive weight, sorted by weight descending, ties by
// ascending id.
std::vector<int> rank_positive_predicates(const Attribution& attr);

// Masks the top-k% predicates of the positive ranking: starts from all-ones
// and clears m = min(floor(k*d/100), #positives) bits.
BitVector top_k_mask(const Attribution& attr, int k_percent);

struct AnchorRule {
  std::vector<int> members;       // Q, ascending ids
  int label = 0;                  // f(x)
  double precision_estimate = 0.0;
  double coverage_estimate = 0.0;
  double confidence = 0.0;        // delta used during search
  bool converged = true;          // false when the search ran out of budget

  Rule as_rule() const { return Rule{members, {}, label}; }
};

struct RuleSet {
  Rule factual;                     // covers the all-ones bitvector, label f(x)
  std::vector<Rule> counterfactuals;  // labels != f(x), minimal-change first
};

void validate_rule_set(const RuleSet& rules, std::size_t d);

struct UnifiedExplanation {
  // Empty when the surrogate is the thresholded attribution alone.
  std::optional<RuleSet> rules;
  Attribution attribution;
  double decision_threshold = 0.5;
};

using ExplanationPayload =
    std::variant<Attribution, AnchorRule, RuleSet, UnifiedExplanation>;

struct Explanation {
  PredicateSpace space;
  ExplanationPayload payload;
};

}  // namespace pex
