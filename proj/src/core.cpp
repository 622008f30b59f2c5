#include "pex/core.hpp"

#include <algorithm>
#include <set>

namespace pex {

std::string to_string(SpaceKind kind) {
  return kind == SpaceKind::Feature ? "feature" : "concept";
}

SpaceKind space_kind_from_string(const std::string& s) {
  if (s == "feature") return SpaceKind::Feature;
  if (s == "concept") return SpaceKind::Concept;
  throw ParseError("unknown space kind '" + s + "'");
}

PredicateSpace::PredicateSpace(SpaceKind kind,
                               std::vector<PredicateDescriptor> predicates,
                               std::string instance_ref,
                               std::size_t feature_count)
    : kind_(kind),
      predicates_(std::move(predicates)),
      instance_ref_(std::move(instance_ref)),
      feature_count_(feature_count) {
  if (predicates_.empty())
    throw InputError("predicate space needs at least one predicate");
  for (std::size_t i = 0; i < predicates_.size(); ++i) {
    const auto& p = predicates_[i];
    if (p.id != static_cast<int>(i))
      throw InputError("predicate ids must be exactly 0..d-1");
    if (p.name.empty() || p.description.empty())
      throw InputError("predicate " + std::to_string(i) +
                       " needs a non-empty name and description");
  }
  if (kind_ == SpaceKind::Feature) {
    // The index sets must partition {0..feature_count-1}.
    std::vector<char> seen(feature_count_, 0);
    std::size_t total = 0;
    for (const auto& p : predicates_) {
      for (auto j : p.feature_indices) {
        if (j >= feature_count_)
          throw InputError("feature index " + std::to_string(j) +
                           " out of range");
        if (seen[j])
          throw InputError("feature index " + std::to_string(j) +
                           " assigned to two predicates");
        seen[j] = 1;
        ++total;
      }
    }
    if (total != feature_count_)
      throw InputError("feature predicates must cover every feature index");
  } else {
    for (const auto& p : predicates_) {
      if (!p.feature_indices.empty())
        throw InputError("concept predicates carry no feature indices");
    }
  }
}

std::size_t Rule::max_id() const {
  int m = -1;
  for (int i : positive) m = std::max(m, i);
  for (int i : negative) m = std::max(m, i);
  return m < 0 ? 0 : static_cast<std::size_t>(m) + 1;
}

Rule make_rule(std::vector<int> positive, std::vector<int> negative, int label) {
  auto canon = [](std::vector<int>& v) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
    if (!v.empty() && v.front() < 0) throw ContractError("negative predicate id");
  };
  canon(positive);
  canon(negative);
  for (int q : positive) {
    if (std::binary_search(negative.begin(), negative.end(), q))
      throw ContractError("rule has predicate " + std::to_string(q) +
                          " in both Q and C");
  }
  return Rule{std::move(positive), std::move(negative), label};
}

bool evaluate_conjunction(const Rule& rule, const BitVector& z) {
  if (rule.max_id() > z.size())
    throw ContractError("rule references predicate id >= d");
  for (int i : rule.positive)
    if (!z[static_cast<std::size_t>(i)]) return false;
  for (int i : rule.negative)
    if (z[static_cast<std::size_t>(i)]) return false;
  return true;
}

double evaluate_attribution(const Attribution& attr, const BitVector& z) {
  if (z.size() != attr.weights.size())
    throw ContractError("attribution/bitvector dimension mismatch");
  double v = attr.intercept;
  for (std::size_t i = 0; i < z.size(); ++i)
    if (z[i]) v += attr.weights[i];
  return v;
}

std::vector<int> rank_positive_predicates(const Attribution& attr) {
  std::vector<int> ids;
  for (std::size_t i = 0; i < attr.weights.size(); ++i)
    if (attr.weights[i] > 0.0) ids.push_back(static_cast<int>(i));
  std::stable_sort(ids.begin(), ids.end(), [&](int a, int b) {
    double wa = attr.weights[static_cast<std::size_t>(a)];
    double wb = attr.weights[static_cast<std::size_t>(b)];
    if (wa != wb) return wa > wb;
    return a < b;
  });
  return ids;
}

BitVector top_k_mask(const Attribution& attr, int k_percent) {
  if (k_percent < 0 || k_percent > 100)
    throw ContractError("k_percent must be in [0, 100]");
  const std::size_t d = attr.weights.size();
  auto ranked = rank_positive_predicates(attr);
  std::size_t m = std::min<std::size_t>(
      static_cast<std::size_t>(k_percent) * d / 100, ranked.size());
  std::vector<std::uint8_t> bits(d, 1);
  for (std::size_t i = 0; i < m; ++i)
    bits[static_cast<std::size_t>(ranked[i])] = 0;
  return BitVector(std::move(bits));
}

void validate_rule_set(const RuleSet& rules, std::size_t d) {
  auto check = [d](const Rule& r, const char* what) {
    if (r.max_id() > d)
      throw ContractError(std::string(what) + " rule references id >= d");
    for (int q : r.positive)
      if (std::find(r.negative.begin(), r.negative.end(), q) != r.negative.end())
        throw ContractError(std::string(what) + " rule has overlapping Q and C");
  };
  check(rules.factual, "factual");
  if (!rules.factual.negative.empty())
    throw ContractError("factual rule must not carry negated predicates");
  const BitVector x = BitVector::ones(d);
  if (!evaluate_conjunction(rules.factual, x))
    throw ContractError("factual rule must cover the original input");
  for (const auto& cf : rules.counterfactuals) {
    check(cf, "counterfactual");
    if (evaluate_conjunction(cf, x))
      throw ContractError("counterfactual rule must not cover the original input");
    if (cf.label == rules.factual.label)
      throw ContractError("counterfactual label equals the factual label");
  }
}

}  // namespace pex
