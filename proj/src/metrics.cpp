#include "pex/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

#include "pex/unified.hpp"

namespace pex::metrics {

using perturb::ExplainContext;
using perturb::PerturbPolicy;

namespace {

double wald_halfwidth(double p, std::size_t n) {
  return 1.96 * std::sqrt(p * (1.0 - p) / static_cast<double>(n));
}

std::string format_double(double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return ec == std::errc() ? std::string(buf, end) : std::to_string(v);
}

}  // namespace

nlohmann::json to_json(const FidelityReport& report) {
  nlohmann::json j{{"version", 1}, {"n_samples", report.n_samples}};
  auto estimate_json = [](const Estimate& e) {
    return nlohmann::json{{"estimate", e.value},
                          {"ci95_halfwidth", e.ci_halfwidth},
                          {"n", e.n}};
  };
  if (report.coverage) j["coverage"] = estimate_json(*report.coverage);
  if (report.precision) j["precision"] = estimate_json(*report.precision);
  if (!report.aopc_curve.empty()) {
    nlohmann::json curve = nlohmann::json::array();
    for (const auto& [k, v] : report.aopc_curve)
      curve.push_back(nlohmann::json::array({k, v}));
    j["aopc"] = nlohmann::json{{"curve", std::move(curve)},
                               {"mean", report.aopc_mean.value_or(0.0)}};
  }
  if (report.accuracy_a) j["accuracy_a"] = *report.accuracy_a;
  if (report.surrogate_accuracy)
    j["surrogate_accuracy"] = *report.surrogate_accuracy;
  return j;
}

std::string aopc_csv(const std::vector<std::pair<int, double>>& curve) {
  std::string out = "k,aopc\n";
  for (const auto& [k, v] : curve)
    out += std::to_string(k) + "," + format_double(v) + "\n";
  return out;
}

Estimate estimate_coverage(const Rule& g, std::size_t d,
                           const PerturbPolicy& policy, std::size_t n, Rng& rng) {
  if (n < 1) throw ContractError("estimate_coverage needs n >= 1");
  auto zs = perturb::sample_bitvectors(d, n, policy, rng);
  std::size_t covered = 0;
  for (const auto& z : zs) covered += evaluate_conjunction(g, z);
  Estimate e;
  e.n = n;
  e.value = static_cast<double>(covered) / static_cast<double>(n);
  e.ci_halfwidth = wald_halfwidth(e.value, n);
  return e;
}

Estimate estimate_precision(const Rule& g, int target_label, ExplainContext& ctx,
                            std::size_t n, Rng& rng) {
  if (n < 1) throw ContractError("estimate_precision needs n >= 1");
  const std::size_t d = ctx.d();
  if (g.max_id() > d) throw ContractError("rule references ids >= d");

  // Forced-coverage sampling: positive literals on, negated literals off.
  PerturbPolicy policy = ctx.policy();
  policy.strategy = perturb::Strategy::AnchorConditional;
  policy.conditioning = g.positive;
  auto zs = perturb::sample_bitvectors(d, n, policy, rng);
  if (!g.negative.empty()) {
    for (auto& z : zs) {
      for (int id : g.negative) z = z.with_bit(static_cast<std::size_t>(id), false);
    }
  }
  std::size_t covered = 0, agree = 0;
  auto evaluated = ctx.evaluate(zs);
  for (const auto& s : evaluated) {
    if (!evaluate_conjunction(g, s.z)) continue;
    ++covered;
    agree += s.label == target_label;
  }
  if (covered == 0)
    throw InputError("precision undefined: no covered samples drawn");
  Estimate e;
  e.n = covered;
  e.value = static_cast<double>(agree) / static_cast<double>(covered);
  e.ci_halfwidth = wald_halfwidth(e.value, covered);
  return e;
}

std::vector<std::pair<int, double>> aopc_curve(ExplainContext& ctx,
                                               const Attribution& attr,
                                               const std::vector<int>& ks) {
  if (!ctx.has_probabilities())
    throw UnsupportedError(
        "AOPC needs a backend that exposes output probabilities");
  std::vector<int> grid = ks;
  std::sort(grid.begin(), grid.end());
  grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
  for (int k : grid)
    if (k < 0 || k > 100) throw ContractError("k values must lie in [0, 100]");

  const double base = ctx.explained_score().value();
  std::vector<std::pair<int, double>> curve;
  curve.reserve(grid.size());
  for (int k : grid) {
    auto masked = ctx.evaluate_one(top_k_mask(attr, k));
    curve.emplace_back(k, base - masked.score.value());
  }
  return curve;
}

double aopc_mean(const std::vector<std::pair<int, double>>& curve) {
  if (curve.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [k, v] : curve) sum += v;
  return sum / static_cast<double>(curve.size());
}

double accuracy_a(ExplainContext& ctx, const Attribution& attr,
                  const std::vector<int>& ks) {
  if (ks.empty()) throw ContractError("accuracy_a needs at least one k");
  std::size_t same = 0;
  for (int k : ks) {
    auto masked = ctx.evaluate_one(top_k_mask(attr, k));
    same += masked.label == ctx.explained_label();
  }
  return static_cast<double>(same) / static_cast<double>(ks.size());
}

double surrogate_fidelity(const std::function<int(const BitVector&)>& surrogate,
                          ExplainContext& ctx, std::size_t n, Rng& rng) {
  if (n < 1) throw ContractError("surrogate_fidelity needs n >= 1");
  auto zs = ctx.draw(n, rng);
  auto evaluated = ctx.evaluate(zs);
  std::size_t agree = 0;
  for (const auto& s : evaluated) agree += surrogate(s.z) == s.label;
  return static_cast<double>(agree) / static_cast<double>(n);
}

double surrogate_fidelity_agreement(
    const std::function<bool(const BitVector&)>& predicts_same,
    ExplainContext& ctx, std::size_t n, Rng& rng) {
  if (n < 1) throw ContractError("surrogate_fidelity needs n >= 1");
  auto zs = ctx.draw(n, rng);
  auto evaluated = ctx.evaluate(zs);
  const int fx = ctx.explained_label();
  std::size_t agree = 0;
  for (const auto& s : evaluated)
    agree += predicts_same(s.z) == (s.label == fx);
  return static_cast<double>(agree) / static_cast<double>(n);
}

std::function<int(const BitVector&)> label_surrogate(const UnifiedExplanation& u) {
  return [u](const BitVector& z) { return unified::unified_predict(u, z); };
}

std::function<int(const BitVector&)> label_surrogate(const Attribution& attr,
                                                     double threshold) {
  return [attr, threshold](const BitVector& z) {
    return evaluate_attribution(attr, z) >= threshold ? 1 : 0;
  };
}

std::function<bool(const BitVector&)> agreement_surrogate(
    const UnifiedExplanation& u, int explained_label) {
  return [u, explained_label](const BitVector& z) {
    if (u.rules) {
      if (evaluate_conjunction(u.rules->factual, z))
        return u.rules->factual.label == explained_label;
      for (const auto& cf : u.rules->counterfactuals)
        if (evaluate_conjunction(cf, z)) return cf.label == explained_label;
    }
    return evaluate_attribution(u.attribution, z) >= u.decision_threshold;
  };
}

// ---------------------------------------------------------------------------
// Oracles

std::vector<double> exact_shapley_oracle(
    const std::function<double(const BitVector&)>& value_fn, std::size_t d) {
  if (d < 1) throw ContractError("exact_shapley_oracle needs d >= 1");
  if (d > 15)
    throw BudgetError("exact Shapley enumeration capped at d <= 15, got d = " +
                      std::to_string(d));

  const std::uint64_t total = std::uint64_t{1} << d;
  std::vector<double> value(total);
  for (std::uint64_t mask = 0; mask < total; ++mask)
    value[mask] = value_fn(BitVector::from_mask(d, mask));

  std::vector<double> factorial(d + 1, 1.0);
  for (std::size_t i = 1; i <= d; ++i)
    factorial[i] = factorial[i - 1] * static_cast<double>(i);

  std::vector<double> phi(d, 0.0);
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    const std::size_t s = static_cast<std::size_t>(__builtin_popcountll(mask));
    const double weight = factorial[s] * factorial[d - s - 1] / factorial[d];
    for (std::size_t i = 0; i < d; ++i) {
      if (mask & (std::uint64_t{1} << i)) continue;
      phi[i] += weight * (value[mask | (std::uint64_t{1} << i)] - value[mask]);
    }
  }
  return phi;
}

RuleStats brute_force_rule_stats(
    const Rule& g, const std::function<int(const BitVector&)>& model,
    std::size_t d) {
  if (d < 1) throw ContractError("brute_force_rule_stats needs d >= 1");
  if (d > 20)
    throw BudgetError("exhaustive rule stats capped at d <= 20, got d = " +
                      std::to_string(d));
  if (g.max_id() > d) throw ContractError("rule references ids >= d");

  const std::uint64_t total = std::uint64_t{1} << d;
  std::uint64_t covered = 0, agree = 0;
  for (std::uint64_t mask = 0; mask < total; ++mask) {
    const BitVector z = BitVector::from_mask(d, mask);
    if (!evaluate_conjunction(g, z)) continue;
    ++covered;
    if (model && model(z) == g.label) ++agree;
  }
  RuleStats stats;
  stats.coverage = static_cast<double>(covered) / static_cast<double>(total);
  stats.precision =
      covered ? static_cast<double>(agree) / static_cast<double>(covered) : 0.0;
  return stats;
}

}  // namespace pex::metrics
