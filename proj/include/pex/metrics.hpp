#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "pex/core.hpp"
#include "pex/perturb.hpp"
#include "pex/rng.hpp"

namespace pex::metrics {

struct Estimate {
  double value = 0.0;
  double ci_halfwidth = 0.0;  // 95% normal-approximation half-width
  std::size_t n = 0;
};

struct FidelityReport {
  std::optional<Estimate> coverage;
  std::optional<Estimate> precision;
  std::vector<std::pair<int, double>> aopc_curve;
  std::optional<double> aopc_mean;
  std::optional<double> accuracy_a;
  std::optional<double> surrogate_accuracy;
  std::size_t n_samples = 0;
};

nlohmann::json to_json(const FidelityReport& report);
std::string aopc_csv(const std::vector<std::pair<int, double>>& curve);

inline const std::vector<int> kDefaultKGrid{10, 20, 30, 40, 50,
                                            60, 70, 80, 90, 100};

// Monte Carlo coverage of a rule under D_x (the policy's distribution over
// bitvectors); no model calls involved.
Estimate estimate_coverage(const Rule& g, std::size_t d,
                           const perturb::PerturbPolicy& policy, std::size_t n,
                           Rng& rng);

// Precision of a rule for `target_label`, sampling conditionally on
// coverage (rule literals forced) so every draw counts.
Estimate estimate_precision(const Rule& g, int target_label,
                            perturb::ExplainContext& ctx, std::size_t n,
                            Rng& rng);

// Per-instance AOPC curve: p_f(y|x) - p_f(y|x^(k)) for each k, where x^(k)
// masks the top-k% positively contributing predicates. Needs a
// probability-exposing backend.
std::vector<std::pair<int, double>> aopc_curve(perturb::ExplainContext& ctx,
                                               const Attribution& attr,
                                               const std::vector<int>& ks);
double aopc_mean(const std::vector<std::pair<int, double>>& curve);

// Fraction of (k) masks that leave the model's label unchanged. Lower is
// better: a faithful attribution flips the label early.
double accuracy_a(perturb::ExplainContext& ctx, const Attribution& attr,
                  const std::vector<int>& ks);

// Surrogate fidelity over D_x draws. Binary tasks compare labels directly;
// the agreement reduction compares "same output as on x" booleans.
double surrogate_fidelity(const std::function<int(const BitVector&)>& surrogate,
                          perturb::ExplainContext& ctx, std::size_t n, Rng& rng);
double surrogate_fidelity_agreement(
    const std::function<bool(const BitVector&)>& predicts_same,
    perturb::ExplainContext& ctx, std::size_t n, Rng& rng);

std::function<int(const BitVector&)> label_surrogate(const UnifiedExplanation& u);
std::function<int(const BitVector&)> label_surrogate(const Attribution& attr,
                                                     double threshold);
std::function<bool(const BitVector&)> agreement_surrogate(
    const UnifiedExplanation& u, int explained_label);

// ---------------------------------------------------------------------------
// Exhaustive oracles (testing and self-checks)

// Shapley values by full enumeration of all 2^d coalitions; d <= 15.
std::vector<double> exact_shapley_oracle(
    const std::function<double(const BitVector&)>& value_fn, std::size_t d);

struct RuleStats {
  double coverage = 0.0;
  double precision = 0.0;
};

// Exact coverage/precision over the full 2^d cube with uniform bits;
// d <= 20 (the model runs on every covered vector).
RuleStats brute_force_rule_stats(const Rule& g,
                                 const std::function<int(const BitVector&)>& model,
                                 std::size_t d);

}  // namespace pex::metrics
