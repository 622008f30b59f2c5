#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "pex/core.hpp"
#include "pex/perturb.hpp"
#include "pex/rng.hpp"

namespace pex::explainers {

// ---------------------------------------------------------------------------
// Configs

struct LimeConfig {
  std::size_t n_samples = 1000;
  double kernel_width = 0.25;  // sigma of the proximity kernel
  double ridge = 1.0;          // lambda, 0 disables regularization
};

struct ShapConfig {
  std::size_t n_samples = 1000;
  // Enumerate all subsets when 2^d does not exceed this.
  std::size_t exhaustive_threshold = 4096;
};

struct AnchorConfig {
  double precision_target = 0.95;  // tau
  double tolerance = 0.10;         // eps
  double confidence = 0.05;        // delta
  std::size_t beam_width = 4;
  std::size_t batch = 16;
  std::size_t max_anchor_size = 0;  // 0 = d
  // Per-candidate refinement cap; the search reports "unconverged" instead
  // of looping when a target is unattainable.
  std::size_t max_refine_samples = 10000;
};

struct TreeConfig {
  std::size_t max_depth = 0;  // 0 = number of predicates
  std::size_t min_leaf = 2;
};

struct LoreConfig {
  std::size_t ngen = 5;
  std::size_t population = 100;  // total across the two populations, even
  double crossover_p = 0.7;
  double mutation_p = 0.2;
  TreeConfig tree;
  std::size_t max_counterfactuals = 3;
};

// ---------------------------------------------------------------------------
// Attribution learners

// Weighted ridge regression of responses on bits; the intercept is not
// penalized. lambda = 0 demands a full-rank design.
Attribution weighted_ridge(const std::vector<BitVector>& zs,
                           const std::vector<double>& responses,
                           const std::vector<double>& sample_weights,
                           double lambda);

Attribution explain_lime(perturb::ExplainContext& ctx, const LimeConfig& config);

// (d-1) / (C(d,s) * s * (d-s)) for interior coalition sizes 1..d-1.
double shapley_kernel_weight(std::size_t d, std::size_t s);

Attribution explain_kshap(perturb::ExplainContext& ctx, const ShapConfig& config);

// ---------------------------------------------------------------------------
// Anchors

struct KlBounds {
  double lower = 0.0;
  double upper = 1.0;
};

// Bernoulli KL confidence interval: the widest [lb, ub] around p_hat with
// n * KL(p_hat || q) <= beta, solved by bisection to 1e-9.
KlBounds kl_bernoulli_bounds(double p_hat, std::size_t n, double beta);

// Exploration rate for round t with n_candidates arms at confidence delta.
double kl_lucb_beta(std::size_t t, std::size_t n_candidates, double delta);

AnchorRule explain_anchors(perturb::ExplainContext& ctx, const AnchorConfig& config);

// ---------------------------------------------------------------------------
// LORE

// Two-population genetic search around the instance: one population is
// rewarded for keeping the model's label, the other for flipping it; both
// are rewarded for staying close to the all-ones vector. Returns the
// concatenated final populations plus the all-ones vector.
std::vector<BitVector> genetic_neighborhood(perturb::ExplainContext& ctx,
                                            const LoreConfig& config, Rng& rng);

struct TreeNode {
  int bit = -1;  // -1 marks a leaf
  int left = -1;
  int right = -1;
  int label = 0;
  std::size_t count = 0;

  bool is_leaf() const { return bit < 0; }
};

class DecisionTree {
public:
  // Greedy binary splits on "bit = 1" maximizing Gini impurity decrease;
  // ties go to the smaller bit id. Leaf ties prefer `prefer_label` when it
  // is among the modes, then the smaller label.
  static DecisionTree fit(const std::vector<std::pair<BitVector, int>>& samples,
                          const TreeConfig& config,
                          std::optional<int> prefer_label = std::nullopt);

  int classify(const BitVector& z) const;
  const std::vector<TreeNode>& nodes() const { return nodes_; }
  bool empty() const { return nodes_.empty(); }
  std::size_t leaf_count() const;
  std::size_t depth() const;

private:
  std::vector<TreeNode> nodes_;  // nodes_[0] is the root
};

// Factual rule = x's root-to-leaf path; counterfactuals = paths of leaves
// with other labels, ordered by how many conditions contradict x's bits
// (minimal change first), truncated to max_counterfactuals.
RuleSet extract_rules(const DecisionTree& tree, const BitVector& x_bits,
                      std::size_t max_counterfactuals = 3);

RuleSet explain_lore(perturb::ExplainContext& ctx, const LoreConfig& config);

}  // namespace pex::explainers
