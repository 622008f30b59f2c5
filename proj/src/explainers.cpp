#include "pex/explainers.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

namespace pex::explainers {

using perturb::ExplainContext;
using perturb::PerturbPolicy;
using perturb::Strategy;

namespace {

// Regression response: the explained label's probability when available,
// otherwise the 0/1 label-match indicator.
double response_of(const perturb::EvaluatedSample& s, int explained_label,
                   bool has_probabilities) {
  if (has_probabilities && s.score) return *s.score;
  return s.label == explained_label ? 1.0 : 0.0;
}

}  // namespace

// ---------------------------------------------------------------------------
// Weighted ridge / LIME

Attribution weighted_ridge(const std::vector<BitVector>& zs,
                           const std::vector<double>& responses,
                           const std::vector<double>& sample_weights,
                           double lambda) {
  if (zs.empty()) throw ContractError("weighted_ridge needs samples");
  if (zs.size() != responses.size() || zs.size() != sample_weights.size())
    throw ContractError("weighted_ridge input lengths differ");
  if (lambda < 0) throw ContractError("ridge lambda must be >= 0");
  const std::size_t d = zs[0].size();
  const std::size_t p = d + 1;  // intercept + weights

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(p);
  Eigen::VectorXd xi(p);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    if (zs[i].size() != d) throw ContractError("bitvector lengths differ");
    xi(0) = 1.0;
    for (std::size_t j = 0; j < d; ++j) xi(j + 1) = zs[i][j] ? 1.0 : 0.0;
    A.noalias() += sample_weights[i] * xi * xi.transpose();
    b.noalias() += sample_weights[i] * responses[i] * xi;
  }
  // The intercept stays unpenalized.
  for (std::size_t j = 1; j < p; ++j) A(j, j) += lambda;

  Eigen::VectorXd sol;
  if (lambda == 0.0) {
    Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
    if (lu.rank() < static_cast<Eigen::Index>(p))
      throw NumericalError(
          "weighted least squares system is singular; set ridge lambda > 0");
    sol = lu.solve(b);
  } else {
    sol = A.ldlt().solve(b);
  }

  Attribution attr;
  attr.intercept = sol(0);
  attr.weights.resize(d);
  for (std::size_t j = 0; j < d; ++j) attr.weights[j] = sol(j + 1);
  return attr;
}

Attribution explain_lime(ExplainContext& ctx, const LimeConfig& config) {
  const std::size_t d = ctx.d();
  if (config.kernel_width <= 0) throw ContractError("kernel width must be > 0");
  if (config.ridge < 0) throw ContractError("ridge must be >= 0");
  if (config.n_samples < d + 1)
    throw ContractError("LIME needs n_samples >= d + 1");

  PerturbPolicy policy = ctx.policy();
  policy.strategy = Strategy::Bernoulli;
  policy.conditioning.clear();
  Rng rng = rng_fork(ctx.seed(), 0x11f3);
  auto zs = perturb::sample_bitvectors(d, config.n_samples, policy, rng);
  auto samples = ctx.evaluate(zs);

  const double sigma2 = config.kernel_width * config.kernel_width;
  std::vector<double> responses(zs.size()), weights(zs.size());
  for (std::size_t i = 0; i < zs.size(); ++i) {
    responses[i] =
        response_of(samples[i], ctx.explained_label(), ctx.has_probabilities());
    const double dist = 1.0 - static_cast<double>(zs[i].popcount()) / d;
    weights[i] = std::exp(-dist * dist / sigma2);
  }

  Attribution attr = weighted_ridge(zs, responses, weights, config.ridge);
  attr.label = ctx.explained_label();
  return attr;
}

// ---------------------------------------------------------------------------
// Kernel SHAP

double shapley_kernel_weight(std::size_t d, std::size_t s) {
  if (d < 2) throw ContractError("shapley_kernel_weight needs d >= 2");
  if (s < 1 || s > d - 1)
    throw ContractError("shapley kernel weight undefined for s in {0, d}");
  double binom = 1.0;
  for (std::size_t i = 1; i <= s; ++i)
    binom *= static_cast<double>(d - s + i) / static_cast<double>(i);
  return static_cast<double>(d - 1) /
         (binom * static_cast<double>(s) * static_cast<double>(d - s));
}

Attribution explain_kshap(ExplainContext& ctx, const ShapConfig& config) {
  const std::size_t d = ctx.d();
  const bool probs = ctx.has_probabilities();
  const int y = ctx.explained_label();

  auto value_of = [&](const BitVector& z) {
    return response_of(ctx.evaluate_one(z), y, probs);
  };
  const double v0 = value_of(BitVector::zeros(d));
  const double v1 = value_of(BitVector::ones(d));

  Attribution attr;
  attr.label = y;
  attr.intercept = v0;  // g(all-zeros) = v(empty set)
  if (d == 1) {
    attr.weights = {v1 - v0};  // g(all-ones) = v(full) fixes the single weight
    return attr;
  }

  std::vector<BitVector> zs;
  std::vector<double> weights;
  const bool exact =
      d < 63 && (std::uint64_t{1} << d) <= config.exhaustive_threshold;
  if (exact) {
    const std::uint64_t full = (std::uint64_t{1} << d) - 1;
    zs.reserve(full - 1);
    weights.reserve(full - 1);
    for (std::uint64_t mask = 1; mask < full; ++mask) {
      BitVector z = BitVector::from_mask(d, mask);
      weights.push_back(shapley_kernel_weight(d, z.popcount()));
      zs.push_back(std::move(z));
    }
  } else {
    if (config.n_samples < d + 2)
      throw ContractError("Kernel SHAP needs n_samples >= d + 2");
    Rng rng = rng_fork(ctx.seed(), 0x54a9);
    // Size-stratified sampling with the budget split evenly across coalition
    // sizes. Within a size the draw is without replacement (complete stratum
    // when the budget covers it), and each row carries the kernel weight
    // scaled by C(d,s)/m, the inverse inclusion probability.
    const std::size_t sizes = d - 1;
    for (std::size_t s = 1; s <= sizes; ++s) {
      std::size_t quota = config.n_samples / sizes +
                          (s <= config.n_samples % sizes ? 1 : 0);
      double binom = 1.0;
      for (std::size_t i = 1; i <= s; ++i)
        binom *= static_cast<double>(d - s + i) / static_cast<double>(i);

      std::vector<BitVector> stratum;
      if (binom <= static_cast<double>(quota)) {
        // Enumerate the whole stratum: subsets in lexicographic index order.
        std::vector<std::size_t> comb(s);
        for (std::size_t i = 0; i < s; ++i) comb[i] = i;
        while (true) {
          std::vector<std::uint8_t> bits(d, 0);
          for (auto i : comb) bits[i] = 1;
          stratum.emplace_back(std::move(bits));
          std::size_t i = s;
          while (i > 0 && comb[i - 1] == d - s + i - 1) --i;
          if (i == 0) break;
          ++comb[i - 1];
          for (std::size_t j = i; j < s; ++j) comb[j] = comb[j - 1] + 1;
        }
      } else {
        // Distinct draws via rejection on the subset's sorted index key.
        std::set<std::vector<std::size_t>> seen;
        std::vector<std::size_t> idx(d);
        while (stratum.size() < quota) {
          std::iota(idx.begin(), idx.end(), std::size_t{0});
          for (std::size_t i = 0; i < s; ++i) {
            std::size_t j = i + rng_index(rng, d - i);
            std::swap(idx[i], idx[j]);
          }
          std::vector<std::size_t> key(idx.begin(),
                                       idx.begin() + static_cast<long>(s));
          std::sort(key.begin(), key.end());
          if (!seen.insert(key).second) continue;
          std::vector<std::uint8_t> bits(d, 0);
          for (auto i : key) bits[i] = 1;
          stratum.emplace_back(std::move(bits));
        }
      }

      const double kernel = shapley_kernel_weight(d, s);
      const double row_weight =
          kernel * binom / static_cast<double>(stratum.size());
      for (auto& z : stratum) {
        zs.push_back(std::move(z));
        weights.push_back(row_weight);
      }
    }
  }

  auto samples = ctx.evaluate(zs);

  // Eliminate the boundary constraints g(0...0) = v0, g(1...1) = v1 by
  // substituting w_{d-1} = (v1 - v0) - sum_{j<d-1} w_j.
  const std::size_t m = d - 1;
  const double span = v1 - v0;
  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd phi(m);
  for (std::size_t i = 0; i < zs.size(); ++i) {
    const double zlast = zs[i][m] ? 1.0 : 0.0;
    for (std::size_t j = 0; j < m; ++j)
      phi(j) = (zs[i][j] ? 1.0 : 0.0) - zlast;
    const double target = response_of(samples[i], y, probs) - v0 - span * zlast;
    A.noalias() += weights[i] * phi * phi.transpose();
    b.noalias() += weights[i] * target * phi;
  }

  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (lu.rank() < static_cast<Eigen::Index>(m))
    throw NumericalError(
        "Kernel SHAP system is singular; increase n_samples or the "
        "exhaustive threshold");
  Eigen::VectorXd sol = lu.solve(b);

  attr.weights.resize(d);
  double sum = 0.0;
  for (std::size_t j = 0; j < m; ++j) {
    attr.weights[j] = sol(j);
    sum += sol(j);
  }
  attr.weights[m] = span - sum;
  return attr;
}

// ---------------------------------------------------------------------------
// KL confidence bounds

namespace {

double kl_bernoulli(double p, double q) {
  double kl = 0.0;
  if (p > 0.0) kl += p * std::log(p / q);            // q = 0 -> +inf
  if (p < 1.0) kl += (1 - p) * std::log((1 - p) / (1 - q));  // q = 1 -> +inf
  return kl;
}

}  // namespace

KlBounds kl_bernoulli_bounds(double p_hat, std::size_t n, double beta) {
  if (n < 1) throw ContractError("kl_bernoulli_bounds needs n >= 1");
  if (beta < 0) throw ContractError("beta must be >= 0");
  p_hat = std::min(1.0, std::max(0.0, p_hat));
  if (beta == 0.0) return {p_hat, p_hat};
  const double target = beta / static_cast<double>(n);
  constexpr double kTol = 1e-9;

  KlBounds out{p_hat, p_hat};
  // Lower branch: KL(p || q) decreases towards p on [0, p].
  if (p_hat == 0.0 || kl_bernoulli(p_hat, 0.0) <= target) {
    out.lower = 0.0;
  } else {
    double lo = 0.0, hi = p_hat;
    while (hi - lo > kTol) {
      const double mid = 0.5 * (lo + hi);
      if (kl_bernoulli(p_hat, mid) > target) lo = mid;
      else hi = mid;
    }
    out.lower = hi;
  }
  // Upper branch on [p, 1].
  if (p_hat == 1.0 || kl_bernoulli(p_hat, 1.0) <= target) {
    out.upper = 1.0;
  } else {
    double lo = p_hat, hi = 1.0;
    while (hi - lo > kTol) {
      const double mid = 0.5 * (lo + hi);
      if (kl_bernoulli(p_hat, mid) > target) hi = mid;
      else lo = mid;
    }
    out.upper = lo;
  }
  return out;
}

double kl_lucb_beta(std::size_t t, std::size_t n_candidates, double delta) {
  constexpr double kPiSquared = 9.869604401089358;
  return std::log(kPiSquared * static_cast<double>(n_candidates) *
                  static_cast<double>(t) * static_cast<double>(t) /
                  (6.0 * delta));
}

// ---------------------------------------------------------------------------
// Anchors

namespace {

struct Candidate {
  std::vector<int> members;  // ascending
  std::size_t n = 0;
  std::size_t hits = 0;
  double coverage = 1.0;

  double mean() const {
    return n ? static_cast<double>(hits) / static_cast<double>(n) : 0.0;
  }
};

// Deterministic preference order for reporting: coverage desc, smaller
// conjunction, lexicographic ids.
bool preferred(const Candidate& a, const Candidate& b) {
  if (a.coverage != b.coverage) return a.coverage > b.coverage;
  if (a.members.size() != b.members.size())
    return a.members.size() < b.members.size();
  return a.members < b.members;
}

AnchorRule to_anchor(const Candidate& c, int label, double confidence,
                     bool converged) {
  AnchorRule anchor;
  anchor.members = c.members;
  anchor.label = label;
  anchor.precision_estimate = c.mean();
  anchor.coverage_estimate = c.coverage;
  anchor.confidence = confidence;
  anchor.converged = converged;
  return anchor;
}

}  // namespace

AnchorRule explain_anchors(ExplainContext& ctx, const AnchorConfig& config) {
  if (!(config.precision_target > 0 && config.precision_target <= 1))
    throw ContractError("precision target must lie in (0, 1]");
  if (!(config.confidence > 0 && config.confidence < 1))
    throw ContractError("confidence delta must lie in (0, 1)");
  if (config.beam_width < 1) throw ContractError("beam width must be >= 1");
  if (config.batch < 1) throw ContractError("batch must be >= 1");

  const std::size_t d = ctx.d();
  const int fx = ctx.explained_label();
  const std::size_t max_size =
      config.max_anchor_size == 0 ? d : std::min(config.max_anchor_size, d);
  Rng rng = rng_fork(ctx.seed(), 0xa4c);

  // Fixed pool for coverage estimation under D_x.
  constexpr std::size_t kCoveragePool = 1024;
  PerturbPolicy pool_policy = ctx.policy();
  pool_policy.strategy = Strategy::Bernoulli;
  pool_policy.conditioning.clear();
  const auto pool = perturb::sample_bitvectors(d, kCoveragePool, pool_policy, rng);
  auto coverage_of = [&pool](const std::vector<int>& members) {
    std::size_t covered = 0;
    for (const auto& z : pool) {
      bool all = true;
      for (int id : members)
        if (!z[static_cast<std::size_t>(id)]) {
          all = false;
          break;
        }
      covered += all;
    }
    return static_cast<double>(covered) / static_cast<double>(pool.size());
  };

  bool out_of_budget = false;
  auto sample_arm = [&](Candidate& c, std::size_t count) {
    if (out_of_budget) return false;
    PerturbPolicy policy = ctx.policy();
    policy.strategy = Strategy::AnchorConditional;
    policy.conditioning = c.members;
    auto zs = perturb::sample_bitvectors(d, count, policy, rng);
    std::vector<perturb::EvaluatedSample> results;
    try {
      results = ctx.evaluate(zs);
    } catch (const BudgetError&) {
      out_of_budget = true;
      return false;
    }
    for (const auto& r : results) {
      ++c.n;
      c.hits += r.label == fx;
    }
    return true;
  };

  // Samples a candidate until its lower bound clears tau - eps (accepted)
  // or it is provably below tau, a cap is hit, or budget runs out.
  auto refine = [&](Candidate& c, std::size_t n_candidates) {
    std::size_t t = 1;
    while (!out_of_budget) {
      if (c.n == 0) {
        if (!sample_arm(c, config.batch)) return false;
        continue;
      }
      const double beta = kl_lucb_beta(t, n_candidates, config.confidence);
      const auto bounds = kl_bernoulli_bounds(c.mean(), c.n, beta);
      if (c.mean() >= config.precision_target) {
        if (bounds.lower > config.precision_target - config.tolerance)
          return true;
      } else if (bounds.upper < config.precision_target) {
        return false;
      }
      if (c.n >= config.max_refine_samples) return false;
      if (!sample_arm(c, config.batch)) return false;
      ++t;
    }
    return false;
  };

  // KL-LUCB top-B identification among one round's candidates.
  auto select_top = [&](std::vector<Candidate>& cands, std::size_t beam) {
    const std::size_t K = cands.size();
    beam = std::min(beam, K);
    for (auto& c : cands)
      if (c.n == 0 && !sample_arm(c, config.batch)) break;

    auto ranked = [&]() {
      std::vector<std::size_t> order(K);
      for (std::size_t i = 0; i < K; ++i) order[i] = i;
      std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (cands[a].mean() != cands[b].mean())
          return cands[a].mean() > cands[b].mean();
        return preferred(cands[a], cands[b]);
      });
      return order;
    };

    constexpr std::size_t kMaxLucbRounds = 400;
    for (std::size_t t = 1; t <= kMaxLucbRounds && !out_of_budget; ++t) {
      auto order = ranked();
      if (K <= beam) break;
      const double beta = kl_lucb_beta(t, K, config.confidence);
      // Weakest chosen arm vs strongest rejected arm.
      std::size_t lt = order[0];
      double lt_lb = 2.0;
      for (std::size_t i = 0; i < beam; ++i) {
        const auto& c = cands[order[i]];
        const double lb = kl_bernoulli_bounds(c.mean(), std::max<std::size_t>(c.n, 1), beta).lower;
        if (lb < lt_lb) {
          lt_lb = lb;
          lt = order[i];
        }
      }
      std::size_t ut = order[beam];
      double ut_ub = -1.0;
      for (std::size_t i = beam; i < K; ++i) {
        const auto& c = cands[order[i]];
        const double ub = kl_bernoulli_bounds(c.mean(), std::max<std::size_t>(c.n, 1), beta).upper;
        if (ub > ut_ub) {
          ut_ub = ub;
          ut = order[i];
        }
      }
      if (ut_ub - lt_lb < config.tolerance) break;
      sample_arm(cands[lt], config.batch);
      sample_arm(cands[ut], config.batch);
    }

    auto order = ranked();
    order.resize(beam);
    return order;
  };

  // Round 0: the empty anchor (precision of D_x itself).
  Candidate empty;
  empty.coverage = 1.0;
  Candidate best_effort = empty;
  bool have_effort = false;
  if (refine(empty, 1)) return to_anchor(empty, fx, config.confidence, true);
  best_effort = empty;
  have_effort = empty.n > 0;

  std::vector<Candidate> beam{empty};
  for (std::size_t size = 1; size <= max_size && !out_of_budget; ++size) {
    std::set<std::vector<int>> seen;
    std::vector<Candidate> cands;
    for (const auto& parent : beam) {
      for (std::size_t j = 0; j < d; ++j) {
        const int id = static_cast<int>(j);
        if (std::binary_search(parent.members.begin(), parent.members.end(), id))
          continue;
        std::vector<int> members = parent.members;
        members.insert(std::lower_bound(members.begin(), members.end(), id), id);
        if (!seen.insert(members).second) continue;
        Candidate c;
        c.members = std::move(members);
        c.coverage = coverage_of(c.members);
        cands.push_back(std::move(c));
      }
    }
    if (cands.empty()) break;

    auto top = select_top(cands, config.beam_width);

    // Probe the selected candidates for acceptance, best coverage first.
    std::sort(top.begin(), top.end(), [&](std::size_t a, std::size_t b) {
      return preferred(cands[a], cands[b]);
    });
    std::vector<Candidate> accepted;
    for (auto idx : top) {
      if (refine(cands[idx], cands.size())) accepted.push_back(cands[idx]);
      if (!have_effort || cands[idx].mean() > best_effort.mean() ||
          (cands[idx].mean() == best_effort.mean() &&
           preferred(cands[idx], best_effort))) {
        best_effort = cands[idx];
        have_effort = true;
      }
      if (out_of_budget) break;
    }
    if (!accepted.empty()) {
      std::sort(accepted.begin(), accepted.end(), preferred);
      return to_anchor(accepted.front(), fx, config.confidence, true);
    }

    std::vector<Candidate> next;
    next.reserve(top.size());
    for (auto idx : top) next.push_back(cands[idx]);
    beam = std::move(next);
  }

  return to_anchor(best_effort, fx, config.confidence, false);
}

// ---------------------------------------------------------------------------
// Genetic neighborhood

std::vector<BitVector> genetic_neighborhood(ExplainContext& ctx,
                                            const LoreConfig& config, Rng& rng) {
  if (config.population < 4 || config.population % 2 != 0)
    throw ContractError("population must be even and >= 4");
  if (config.ngen < 1) throw ContractError("ngen must be >= 1");

  const std::size_t d = ctx.d();
  const int fx = ctx.explained_label();
  const std::size_t half = config.population / 2;

  auto random_pop = [&] {
    std::vector<BitVector> pop;
    pop.reserve(half);
    for (std::size_t i = 0; i < half; ++i) {
      std::vector<std::uint8_t> bits(d);
      for (auto& b : bits) b = rng_bernoulli(rng, 0.5);
      pop.emplace_back(std::move(bits));
    }
    return pop;
  };

  // Fitness: label objective + closeness to the all-ones vector.
  auto fitness_of = [&](const std::vector<BitVector>& pop, bool want_same) {
    auto evaluated = ctx.evaluate(pop);
    std::vector<double> fit(pop.size());
    for (std::size_t i = 0; i < pop.size(); ++i) {
      const bool same = evaluated[i].label == fx;
      const double objective = (want_same == same) ? 1.0 : 0.0;
      fit[i] = objective +
               static_cast<double>(pop[i].popcount()) / static_cast<double>(d);
    }
    return fit;
  };

  auto evolve = [&](std::vector<BitVector> pop, bool want_same) {
    for (std::size_t gen = 0; gen < config.ngen; ++gen) {
      const auto fit = fitness_of(pop, want_same);
      auto tournament = [&]() -> const BitVector& {
        std::size_t best = rng_index(rng, pop.size());
        for (int k = 1; k < 3; ++k) {
          const std::size_t i = rng_index(rng, pop.size());
          if (fit[i] > fit[best]) best = i;
        }
        return pop[best];
      };
      std::vector<BitVector> next;
      next.reserve(half);
      while (next.size() < half) {
        auto c1 = tournament().raw();
        auto c2 = tournament().raw();
        if (d >= 2 && rng_bernoulli(rng, config.crossover_p)) {
          std::size_t a = rng_index(rng, d + 1);
          std::size_t b = rng_index(rng, d + 1);
          if (a > b) std::swap(a, b);
          for (std::size_t i = a; i < b; ++i) std::swap(c1[i], c2[i]);
        }
        for (auto* child : {&c1, &c2})
          for (auto& bit : *child)
            if (rng_bernoulli(rng, config.mutation_p)) bit = !bit;
        next.emplace_back(std::move(c1));
        if (next.size() < half) next.emplace_back(std::move(c2));
      }
      pop = std::move(next);
    }
    return pop;
  };

  auto pop_same = evolve(random_pop(), true);
  auto pop_diff = evolve(random_pop(), false);

  std::vector<BitVector> out;
  out.reserve(config.population + 1);
  for (auto& z : pop_same) out.push_back(std::move(z));
  for (auto& z : pop_diff) out.push_back(std::move(z));
  out.push_back(BitVector::ones(d));
  return out;
}

// ---------------------------------------------------------------------------
// Decision tree

namespace {

double gini(const std::map<int, std::size_t>& counts, std::size_t total) {
  double impurity = 1.0;
  for (const auto& [label, count] : counts) {
    const double p = static_cast<double>(count) / static_cast<double>(total);
    impurity -= p * p;
  }
  return impurity;
}

int majority_label(const std::map<int, std::size_t>& counts,
                   std::optional<int> prefer_label) {
  std::size_t best = 0;
  for (const auto& [label, count] : counts) best = std::max(best, count);
  if (prefer_label) {
    auto it = counts.find(*prefer_label);
    if (it != counts.end() && it->second == best) return *prefer_label;
  }
  for (const auto& [label, count] : counts)  // ascending label order
    if (count == best) return label;
  return 0;
}

}  // namespace

DecisionTree DecisionTree::fit(
    const std::vector<std::pair<BitVector, int>>& samples,
    const TreeConfig& config, std::optional<int> prefer_label) {
  if (samples.size() < 2)
    throw ContractError("decision tree needs at least 2 samples");
  const std::size_t d = samples[0].first.size();
  for (const auto& [z, label] : samples)
    if (z.size() != d) throw ContractError("sample bitvector lengths differ");

  const std::size_t max_depth = config.max_depth == 0 ? d : config.max_depth;
  const std::size_t min_leaf = std::max<std::size_t>(1, config.min_leaf);

  DecisionTree tree;
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;

  // Recursive builder; `used` bits are never retested along a path.
  std::function<int(std::vector<std::size_t>&, std::vector<char>&, std::size_t)>
      build = [&](std::vector<std::size_t>& idx, std::vector<char>& used,
                  std::size_t depth) -> int {
    std::map<int, std::size_t> counts;
    for (auto i : idx) ++counts[samples[i].second];

    TreeNode node;
    node.count = idx.size();
    node.label = majority_label(counts, prefer_label);
    const bool pure = counts.size() == 1;

    int best_bit = -1;
    double best_decrease = -1.0;
    if (!pure && depth < max_depth) {
      const double parent_gini = gini(counts, idx.size());
      for (std::size_t bit = 0; bit < d; ++bit) {
        if (used[bit]) continue;
        std::map<int, std::size_t> left, right;
        std::size_t nl = 0, nr = 0;
        for (auto i : idx) {
          if (samples[i].first[bit]) {
            ++right[samples[i].second];
            ++nr;
          } else {
            ++left[samples[i].second];
            ++nl;
          }
        }
        if (nl < min_leaf || nr < min_leaf) continue;
        const double decrease =
            parent_gini -
            (static_cast<double>(nl) * gini(left, nl) +
             static_cast<double>(nr) * gini(right, nr)) /
                static_cast<double>(idx.size());
        if (decrease > best_decrease) {  // ascending scan keeps the first tie
          best_decrease = decrease;
          best_bit = static_cast<int>(bit);
        }
      }
    }

    const int node_id = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back(node);
    if (best_bit < 0) return node_id;

    std::vector<std::size_t> left_idx, right_idx;
    for (auto i : idx) {
      if (samples[i].first[static_cast<std::size_t>(best_bit)])
        right_idx.push_back(i);
      else
        left_idx.push_back(i);
    }
    used[static_cast<std::size_t>(best_bit)] = 1;
    tree.nodes_[static_cast<std::size_t>(node_id)].bit = best_bit;
    const int left_id = build(left_idx, used, depth + 1);
    tree.nodes_[static_cast<std::size_t>(node_id)].left = left_id;
    const int right_id = build(right_idx, used, depth + 1);
    tree.nodes_[static_cast<std::size_t>(node_id)].right = right_id;
    used[static_cast<std::size_t>(best_bit)] = 0;
    return node_id;
  };

  std::vector<char> used(d, 0);
  build(all, used, 0);
  return tree;
}

int DecisionTree::classify(const BitVector& z) const {
  if (nodes_.empty()) throw ContractError("classify on an empty tree");
  const TreeNode* node = &nodes_[0];
  while (!node->is_leaf()) {
    if (static_cast<std::size_t>(node->bit) >= z.size())
      throw ContractError("tree tests a bit outside the vector");
    node = &nodes_[static_cast<std::size_t>(
        z[static_cast<std::size_t>(node->bit)] ? node->right : node->left)];
  }
  return node->label;
}

std::size_t DecisionTree::leaf_count() const {
  std::size_t n = 0;
  for (const auto& node : nodes_) n += node.is_leaf();
  return n;
}

std::size_t DecisionTree::depth() const {
  std::function<std::size_t(int)> walk = [&](int id) -> std::size_t {
    const auto& node = nodes_[static_cast<std::size_t>(id)];
    if (node.is_leaf()) return 0;
    return 1 + std::max(walk(node.left), walk(node.right));
  };
  return nodes_.empty() ? 0 : walk(0);
}

// ---------------------------------------------------------------------------
// Rule extraction

RuleSet extract_rules(const DecisionTree& tree, const BitVector& x_bits,
                      std::size_t max_counterfactuals) {
  if (tree.empty()) throw ContractError("extract_rules needs a non-empty tree");
  const auto& nodes = tree.nodes();

  // x's root-to-leaf path.
  Rule factual;
  {
    const TreeNode* node = &nodes[0];
    while (!node->is_leaf()) {
      const auto bit = static_cast<std::size_t>(node->bit);
      if (bit >= x_bits.size())
        throw ContractError("tree tests a bit outside the vector");
      if (x_bits[bit]) {
        factual.positive.push_back(node->bit);
        node = &nodes[static_cast<std::size_t>(node->right)];
      } else {
        factual.negative.push_back(node->bit);
        node = &nodes[static_cast<std::size_t>(node->left)];
      }
    }
    factual.label = node->label;
    std::sort(factual.positive.begin(), factual.positive.end());
    std::sort(factual.negative.begin(), factual.negative.end());
  }

  // Every other-label leaf yields a counterfactual path rule.
  struct Scored {
    std::size_t changes;
    Rule rule;
  };
  std::vector<Scored> scored;
  std::vector<int> pos, neg;
  std::function<void(int)> walk = [&](int id) {
    const auto& node = nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      if (node.label == factual.label) return;
      Rule rule;
      rule.positive = pos;
      rule.negative = neg;
      rule.label = node.label;
      std::sort(rule.positive.begin(), rule.positive.end());
      std::sort(rule.negative.begin(), rule.negative.end());
      std::size_t changes = 0;
      for (int b : rule.positive) changes += !x_bits[static_cast<std::size_t>(b)];
      for (int b : rule.negative) changes += x_bits[static_cast<std::size_t>(b)];
      scored.push_back({changes, std::move(rule)});
      return;
    }
    neg.push_back(node.bit);
    walk(node.left);
    neg.pop_back();
    pos.push_back(node.bit);
    walk(node.right);
    pos.pop_back();
  };
  walk(0);

  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) {
    if (a.changes != b.changes) return a.changes < b.changes;
    const auto asize = a.rule.positive.size() + a.rule.negative.size();
    const auto bsize = b.rule.positive.size() + b.rule.negative.size();
    if (asize != bsize) return asize < bsize;
    if (a.rule.positive != b.rule.positive) return a.rule.positive < b.rule.positive;
    return a.rule.negative < b.rule.negative;
  });

  RuleSet out;
  out.factual = std::move(factual);
  for (const auto& s : scored) {
    if (out.counterfactuals.size() >= max_counterfactuals) break;
    out.counterfactuals.push_back(s.rule);
  }
  return out;
}

RuleSet explain_lore(ExplainContext& ctx, const LoreConfig& config) {
  Rng rng = rng_fork(ctx.seed(), 0x10e5);
  auto neighborhood = genetic_neighborhood(ctx, config, rng);
  auto evaluated = ctx.evaluate(neighborhood);

  std::vector<std::pair<BitVector, int>> samples;
  samples.reserve(evaluated.size());
  for (const auto& s : evaluated) samples.emplace_back(s.z, s.label);

  auto tree = DecisionTree::fit(samples, config.tree, ctx.explained_label());
  return extract_rules(tree, BitVector::ones(ctx.d()), config.max_counterfactuals);
}

}  // namespace pex::explainers
