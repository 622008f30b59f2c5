#pragma once

#include <array>
#include <functional>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "pex/adapters.hpp"
#include "pex/bitvector.hpp"
#include "pex/concepts.hpp"
#include "pex/core.hpp"
#include "pex/image.hpp"
#include "pex/rng.hpp"

namespace pex::perturb {

inline constexpr const char* kEmptySentinel = "<EMPTY>";

enum class Strategy { Bernoulli, SizeStratified, AnchorConditional };

std::string to_string(Strategy s);

struct ImageFill {
  enum class Mode { MeanColor, FixedColor };
  Mode mode = Mode::MeanColor;
  std::array<std::uint8_t, 3> color{127, 127, 127};
};

struct PerturbPolicy {
  Strategy strategy = Strategy::Bernoulli;
  double q = 0.5;                 // P(bit = 1) for bernoulli-style draws
  std::vector<int> conditioning;  // forced-on ids for anchor-conditional
  std::string mask_token = "[MASK]";
  ImageFill image_fill;
  std::uint64_t seed = 0;
};

void validate_policy(const PerturbPolicy& policy);

// Draws n predicate representations. Deterministic given the rng state.
std::vector<BitVector> sample_bitvectors(std::size_t d, std::size_t n,
                                         const PerturbPolicy& policy, Rng& rng);
// Convenience overload seeding a fresh stream from policy.seed.
std::vector<BitVector> sample_bitvectors(std::size_t d, std::size_t n,
                                         const PerturbPolicy& policy);

// ---------------------------------------------------------------------------
// Realizers (predicate representation -> model input)

// Kept tokens stay verbatim, dropped tokens become the mask token; the
// all-zeros vector realizes to the literal "<EMPTY>" sentinel.
std::string realize_text_feature(const std::vector<std::string>& tokens,
                                 const BitVector& z, const PredicateSpace& space,
                                 const PerturbPolicy& policy);

// Cache for generated concept realizations, keyed by (instance id,
// bitvector). Safe for concurrent use; identical keys must map to identical
// values under replay, so last-writer-wins is harmless.
class RealizationCache {
public:
  std::optional<std::string> lookup(const std::string& instance_id,
                                    const BitVector& z) const;
  void store(const std::string& instance_id, const BitVector& z,
             const std::string& text);

private:
  mutable std::mutex mu_;
  std::unordered_map<std::string, std::string> entries_;
};

struct ConceptRealizeOptions {
  std::string instance_id;
  std::string task_context;       // dataset/domain description for the prompt
  bool negate_dropped = false;    // mention dropped concepts as exclusions
  RealizationCache* cache = nullptr;
};

// The exact prompt realize_text_concept sends for a given bitvector; also
// used to record replay fixtures.
std::string concept_generation_prompt(const BitVector& z,
                                      const concepts::ConceptSet& concept_set,
                                      const adapters::TemplateStore& templates,
                                      const ConceptRealizeOptions& options);

// Asks the generation client for a sentence satisfying the kept concepts.
// The all-ones vector short-circuits to the original text without a call.
std::string realize_text_concept(const std::string& x, const BitVector& z,
                                 const concepts::ConceptSet& concept_set,
                                 const adapters::ChatClient& client,
                                 const adapters::TemplateStore& templates,
                                 const ConceptRealizeOptions& options);

// Kept segments stay, dropped segments are filled per policy.
Image realize_image(const Image& image, const BitVector& z,
                    const concepts::SegmentMap& segments,
                    const PerturbPolicy& policy);

// ---------------------------------------------------------------------------
// Sample evaluation

struct SampleBatch {
  std::vector<BitVector> bitvectors;
  std::vector<adapters::Input> realized;  // aligned with bitvectors
  std::string provenance;                 // sampler strategy + seed
};

struct EvaluatedSample {
  BitVector z;
  int label = 0;
  std::optional<double> score;  // see evaluate_samples / ExplainContext
  std::optional<std::vector<double>> probabilities;
  std::string error;  // per-sample backend failure

  bool ok() const { return error.empty(); }
};

// One result per sample in submission order. Duplicate bitvectors are
// evaluated once and share the result. `score` is p_f(label|input) when the
// backend exposes probabilities.
std::vector<EvaluatedSample> evaluate_samples(const adapters::ModelHandle& model,
                                              const SampleBatch& batch,
                                              std::size_t jobs = 1);

using Realizer = std::function<adapters::Input(const BitVector&)>;

// Everything a learner needs: the space, a realizer, the model, the
// perturbation policy for D_x, a seed, and a memoizing evaluator. The
// explained label f(x) comes from evaluating the all-ones vector at
// construction.
class ExplainContext {
public:
  ExplainContext(const PredicateSpace& space, adapters::ModelHandle model,
                 Realizer realizer, PerturbPolicy policy, std::uint64_t seed,
                 std::size_t jobs = 1,
                 std::size_t eval_budget = std::numeric_limits<std::size_t>::max());

  const PredicateSpace& space() const { return space_; }
  std::size_t d() const { return space_.d(); }
  const adapters::ModelHandle& model() const { return model_; }
  const PerturbPolicy& policy() const { return policy_; }
  std::uint64_t seed() const { return seed_; }
  std::size_t jobs() const { return jobs_; }

  int explained_label() const { return explained_label_; }
  std::optional<double> explained_score() const { return explained_score_; }
  bool has_probabilities() const { return model_.exposes_probabilities; }

  // Memoized evaluation; `score` is p_f(explained label | input) here.
  // Unique backend evaluations count against the budget.
  std::vector<EvaluatedSample> evaluate(const std::vector<BitVector>& zs);
  EvaluatedSample evaluate_one(const BitVector& z);

  // Draws from D_x (the context policy).
  std::vector<BitVector> draw(std::size_t n, Rng& rng) const;

  std::size_t evals_used() const { return evals_used_; }
  std::size_t eval_budget() const { return eval_budget_; }
  std::size_t budget_remaining() const {
    return eval_budget_ > evals_used_ ? eval_budget_ - evals_used_ : 0;
  }

private:
  PredicateSpace space_;
  adapters::ModelHandle model_;
  Realizer realizer_;
  PerturbPolicy policy_;
  std::uint64_t seed_;
  std::size_t jobs_;
  std::size_t eval_budget_;
  std::size_t evals_used_ = 0;

  int explained_label_ = 0;
  std::optional<double> explained_score_;

  std::unordered_map<BitVector, EvaluatedSample, BitVectorHash> cache_;
  std::mutex cache_mu_;
};

// Splits [0, n) into chunks handled by up to `jobs` threads; fn(i) must be
// independent across i. Results land in submission order.
void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn);

}  // namespace pex::perturb
