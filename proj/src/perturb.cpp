#include "pex/perturb.hpp"

#include <algorithm>
#include <numeric>
#include <thread>

namespace pex::perturb {

using adapters::Input;

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::Bernoulli: return "bernoulli";
    case Strategy::SizeStratified: return "size-stratified";
    default: return "anchor-conditional";
  }
}

void validate_policy(const PerturbPolicy& policy) {
  if (!(policy.q > 0.0 && policy.q < 1.0))
    throw ContractError("perturbation q must lie in (0, 1)");
  if (policy.mask_token.empty())
    throw ContractError("mask token must be non-empty");
}

std::vector<BitVector> sample_bitvectors(std::size_t d, std::size_t n,
                                         const PerturbPolicy& policy, Rng& rng) {
  if (d < 1) throw ContractError("sample_bitvectors needs d >= 1");
  if (n < 1) throw ContractError("sample_bitvectors needs n >= 1");
  validate_policy(policy);

  std::vector<BitVector> out;
  out.reserve(n);
  switch (policy.strategy) {
    case Strategy::Bernoulli: {
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<std::uint8_t> bits(d);
        for (auto& b : bits) b = rng_bernoulli(rng, policy.q);
        out.emplace_back(std::move(bits));
      }
      break;
    }
    case Strategy::SizeStratified: {
      // Interior coalition sizes for the Shapley kernel: s uniform in
      // {1..d-1}, then a uniform subset of that size.
      if (d < 2)
        throw ContractError("size-stratified sampling needs d >= 2");
      std::vector<std::size_t> idx(d);
      for (std::size_t k = 0; k < n; ++k) {
        const std::size_t s = 1 + rng_index(rng, d - 1);
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        // Partial Fisher-Yates: the first s entries become the subset.
        for (std::size_t i = 0; i < s; ++i) {
          std::size_t j = i + rng_index(rng, d - i);
          std::swap(idx[i], idx[j]);
        }
        std::vector<std::uint8_t> bits(d, 0);
        for (std::size_t i = 0; i < s; ++i) bits[idx[i]] = 1;
        out.emplace_back(std::move(bits));
      }
      break;
    }
    case Strategy::AnchorConditional: {
      for (int id : policy.conditioning)
        if (id < 0 || static_cast<std::size_t>(id) >= d)
          throw ContractError("conditioning id out of range");
      for (std::size_t k = 0; k < n; ++k) {
        std::vector<std::uint8_t> bits(d);
        for (auto& b : bits) b = rng_bernoulli(rng, policy.q);
        for (int id : policy.conditioning) bits[static_cast<std::size_t>(id)] = 1;
        out.emplace_back(std::move(bits));
      }
      break;
    }
  }
  return out;
}

std::vector<BitVector> sample_bitvectors(std::size_t d, std::size_t n,
                                         const PerturbPolicy& policy) {
  Rng rng = rng_fork(policy.seed, 0x5a3);
  return sample_bitvectors(d, n, policy, rng);
}

// ---------------------------------------------------------------------------
// Realizers

std::string realize_text_feature(const std::vector<std::string>& tokens,
                                 const BitVector& z, const PredicateSpace& space,
                                 const PerturbPolicy& policy) {
  if (space.kind() != SpaceKind::Feature)
    throw ContractError("realize_text_feature needs a feature-level space");
  if (z.size() != space.d() || tokens.size() != space.d())
    throw ContractError("bitvector/token dimension mismatch");
  if (z.popcount() == 0) return kEmptySentinel;
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i > 0) out += ' ';
    out += z[i] ? tokens[i] : policy.mask_token;
  }
  return out;
}

std::optional<std::string> RealizationCache::lookup(const std::string& instance_id,
                                                    const BitVector& z) const {
  std::lock_guard<std::mutex> lock(mu_);
  auto it = entries_.find(instance_id + "\x1f" + z.str());
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void RealizationCache::store(const std::string& instance_id, const BitVector& z,
                             const std::string& text) {
  std::lock_guard<std::mutex> lock(mu_);
  entries_[instance_id + "\x1f" + z.str()] = text;
}

namespace {

std::map<std::string, std::string> generation_slots(
    const BitVector& z, const concepts::ConceptSet& concept_set,
    const ConceptRealizeOptions& options) {
  const std::size_t d = concept_set.concepts.size();
  std::string kept;
  std::string dropped;
  std::size_t kept_n = 0, dropped_n = 0;
  for (std::size_t i = 0; i < d; ++i) {
    const auto& c = concept_set.concepts[i];
    if (z[i]) {
      kept += std::to_string(++kept_n) + ". " + c.description + "\n";
    } else {
      dropped += std::to_string(++dropped_n) + ". " + c.description + "\n";
    }
  }
  if (kept.empty()) kept = "(none; produce a neutral sentence)\n";

  std::string exclusions;
  if (options.negate_dropped && !dropped.empty()) {
    exclusions =
        "The generated sentence must NOT satisfy the following concepts:\n" +
        dropped;
  }
  return {{"task", options.task_context},
          {"concepts", kept},
          {"exclusions", exclusions}};
}

}  // namespace

std::string concept_generation_prompt(const BitVector& z,
                                      const concepts::ConceptSet& concept_set,
                                      const adapters::TemplateStore& templates,
                                      const ConceptRealizeOptions& options) {
  return templates.render("generation", generation_slots(z, concept_set, options));
}

std::string realize_text_concept(const std::string& x, const BitVector& z,
                                 const concepts::ConceptSet& concept_set,
                                 const adapters::ChatClient& client,
                                 const adapters::TemplateStore& templates,
                                 const ConceptRealizeOptions& options) {
  const std::size_t d = concept_set.concepts.size();
  if (z.size() != d) throw ContractError("bitvector/concept dimension mismatch");
  if (z.popcount() == d) return x;  // all predicates hold on x itself

  if (options.cache) {
    if (auto hit = options.cache->lookup(options.instance_id, z)) return *hit;
  }

  nlohmann::json reply;
  try {
    reply = adapters::templated_chat(
        client, templates, "generation", generation_slots(z, concept_set, options),
        adapters::kDefaultChatAttempts, [](const nlohmann::json& j) {
          if (!j.is_object() || !j.contains("answer") || !j["answer"].is_string())
            return std::string("reply lacks a string \"answer\" field");
          return std::string();
        });
  } catch (const TransportError&) {
    throw;
  } catch (const ProtocolError& e) {
    throw RealizationError(std::string("concept realization failed: ") + e.what());
  }
  std::string text = reply["answer"].get<std::string>();
  if (options.cache) options.cache->store(options.instance_id, z, text);
  return text;
}

Image realize_image(const Image& image, const BitVector& z,
                    const concepts::SegmentMap& segments,
                    const PerturbPolicy& policy) {
  if (segments.width != image.width || segments.height != image.height)
    throw ContractError("segment map dimensions do not match the image");
  if (z.size() != segments.segment_count)
    throw ContractError("bitvector/segment dimension mismatch");

  const std::array<std::uint8_t, 3> fill =
      policy.image_fill.mode == ImageFill::Mode::MeanColor ? image.mean_color()
                                                           : policy.image_fill.color;
  Image out = image;
  for (std::size_t px = 0; px < segments.labels.size(); ++px) {
    if (z[static_cast<std::size_t>(segments.labels[px])]) continue;
    out.rgb[3 * px] = fill[0];
    out.rgb[3 * px + 1] = fill[1];
    out.rgb[3 * px + 2] = fill[2];
  }
  return out;
}

// ---------------------------------------------------------------------------
// Evaluation

void parallel_for(std::size_t n, std::size_t jobs,
                  const std::function<void(std::size_t)>& fn) {
  jobs = std::max<std::size_t>(1, std::min(jobs, n));
  if (jobs == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::thread> threads;
  threads.reserve(jobs);
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (std::size_t t = 0; t < jobs; ++t) {
    threads.emplace_back([&, t] {
      const std::size_t lo = n * t / jobs;
      const std::size_t hi = n * (t + 1) / jobs;
      try {
        for (std::size_t i = lo; i < hi; ++i) fn(i);
      } catch (...) {
        std::lock_guard<std::mutex> lock(err_mu);
        if (!first_error) first_error = std::current_exception();
      }
    });
  }
  for (auto& th : threads) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

namespace {

EvaluatedSample to_sample(const BitVector& z, const adapters::Prediction& p,
                          bool score_from_label) {
  EvaluatedSample s;
  s.z = z;
  if (!p.ok()) {
    s.error = p.error;
    return s;
  }
  s.label = p.label;
  s.probabilities = p.probabilities;
  if (score_from_label && p.probabilities)
    s.score = (*p.probabilities)[static_cast<std::size_t>(p.label)];
  return s;
}

}  // namespace

std::vector<EvaluatedSample> evaluate_samples(const adapters::ModelHandle& model,
                                              const SampleBatch& batch,
                                              std::size_t jobs) {
  if (batch.bitvectors.size() != batch.realized.size())
    throw ContractError("sample batch bitvectors/realized misaligned");
  if (batch.bitvectors.empty()) return {};

  // Dedupe identical bitvectors: one backend evaluation per distinct key.
  std::unordered_map<BitVector, std::size_t, BitVectorHash> first_index;
  std::vector<std::size_t> unique_indices;
  for (std::size_t i = 0; i < batch.bitvectors.size(); ++i) {
    if (first_index.emplace(batch.bitvectors[i], unique_indices.size()).second)
      unique_indices.push_back(i);
  }

  std::vector<adapters::Prediction> unique_predictions(unique_indices.size());
  const std::size_t chunks = std::max<std::size_t>(1, std::min(jobs, unique_indices.size()));
  parallel_for(chunks, chunks, [&](std::size_t t) {
    const std::size_t lo = unique_indices.size() * t / chunks;
    const std::size_t hi = unique_indices.size() * (t + 1) / chunks;
    if (lo == hi) return;
    std::vector<Input> inputs;
    inputs.reserve(hi - lo);
    for (std::size_t k = lo; k < hi; ++k)
      inputs.push_back(batch.realized[unique_indices[k]]);
    auto preds = adapters::predict_batch(model, inputs);
    for (std::size_t k = lo; k < hi; ++k) unique_predictions[k] = preds[k - lo];
  });

  std::vector<EvaluatedSample> out;
  out.reserve(batch.bitvectors.size());
  for (std::size_t i = 0; i < batch.bitvectors.size(); ++i) {
    const std::size_t u = first_index.at(batch.bitvectors[i]);
    out.push_back(to_sample(batch.bitvectors[i], unique_predictions[u],
                            /*score_from_label=*/true));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ExplainContext

ExplainContext::ExplainContext(const PredicateSpace& space,
                               adapters::ModelHandle model, Realizer realizer,
                               PerturbPolicy policy, std::uint64_t seed,
                               std::size_t jobs, std::size_t eval_budget)
    : space_(space),
      model_(std::move(model)),
      realizer_(std::move(realizer)),
      policy_(std::move(policy)),
      seed_(seed),
      jobs_(std::max<std::size_t>(1, jobs)),
      eval_budget_(eval_budget) {
  validate_policy(policy_);
  // f(x): the all-ones vector stands for the original input.
  auto base = evaluate({BitVector::ones(space_.d())});
  if (!base[0].ok())
    throw ProtocolError("model failed on the original input: " + base[0].error);
  explained_label_ = base[0].label;
  if (base[0].probabilities)
    explained_score_ =
        (*base[0].probabilities)[static_cast<std::size_t>(explained_label_)];
  // Rescore the cached entry now that the explained label is known.
  std::lock_guard<std::mutex> lock(cache_mu_);
  for (auto& [z, sample] : cache_) {
    if (sample.ok() && sample.probabilities)
      sample.score =
          (*sample.probabilities)[static_cast<std::size_t>(explained_label_)];
  }
}

std::vector<EvaluatedSample> ExplainContext::evaluate(
    const std::vector<BitVector>& zs) {
  // Collect cache misses (deduped) under the lock.
  std::vector<BitVector> misses;
  {
    std::lock_guard<std::mutex> lock(cache_mu_);
    std::unordered_map<BitVector, char, BitVectorHash> pending;
    for (const auto& z : zs) {
      if (z.size() != space_.d())
        throw ContractError("bitvector length does not match the space");
      if (cache_.count(z) == 0 && pending.emplace(z, 1).second)
        misses.push_back(z);
    }
  }

  if (!misses.empty()) {
    if (evals_used_ + misses.size() > eval_budget_)
      throw BudgetError("evaluation budget exhausted (" +
                        std::to_string(eval_budget_) + " backend calls)");
    evals_used_ += misses.size();

    SampleBatch batch;
    batch.provenance =
        to_string(policy_.strategy) + ":" + std::to_string(seed_);
    batch.bitvectors = misses;
    batch.realized.resize(misses.size());
    parallel_for(misses.size(), jobs_, [&](std::size_t i) {
      batch.realized[i] = realizer_(misses[i]);
    });
    auto evaluated = evaluate_samples(model_, batch, jobs_);
    std::lock_guard<std::mutex> lock(cache_mu_);
    for (auto& sample : evaluated) {
      if (sample.ok() && sample.probabilities)
        sample.score =
            (*sample.probabilities)[static_cast<std::size_t>(explained_label_)];
      else
        sample.score.reset();
      cache_[sample.z] = sample;
    }
  }

  std::vector<EvaluatedSample> out;
  out.reserve(zs.size());
  std::lock_guard<std::mutex> lock(cache_mu_);
  for (const auto& z : zs) {
    const auto& sample = cache_.at(z);
    if (!sample.ok())
      throw ProtocolError("backend failed on sample " + z.str() + ": " +
                          sample.error);
    out.push_back(sample);
  }
  return out;
}

EvaluatedSample ExplainContext::evaluate_one(const BitVector& z) {
  return evaluate({z})[0];
}

std::vector<BitVector> ExplainContext::draw(std::size_t n, Rng& rng) const {
  return sample_bitvectors(space_.d(), n, policy_, rng);
}

}  // namespace pex::perturb
