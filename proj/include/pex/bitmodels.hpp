#pragma once

#include <functional>
#include <optional>
#include <string>
#include <utility>

#include "pex/adapters.hpp"
#include "pex/core.hpp"
#include "pex/perturb.hpp"

// Models defined directly over predicate representations. Inputs travel as
// 0/1 strings, so the whole realize/predict pipeline is exercised while the
// ground truth stays analytically known. Used by the oracle self-checks and
// the test suites.
namespace pex::bitmodels {

using LabelFn = std::function<int(const BitVector&)>;
using ScoreFn = std::function<double(const BitVector&)>;  // p(label=1 | z)

inline adapters::ModelHandle make_handle(LabelFn label_fn,
                                         std::optional<ScoreFn> prob1_fn,
                                         std::string id) {
  adapters::ModelHandle handle;
  handle.id = std::move(id);
  handle.task = adapters::Task::TextBinary;
  handle.num_classes = 2;
  handle.exposes_probabilities = prob1_fn.has_value();
  handle.backend = adapters::make_inprocess_backend(
      [label_fn = std::move(label_fn), prob1_fn = std::move(prob1_fn)](
          const adapters::Input& input) {
        const auto& text = std::get<std::string>(input);
        const BitVector z = BitVector::from_string(text);
        adapters::Prediction p;
        p.label = label_fn(z);
        if (prob1_fn) {
          const double p1 = (*prob1_fn)(z);
          p.probabilities = std::vector<double>{1.0 - p1, p1};
        }
        return p;
      });
  return handle;
}

inline perturb::Realizer bit_realizer() {
  return [](const BitVector& z) { return adapters::Input{z.str()}; };
}

inline PredicateSpace bit_space(std::size_t d,
                                const std::string& instance_ref = "bits") {
  std::vector<PredicateDescriptor> preds(d);
  for (std::size_t i = 0; i < d; ++i) {
    preds[i].id = static_cast<int>(i);
    preds[i].name = "bit " + std::to_string(i);
    preds[i].description = "input bit " + std::to_string(i) + " is set";
    preds[i].feature_indices = {i};
  }
  return PredicateSpace(SpaceKind::Feature, std::move(preds), instance_ref, d);
}

// Conjunction model: label 1 iff all bits in `members` are set. Probabilities
// are hard 0/1.
inline adapters::ModelHandle planted_conjunction(std::vector<int> members,
                                                 const std::string& id) {
  auto label_fn = [members](const BitVector& z) {
    for (int i : members)
      if (!z[static_cast<std::size_t>(i)]) return 0;
    return 1;
  };
  auto prob_fn = [label_fn](const BitVector& z) {
    return static_cast<double>(label_fn(z));
  };
  return make_handle(label_fn, prob_fn, id);
}

inline perturb::ExplainContext make_context(
    std::size_t d, adapters::ModelHandle handle, std::uint64_t seed,
    perturb::PerturbPolicy policy = {},
    std::size_t eval_budget = std::numeric_limits<std::size_t>::max()) {
  policy.seed = seed;
  return perturb::ExplainContext(bit_space(d), std::move(handle), bit_realizer(),
                                 std::move(policy), seed, /*jobs=*/1, eval_budget);
}

}  // namespace pex::bitmodels
