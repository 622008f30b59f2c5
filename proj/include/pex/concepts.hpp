#pragma once

#include <optional>
#include <string>
#include <vector>

#include "pex/adapters.hpp"
#include "pex/core.hpp"
#include "pex/image.hpp"

namespace pex::concepts {

// Per-pixel segment labels, ids normalized to 0..segment_count-1.
struct SegmentMap {
  int width = 0;
  int height = 0;
  std::vector<int> labels;  // row-major, one id per pixel

  std::size_t segment_count = 0;

  std::size_t pixel_count() const {
    return static_cast<std::size_t>(width) * static_cast<std::size_t>(height);
  }
};

// Relabels arbitrary ids to contiguous 0..s-1 (order of first appearance in
// row-major scan).
SegmentMap normalize_segment_map(int width, int height, std::vector<int> labels);

struct Concept {
  std::string name;
  std::string description;
  std::string response_guide;  // optional questionnaire text
};

struct ConceptSet {
  std::vector<Concept> concepts;
  std::string task_context;
};

inline constexpr std::size_t kMaxConcepts = 64;
inline constexpr int kDefaultConceptCount = 10;

void validate_concept_set(const ConceptSet& set);

struct SegmentParams {
  int cell = 16;        // block size in pixels
  double merge_tol = 10.0;  // Euclidean RGB distance below which blocks merge
};

// Deterministic stand-in for off-the-shelf superpixel tooling: tiles the
// image into cell x cell blocks, merges 4-adjacent blocks whose mean colors
// are within merge_tol, then relabels contiguously.
SegmentMap segment_image(const Image& image, const SegmentParams& params);

// Reads a segment map from an 8-bit grayscale label PNG (value = id,
// 255 = unlabeled -> catch-all background segment) or a run-length JSON file
// {"width","height","runs":[[label,length],...]} in row-major order.
SegmentMap ingest_segment_map(const std::string& path);
SegmentMap ingest_segment_map(const std::string& path, int expect_width,
                              int expect_height);

// Whitespace tokenization, punctuation kept attached to its word.
std::vector<std::string> tokenize(const std::string& text);

// Asks a concept-extraction client for exactly n task-relevant concepts.
// The reply must be a JSON array of objects with "Concept Name" and
// "Concept Description" (questionnaire fields are kept as metadata when
// present).
ConceptSet extract_text_concepts(const std::string& instance,
                                 const std::string& task_context, int n,
                                 const adapters::ChatClient& client,
                                 const adapters::TemplateStore& templates,
                                 const std::string& examples = "");

// Predicate-space constructors for the three sources.
PredicateSpace build_predicate_space(const std::vector<std::string>& tokens,
                                     const std::string& instance_ref);
PredicateSpace build_predicate_space(const SegmentMap& segments,
                                     const std::string& instance_ref);
PredicateSpace build_predicate_space(const ConceptSet& concepts,
                                     const std::string& instance_ref);

}  // namespace pex::concepts
