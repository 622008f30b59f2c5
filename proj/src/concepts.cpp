#include "pex/concepts.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace pex::concepts {

namespace fs = std::filesystem;
using nlohmann::json;

SegmentMap normalize_segment_map(int width, int height, std::vector<int> labels) {
  if (width <= 0 || height <= 0)
    throw InputError("segment map needs positive dimensions");
  if (labels.size() != static_cast<std::size_t>(width) * height)
    throw InputError("segment label count does not match width*height");
  std::map<int, int> remap;
  for (int& l : labels) {
    auto [it, inserted] = remap.emplace(l, static_cast<int>(remap.size()));
    l = it->second;
    (void)inserted;
  }
  SegmentMap out;
  out.width = width;
  out.height = height;
  out.labels = std::move(labels);
  out.segment_count = remap.size();
  return out;
}

void validate_concept_set(const ConceptSet& set) {
  if (set.concepts.empty()) throw InputError("concept set is empty");
  if (set.concepts.size() > kMaxConcepts)
    throw InputError("concept set exceeds the configured maximum of " +
                     std::to_string(kMaxConcepts));
  std::set<std::string> names;
  for (const auto& c : set.concepts) {
    if (c.name.empty() || c.description.empty())
      throw InputError("concepts need a non-empty name and description");
    if (!names.insert(c.name).second)
      throw InputError("duplicate concept name '" + c.name + "'");
  }
}

// ---------------------------------------------------------------------------
// Built-in segmenter

namespace {

struct UnionFind {
  std::vector<int> parent;

  explicit UnionFind(int n) : parent(n) {
    std::iota(parent.begin(), parent.end(), 0);
  }
  int find(int a) {
    while (parent[a] != a) {
      parent[a] = parent[parent[a]];
      a = parent[a];
    }
    return a;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

SegmentMap segment_image(const Image& image, const SegmentParams& params) {
  if (image.width <= 0 || image.height <= 0 || image.rgb.empty())
    throw InputError("cannot segment an empty image");
  if (params.cell < 1) throw ContractError("segmenter cell size must be >= 1");

  const int bw = (image.width + params.cell - 1) / params.cell;
  const int bh = (image.height + params.cell - 1) / params.cell;
  const int blocks = bw * bh;

  // Mean color per block.
  std::vector<std::array<double, 3>> mean(blocks, {0, 0, 0});
  std::vector<double> count(blocks, 0);
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const int b = (y / params.cell) * bw + (x / params.cell);
      const std::uint8_t* px = image.at(x, y);
      for (int c = 0; c < 3; ++c) mean[b][c] += px[c];
      count[b] += 1;
    }
  }
  for (int b = 0; b < blocks; ++b)
    for (int c = 0; c < 3; ++c) mean[b][c] /= count[b];

  auto close_enough = [&](int a, int b) {
    double d2 = 0;
    for (int c = 0; c < 3; ++c) {
      double diff = mean[a][c] - mean[b][c];
      d2 += diff * diff;
    }
    return std::sqrt(d2) <= params.merge_tol;
  };

  UnionFind uf(blocks);
  for (int by = 0; by < bh; ++by) {
    for (int bx = 0; bx < bw; ++bx) {
      const int b = by * bw + bx;
      if (bx + 1 < bw && close_enough(b, b + 1)) uf.unite(b, b + 1);
      if (by + 1 < bh && close_enough(b, b + bw)) uf.unite(b, b + bw);
    }
  }

  std::vector<int> labels(image.pixel_count());
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x)
      labels[static_cast<std::size_t>(y) * image.width + x] =
          uf.find((y / params.cell) * bw + (x / params.cell));
  return normalize_segment_map(image.width, image.height, std::move(labels));
}

// ---------------------------------------------------------------------------
// External segment map ingestion

namespace {

inline constexpr int kUnlabeled = 255;

SegmentMap ingest_label_image(const std::string& path) {
  GrayImage img = read_gray_png(path);
  std::vector<int> labels(img.pixels.size());
  for (std::size_t i = 0; i < img.pixels.size(); ++i) {
    const int v = img.pixels[i];
    // Unlabeled pixels share one catch-all background segment.
    labels[i] = v == kUnlabeled ? -1 : v;
  }
  return normalize_segment_map(img.width, img.height, std::move(labels));
}

SegmentMap ingest_rle_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open segment file " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path + ": invalid JSON at byte " + std::to_string(e.byte) +
                     ": " + e.what());
  }
  int width = 0, height = 0;
  try {
    width = j.at("width").get<int>();
    height = j.at("height").get<int>();
  } catch (const json::exception& e) {
    throw ParseError(path + ": missing width/height: " + e.what());
  }
  if (!j.contains("runs") || !j["runs"].is_array())
    throw ParseError(path + ": missing runs array");

  const std::size_t expected = static_cast<std::size_t>(width) * height;
  std::vector<int> labels;
  labels.reserve(expected);
  for (const auto& run : j["runs"]) {
    if (!run.is_array() || run.size() != 2)
      throw ParseError(path + ": each run must be [label, length]");
    const int label = run[0].get<int>();
    const std::int64_t length = run[1].get<std::int64_t>();
    if (length <= 0) throw ParseError(path + ": run length must be positive");
    if (labels.size() + static_cast<std::size_t>(length) > expected)
      throw ParseError(path + ": runs cover more than width*height pixels");
    labels.insert(labels.end(), static_cast<std::size_t>(length),
                  label == kUnlabeled ? -1 : label);
  }
  if (labels.size() != expected)
    throw ParseError(path + ": runs cover " + std::to_string(labels.size()) +
                     " of " + std::to_string(expected) + " pixels");
  return normalize_segment_map(width, height, std::move(labels));
}

}  // namespace

SegmentMap ingest_segment_map(const std::string& path) {
  const std::string ext = fs::path(path).extension().string();
  if (ext == ".png") return ingest_label_image(path);
  if (ext == ".json") return ingest_rle_json(path);
  throw InputError("segment maps must be .png label images or .json RLE files, got '" +
                   ext + "'");
}

SegmentMap ingest_segment_map(const std::string& path, int expect_width,
                              int expect_height) {
  SegmentMap map = ingest_segment_map(path);
  if (map.width != expect_width || map.height != expect_height)
    throw InputError("segment map is " + std::to_string(map.width) + "x" +
                     std::to_string(map.height) + " but the image is " +
                     std::to_string(expect_width) + "x" +
                     std::to_string(expect_height));
  return map;
}

// ---------------------------------------------------------------------------
// Tokenization

std::vector<std::string> tokenize(const std::string& text) {
  std::vector<std::string> tokens;
  std::string current;
  for (char c : text) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!current.empty()) tokens.push_back(std::move(current));
      current.clear();
    } else {
      current += c;
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

// ---------------------------------------------------------------------------
// Concept extraction

namespace {

Concept concept_from_json(const json& j) {
  Concept c;
  c.name = j.value("Concept Name", "");
  c.description = j.value("Concept Description", "");
  // Questionnaire fields ride along as metadata.
  json extra = json::object();
  for (const auto& key :
       {"Concept Question", "Possible Responses", "Response Guide",
        "Response Mapping"}) {
    if (j.contains(key)) extra[key] = j.at(key);
  }
  if (!extra.empty()) c.response_guide = extra.dump();
  return c;
}

}  // namespace

ConceptSet extract_text_concepts(const std::string& instance,
                                 const std::string& task_context, int n,
                                 const adapters::ChatClient& client,
                                 const adapters::TemplateStore& templates,
                                 const std::string& examples) {
  if (n < 1) throw ContractError("concept count must be >= 1");
  json reply;
  try {
    reply = adapters::templated_chat(
        client, templates, "concept_extraction",
        {{"task", task_context},
         {"input", instance},
         {"examples", examples},
         {"n", std::to_string(n)}},
        adapters::kDefaultChatAttempts, [](const json& j) {
          if (j.is_array()) return std::string();
          if (j.is_object() && j.contains("concepts") && j["concepts"].is_array())
            return std::string();
          return std::string("reply is not a concept list");
        });
  } catch (const TransportError&) {
    throw;  // retryable, caller's call
  } catch (const ProtocolError& e) {
    throw ExtractionError(std::string("concept extraction failed: ") + e.what());
  }

  const json* list = reply.is_array() ? &reply : &reply["concepts"];

  ConceptSet set;
  set.task_context = task_context;
  for (const auto& jc : *list) {
    Concept c = concept_from_json(jc);
    if (c.name.empty() || c.description.empty())
      throw ExtractionError("concept entry lacks a name or description: " +
                            jc.dump());
    set.concepts.push_back(std::move(c));
    if (set.concepts.size() == static_cast<std::size_t>(n)) break;
  }
  if (set.concepts.size() < static_cast<std::size_t>(n))
    throw ExtractionError("insufficient concepts: got " +
                          std::to_string(set.concepts.size()) + ", need " +
                          std::to_string(n));
  try {
    validate_concept_set(set);
  } catch (const Error& e) {
    throw ExtractionError(std::string("extracted concepts invalid: ") + e.what());
  }
  return set;
}

// ---------------------------------------------------------------------------
// Predicate-space constructors

PredicateSpace build_predicate_space(const std::vector<std::string>& tokens,
                                     const std::string& instance_ref) {
  if (tokens.empty()) throw InputError("token list is empty");
  std::vector<PredicateDescriptor> preds;
  preds.reserve(tokens.size());
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    PredicateDescriptor p;
    p.id = static_cast<int>(i);
    p.name = tokens[i];
    p.description = "token " + std::to_string(i) + " is '" + tokens[i] + "'";
    p.feature_indices = {i};
    preds.push_back(std::move(p));
  }
  return PredicateSpace(SpaceKind::Feature, std::move(preds), instance_ref,
                        tokens.size());
}

PredicateSpace build_predicate_space(const SegmentMap& segments,
                                     const std::string& instance_ref) {
  if (segments.segment_count == 0) throw InputError("segment map is empty");
  std::vector<PredicateDescriptor> preds(segments.segment_count);
  for (std::size_t i = 0; i < preds.size(); ++i) {
    preds[i].id = static_cast<int>(i);
    preds[i].name = "segment " + std::to_string(i);
    preds[i].description =
        "pixels of segment " + std::to_string(i) + " keep their original values";
  }
  for (std::size_t px = 0; px < segments.labels.size(); ++px)
    preds[static_cast<std::size_t>(segments.labels[px])].feature_indices.push_back(px);
  return PredicateSpace(SpaceKind::Feature, std::move(preds), instance_ref,
                        segments.pixel_count());
}

PredicateSpace build_predicate_space(const ConceptSet& concepts,
                                     const std::string& instance_ref) {
  validate_concept_set(concepts);
  std::vector<PredicateDescriptor> preds;
  preds.reserve(concepts.concepts.size());
  for (std::size_t i = 0; i < concepts.concepts.size(); ++i) {
    const auto& c = concepts.concepts[i];
    PredicateDescriptor p;
    p.id = static_cast<int>(i);
    p.name = c.name;
    p.description = c.description;
    p.metadata = c.response_guide;
    preds.push_back(std::move(p));
  }
  return PredicateSpace(SpaceKind::Concept, std::move(preds), instance_ref);
}

}  // namespace pex::concepts
