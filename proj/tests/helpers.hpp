#pragma once

// Shared scaffolding for the CLI and acceptance suites: temp workspaces,
// config files, and replay fixture corpora for the concept-level pipeline.

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "pex/adapters.hpp"
#include "pex/bitvector.hpp"
#include "pex/concepts.hpp"
#include "pex/perturb.hpp"

namespace testhelpers {

namespace fs = std::filesystem;

inline std::string fresh_dir(const std::string& tag) {
  auto dir = fs::temp_directory_path() / ("pex_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir.string();
}

inline void write_file(const std::string& path, const std::string& contents) {
  fs::create_directories(fs::path(path).parent_path());
  std::ofstream out(path, std::ios::binary);
  out << contents;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline const char* kReviewText = "I love this movie so much";

inline void write_instances(const std::string& dir) {
  write_file(dir + "/instances.json",
             std::string("[{\"id\": \"review-1\", \"text\": \"") + kReviewText +
                 "\"}]\n");
}

// Baseline config for a feature-level run against the built-in sentiment
// model. Extra sections are appended verbatim.
inline std::string write_config(const std::string& dir,
                                const std::string& extra = "") {
  std::string config =
      "[run]\n"
      "seed = 7\n"
      "[model]\n"
      "backend = \"builtin:keyword-sentiment\"\n"
      "[data]\n"
      "instances = \"instances.json\"\n"
      "[lore]\n"
      "population = 60\n" +
      extra;
  const std::string path = dir + "/config.toml";
  write_file(path, config);
  write_instances(dir);
  return path;
}

// The ten concepts served by the extraction fixture. Descriptions drive the
// generation fixtures: concepts 0-4 add a positive word, 5-9 a negative one.
inline pex::concepts::ConceptSet demo_concepts(const std::string& task) {
  pex::concepts::ConceptSet set;
  set.task_context = task;
  const char* names[10] = {
      "Strong Acting",       "Engaging Plot",    "Beautiful Visuals",
      "Memorable Soundtrack", "Emotional Impact", "Poor Pacing",
      "Weak Dialogue",       "Predictable Story", "Low Production Value",
      "Unconvincing Characters"};
  for (int i = 0; i < 10; ++i) {
    pex::concepts::Concept c;
    c.name = names[i];
    c.description = std::string("the review mentions ") + names[i];
    set.concepts.push_back(std::move(c));
  }
  return set;
}

// The deterministic "generated sentence" for a kept-concept pattern.
inline std::string generated_sentence(const pex::BitVector& z) {
  std::string sentence;
  for (std::size_t i = 0; i < z.size(); ++i) {
    if (!z[i]) continue;
    if (!sentence.empty()) sentence += ' ';
    sentence += i < 5 ? "good" : "bad";
  }
  if (sentence.empty()) sentence = "plain";
  return sentence;
}

// Writes the extraction fixture plus a generation fixture for every
// bitvector of the 10-concept space (the all-ones case never calls out).
inline void build_concept_fixtures(const std::string& dir,
                                   const std::string& templates_dir,
                                   const std::string& task,
                                   const std::string& instance_text) {
  pex::adapters::TemplateStore templates(templates_dir);

  pex::adapters::ChatClient concept_client;
  concept_client.id = "concept";
  concept_client.fixture_dir = dir + "/fixtures/concept";
  const std::string extraction_prompt =
      templates.render("concept_extraction", {{"task", task},
                                              {"input", instance_text},
                                              {"examples", ""},
                                              {"n", "10"}});
  auto set = demo_concepts(task);
  nlohmann::json reply = nlohmann::json::array();
  for (const auto& c : set.concepts)
    reply.push_back({{"Concept Name", c.name},
                     {"Concept Description", c.description}});
  pex::adapters::write_chat_fixture(concept_client, extraction_prompt,
                                    reply.dump());

  pex::adapters::ChatClient generation_client;
  generation_client.id = "generation";
  generation_client.fixture_dir = dir + "/fixtures/generation";
  pex::perturb::ConceptRealizeOptions options;
  options.instance_id = "review-1";
  options.task_context = task;
  for (std::uint64_t mask = 0; mask + 1 < (1u << 10); ++mask) {
    const auto z = pex::BitVector::from_mask(10, mask);
    const std::string prompt =
        pex::perturb::concept_generation_prompt(z, set, templates, options);
    nlohmann::json answer{{"thoughts", "kept concepts listed"},
                          {"answer", generated_sentence(z)}};
    pex::adapters::write_chat_fixture(generation_client, prompt,
                                      answer.dump() + " ###");
  }
}

// Config for the concept-level pipeline with replay fixtures.
inline std::string write_concept_config(const std::string& dir,
                                        const std::string& templates_dir,
                                        const std::string& task) {
  std::string config =
      "[run]\n"
      "seed = 7\n"
      "[model]\n"
      "backend = \"builtin:keyword-sentiment\"\n"
      "[data]\n"
      "instances = \"instances.json\"\n"
      "[concepts]\n"
      "n = 10\n"
      "task_context = \"" + task + "\"\n"
      "[clients]\n"
      "templates_dir = \"" + templates_dir + "\"\n"
      "[clients.concept]\n"
      "fixtures = \"fixtures/concept\"\n"
      "[clients.generation]\n"
      "fixtures = \"fixtures/generation\"\n"
      "[lore]\n"
      "population = 60\n";
  const std::string path = dir + "/config.toml";
  write_file(path, config);
  write_instances(dir);
  return path;
}

}  // namespace testhelpers
