#include "pex/cli.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <set>
#include <sstream>

#include "pex/adapters.hpp"
#include "pex/bitmodels.hpp"
#include "pex/concepts.hpp"
#include "pex/config.hpp"
#include "pex/core.hpp"
#include "pex/explainers.hpp"
#include "pex/metrics.hpp"
#include "pex/perturb.hpp"
#include "pex/serialize.hpp"
#include "pex/unified.hpp"

namespace pex::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

// ---------------------------------------------------------------------------
// Effective configuration: built-in defaults overlaid by the config file and the
// --seed flag. Runtime-only knobs (jobs, offline, paths) stay out so output
// files are identical no matter how the run was scheduled.

Config effective_config(const std::string& path,
                        std::optional<std::uint64_t> seed_override) {
  Config file = Config::parse_file(path);
  // Defaults the code would apply anyway are materialized so the echoed
  // config states them explicitly.
  auto def_int = [&](const char* key, std::int64_t v) {
    if (!file.has(key)) file.set_int(key, v);
  };
  auto def_str = [&](const char* key, const std::string& v) {
    if (!file.has(key)) file.set_string(key, v);
  };
  def_int("run.seed", 0);
  def_str("perturb.mask_token", "[MASK]");
  def_str("perturb.image_fill", "mean");
  def_int("lime.n_samples", 1000);
  def_int("kshap.n_samples", 1000);
  def_int("kshap.exhaustive_threshold", 4096);
  def_int("anchors.beam_width", 4);
  def_int("anchors.batch", 16);
  def_int("lore.ngen", 5);
  def_int("lore.population", 100);
  def_int("metrics.n", 1000);
  def_int("concepts.n", 10);
  auto def_double = [&](const char* key, double v) {
    if (!file.has(key)) file.set_double(key, v);
  };
  def_double("perturb.q", 0.5);
  def_double("lime.kernel_width", 0.25);
  def_double("lime.ridge", 1.0);
  def_double("anchors.precision_target", 0.95);
  def_double("anchors.tolerance", 0.10);
  def_double("anchors.confidence", 0.05);
  def_double("lore.crossover_p", 0.7);
  def_double("lore.mutation_p", 0.2);
  def_double("unified.threshold", 0.5);
  if (seed_override)
    file.set_int("run.seed", static_cast<std::int64_t>(*seed_override));
  return file;
}

// ---------------------------------------------------------------------------
// Instances

struct Instance {
  std::string id;
  std::string text;
  std::optional<Image> image;
  std::string segments_path;  // external label map, optional
};

std::vector<Instance> load_instances(const Config& cfg,
                                     const std::string& config_path) {
  const std::string rel = cfg.require_string("data.instances");
  const fs::path base = fs::path(config_path).parent_path();
  const fs::path path = rel.front() == '/' ? fs::path(rel) : base / rel;
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open instances file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded() || !j.is_array())
    throw ConfigError(path.string() + " must hold a JSON array of instances");

  std::vector<Instance> out;
  for (const auto& ji : j) {
    Instance inst;
    inst.id = ji.at("id").get<std::string>();
    if (ji.contains("text")) {
      inst.text = ji.at("text").get<std::string>();
    } else if (ji.contains("image")) {
      const fs::path img = path.parent_path() / ji.at("image").get<std::string>();
      inst.image = read_image_png(img.string());
      if (ji.contains("segments"))
        inst.segments_path =
            (path.parent_path() / ji.at("segments").get<std::string>()).string();
    } else {
      throw ConfigError("instance '" + inst.id + "' needs text or image");
    }
    out.push_back(std::move(inst));
  }
  return out;
}

const Instance& find_instance(const std::vector<Instance>& instances,
                              const std::string& ref) {
  for (const auto& inst : instances)
    if (inst.id == ref) return inst;
  throw ConfigError("instance '" + ref + "' not found in the instances file");
}

// ---------------------------------------------------------------------------
// Built-in backends

int keyword_score(const std::string& text) {
  static const std::set<std::string> positive{
      "good", "great", "love", "loved", "loves", "excellent", "amazing",
      "wonderful", "best", "enjoyable", "fun", "brilliant", "superb",
      "beautiful", "fantastic", "stunning", "masterpiece", "charming"};
  static const std::set<std::string> negative{
      "bad", "awful", "terrible", "hate", "hated", "hates", "boring",
      "worst", "poor", "dull", "mess", "disappointing", "weak", "flat",
      "lifeless", "clumsy", "tedious", "falls"};
  int score = 0;
  for (auto token : concepts::tokenize(text)) {
    std::size_t b = 0, e = token.size();
    while (b < e && std::ispunct(static_cast<unsigned char>(token[b]))) ++b;
    while (e > b && std::ispunct(static_cast<unsigned char>(token[e - 1]))) --e;
    std::string word = token.substr(b, e - b);
    std::transform(word.begin(), word.end(), word.begin(),
                   [](unsigned char c) { return std::tolower(c); });
    if (positive.count(word)) ++score;
    else if (negative.count(word)) --score;
  }
  return score;
}

adapters::ModelHandle make_keyword_sentiment_handle() {
  adapters::ModelHandle handle;
  handle.id = "builtin:keyword-sentiment";
  handle.task = adapters::Task::TextBinary;
  handle.num_classes = 2;
  handle.exposes_probabilities = true;
  handle.backend = adapters::make_inprocess_backend([](const adapters::Input& input) {
    const auto& text = std::get<std::string>(input);
    const double p1 = 1.0 / (1.0 + std::exp(-static_cast<double>(keyword_score(text))));
    adapters::Prediction p;
    p.label = p1 >= 0.5 ? 1 : 0;
    p.probabilities = std::vector<double>{1.0 - p1, p1};
    return p;
  });
  return handle;
}

adapters::ModelHandle make_planted_conjunction_handle(const std::vector<int>& bits) {
  adapters::ModelHandle handle;
  handle.id = "builtin:planted-conjunction";
  handle.task = adapters::Task::TextBinary;
  handle.num_classes = 2;
  handle.exposes_probabilities = true;
  handle.backend = adapters::make_inprocess_backend([bits](const adapters::Input& input) {
    const auto& text = std::get<std::string>(input);
    const auto tokens = concepts::tokenize(text);
    int label = 1;
    for (int b : bits) {
      if (b < 0 || static_cast<std::size_t>(b) >= tokens.size() ||
          tokens[static_cast<std::size_t>(b)] != "1") {
        label = 0;
        break;
      }
    }
    adapters::Prediction p;
    p.label = label;
    p.probabilities = std::vector<double>{1.0 - label, 1.0 * label};
    return p;
  });
  return handle;
}

adapters::ModelHandle make_mean_brightness_handle() {
  adapters::ModelHandle handle;
  handle.id = "builtin:mean-brightness";
  handle.task = adapters::Task::ImageMulticlass;
  handle.num_classes = 2;
  handle.exposes_probabilities = true;
  handle.backend = adapters::make_inprocess_backend([](const adapters::Input& input) {
    const auto& img = std::get<Image>(input);
    double luma = 0.0;
    for (std::size_t i = 0; i < img.rgb.size(); i += 3)
      luma += 0.299 * img.rgb[i] + 0.587 * img.rgb[i + 1] + 0.114 * img.rgb[i + 2];
    luma /= static_cast<double>(img.pixel_count()) * 255.0;
    adapters::Prediction p;
    p.label = luma >= 0.5 ? 1 : 0;
    p.probabilities = std::vector<double>{1.0 - luma, luma};
    return p;
  });
  return handle;
}

adapters::ChatClient client_from_config(const Config& cfg, const std::string& section,
                                        const std::string& config_path) {
  adapters::ChatClient client;
  client.id = cfg.get_string(section + ".id", section);
  client.endpoint = cfg.get_string(section + ".endpoint", "");
  std::string fixtures = cfg.get_string(section + ".fixtures", "");
  if (!fixtures.empty() && fixtures.front() != '/')
    fixtures = (fs::path(config_path).parent_path() / fixtures).string();
  client.fixture_dir = fixtures;
  client.live_enabled = cfg.get_bool(section + ".live", false);
  client.model = cfg.get_string(section + ".model", "default");
  client.temperature = cfg.get_double(section + ".temperature", 0.0);
  client.api_key_env = cfg.get_string(section + ".api_key_env", "");
  return client;
}

std::string templates_dir(const Config& cfg, const std::string& config_path) {
  std::string dir = cfg.get_string("clients.templates_dir", "templates");
  if (!dir.empty() && dir.front() != '/')
    dir = (fs::path(config_path).parent_path() / dir).string();
  return dir;
}

adapters::ModelHandle resolve_model(const Config& cfg,
                                    const std::string& config_path) {
  const std::string backend = cfg.require_string("model.backend");
  if (backend == "builtin:keyword-sentiment") return make_keyword_sentiment_handle();
  if (backend == "builtin:planted-conjunction") {
    auto bits64 = cfg.get_int_list("model.planted_bits", {});
    if (bits64.empty())
      throw ConfigError("builtin:planted-conjunction needs model.planted_bits");
    std::vector<int> bits(bits64.begin(), bits64.end());
    return make_planted_conjunction_handle(bits);
  }
  if (backend == "builtin:mean-brightness") return make_mean_brightness_handle();

  adapters::ModelHandle handle;
  handle.id = backend;
  handle.task = cfg.get_string("model.task", "text-binary") == "image-multiclass"
                    ? adapters::Task::ImageMulticlass
                    : adapters::Task::TextBinary;
  handle.num_classes = static_cast<int>(cfg.get_int("model.classes", 2));
  handle.exposes_probabilities = cfg.get_bool("model.probabilities", false);

  if (backend.rfind("http://", 0) == 0 || backend.rfind("https://", 0) == 0) {
    handle.backend = adapters::make_http_backend(backend);
  } else if (backend.rfind("subprocess:", 0) == 0) {
    handle.backend = adapters::make_subprocess_backend(backend.substr(11));
  } else if (backend.rfind("replay:", 0) == 0) {
    std::string dir = backend.substr(7);
    if (!dir.empty() && dir.front() != '/')
      dir = (fs::path(config_path).parent_path() / dir).string();
    handle.backend = adapters::make_replay_backend(dir);
  } else if (backend == "llm") {
    auto client = client_from_config(cfg, "clients.model", config_path);
    adapters::TemplateStore templates(templates_dir(cfg, config_path));
    handle.backend = adapters::make_llm_classifier_backend(
        std::move(client), std::move(templates),
        cfg.get_string("model.template", "sentiment"));
    handle.exposes_probabilities = false;
  } else {
    throw ConfigError("unknown model backend '" + backend + "'");
  }

  // Optional persistent prediction cache (append-only JSONL).
  std::string cache_path = cfg.get_string("model.cache", "");
  if (!cache_path.empty()) {
    if (cache_path.front() != '/')
      cache_path = (fs::path(config_path).parent_path() / cache_path).string();
    handle.backend = adapters::make_caching_backend(
        handle.backend, std::make_shared<adapters::PredictionCache>(cache_path),
        handle.id);
  }
  return handle;
}

// ---------------------------------------------------------------------------
// Perturbation policy and pipeline assembly

perturb::PerturbPolicy policy_from_config(const Config& cfg, std::uint64_t seed) {
  perturb::PerturbPolicy policy;
  policy.q = cfg.get_double("perturb.q", 0.5);
  policy.mask_token = cfg.get_string("perturb.mask_token", "[MASK]");
  const std::string fill = cfg.get_string("perturb.image_fill", "mean");
  if (fill == "mean") {
    policy.image_fill.mode = perturb::ImageFill::Mode::MeanColor;
  } else if (fill == "fixed") {
    policy.image_fill.mode = perturb::ImageFill::Mode::FixedColor;
    auto rgb = cfg.get_int_list("perturb.fill_color", {127, 127, 127});
    if (rgb.size() != 3) throw ConfigError("perturb.fill_color needs 3 values");
    for (int c = 0; c < 3; ++c) {
      if (rgb[c] < 0 || rgb[c] > 255)
        throw ConfigError("perturb.fill_color entries must lie in 0..255");
      policy.image_fill.color[static_cast<std::size_t>(c)] =
          static_cast<std::uint8_t>(rgb[static_cast<std::size_t>(c)]);
    }
  } else {
    throw ConfigError("perturb.image_fill must be 'mean' or 'fixed'");
  }
  policy.seed = seed;
  return policy;
}

struct Pipeline {
  Config cfg;
  std::string config_path;
  std::uint64_t seed = 0;
  std::size_t jobs = 1;
  adapters::ModelHandle model;
  std::vector<Instance> instances;
  std::shared_ptr<perturb::RealizationCache> realization_cache =
      std::make_shared<perturb::RealizationCache>();
};

Pipeline build_pipeline(const CommonOptions& common) {
  Pipeline p;
  p.config_path = common.config_path;
  p.cfg = effective_config(common.config_path, common.seed);
  p.seed = static_cast<std::uint64_t>(p.cfg.get_int("run.seed", 0));
  p.jobs = std::max<std::size_t>(1, common.jobs);
  adapters::set_offline(common.offline);
  p.model = resolve_model(p.cfg, p.config_path);
  p.instances = load_instances(p.cfg, p.config_path);
  return p;
}

struct SpaceAndRealizer {
  PredicateSpace space;
  perturb::Realizer realizer;
};

SpaceAndRealizer make_space(const Pipeline& p, const Instance& inst,
                            const std::string& level,
                            const perturb::PerturbPolicy& policy) {
  if (level != "feature" && level != "concept")
    throw ConfigError("level must be 'feature' or 'concept', got '" + level + "'");

  if (!inst.image) {
    // Text instance.
    if (level == "feature") {
      auto tokens = concepts::tokenize(inst.text);
      auto space = concepts::build_predicate_space(tokens, inst.id);
      auto realizer = [tokens, space, policy](const BitVector& z) {
        return adapters::Input{
            perturb::realize_text_feature(tokens, z, space, policy)};
      };
      return {space, realizer};
    }
    // Concept level: extraction client + generation client.
    auto concept_client =
        client_from_config(p.cfg, "clients.concept", p.config_path);
    adapters::TemplateStore templates(templates_dir(p.cfg, p.config_path));
    const std::string task_context = p.cfg.get_string(
        "concepts.task_context", "binary sentiment classification of movie reviews");
    const int n = static_cast<int>(p.cfg.get_int("concepts.n", 10));
    auto concept_set = concepts::extract_text_concepts(
        inst.text, task_context, n, concept_client, templates,
        p.cfg.get_string("concepts.examples", ""));
    auto space = concepts::build_predicate_space(concept_set, inst.id);

    auto generation_client =
        client_from_config(p.cfg, "clients.generation", p.config_path);
    perturb::ConceptRealizeOptions options;
    options.instance_id = inst.id;
    options.task_context = task_context;
    options.negate_dropped = p.cfg.get_bool("perturb.negate_dropped", false);
    auto cache = p.realization_cache;
    const std::string x = inst.text;
    auto realizer = [x, concept_set, generation_client, templates, options,
                     cache](const BitVector& z) {
      perturb::ConceptRealizeOptions opts = options;
      opts.cache = cache.get();
      return adapters::Input{perturb::realize_text_concept(
          x, z, concept_set, generation_client, templates, opts)};
    };
    return {space, realizer};
  }

  // Image instance: feature level segments from the built-in segmenter,
  // concept level from an external detector's label map.
  concepts::SegmentMap segments;
  if (level == "feature") {
    if (!inst.segments_path.empty()) {
      segments = concepts::ingest_segment_map(inst.segments_path,
                                              inst.image->width,
                                              inst.image->height);
    } else {
      concepts::SegmentParams params;
      params.cell = static_cast<int>(p.cfg.get_int("concepts.segment_cell", 16));
      params.merge_tol = p.cfg.get_double("concepts.segment_merge_tol", 10.0);
      segments = concepts::segment_image(*inst.image, params);
    }
  } else {
    if (inst.segments_path.empty())
      throw ConfigError("concept-level image explanation needs a 'segments' "
                        "label map for instance '" + inst.id + "'");
    segments = concepts::ingest_segment_map(inst.segments_path,
                                            inst.image->width,
                                            inst.image->height);
  }
  auto space = concepts::build_predicate_space(segments, inst.id);
  const Image image = *inst.image;
  auto realizer = [image, segments, policy](const BitVector& z) {
    return adapters::Input{perturb::realize_image(image, z, segments, policy)};
  };
  return {space, realizer};
}

perturb::ExplainContext make_context(const Pipeline& p,
                                     const SpaceAndRealizer& sr,
                                     const perturb::PerturbPolicy& policy) {
  const auto budget = p.cfg.get_int("run.eval_budget", 0);
  return perturb::ExplainContext(
      sr.space, p.model, sr.realizer, policy, p.seed, p.jobs,
      budget > 0 ? static_cast<std::size_t>(budget)
                 : std::numeric_limits<std::size_t>::max());
}

// ---------------------------------------------------------------------------
// Technique configs from the effective config

explainers::LimeConfig lime_config(const Config& cfg) {
  explainers::LimeConfig c;
  c.n_samples = static_cast<std::size_t>(cfg.get_int("lime.n_samples", 1000));
  c.kernel_width = cfg.get_double("lime.kernel_width", 0.25);
  c.ridge = cfg.get_double("lime.ridge", 1.0);
  return c;
}

explainers::ShapConfig shap_config(const Config& cfg) {
  explainers::ShapConfig c;
  c.n_samples = static_cast<std::size_t>(cfg.get_int("kshap.n_samples", 1000));
  c.exhaustive_threshold =
      static_cast<std::size_t>(cfg.get_int("kshap.exhaustive_threshold", 4096));
  return c;
}

explainers::AnchorConfig anchor_config(const Config& cfg) {
  explainers::AnchorConfig c;
  c.precision_target = cfg.get_double("anchors.precision_target", 0.95);
  c.tolerance = cfg.get_double("anchors.tolerance", 0.10);
  c.confidence = cfg.get_double("anchors.confidence", 0.05);
  c.beam_width = static_cast<std::size_t>(cfg.get_int("anchors.beam_width", 4));
  c.batch = static_cast<std::size_t>(cfg.get_int("anchors.batch", 16));
  c.max_anchor_size =
      static_cast<std::size_t>(cfg.get_int("anchors.max_anchor_size", 0));
  c.max_refine_samples =
      static_cast<std::size_t>(cfg.get_int("anchors.max_refine_samples", 10000));
  return c;
}

explainers::LoreConfig lore_config(const Config& cfg) {
  explainers::LoreConfig c;
  c.ngen = static_cast<std::size_t>(cfg.get_int("lore.ngen", 5));
  c.population = static_cast<std::size_t>(cfg.get_int("lore.population", 100));
  c.crossover_p = cfg.get_double("lore.crossover_p", 0.7);
  c.mutation_p = cfg.get_double("lore.mutation_p", 0.2);
  c.tree.max_depth = static_cast<std::size_t>(cfg.get_int("lore.tree_max_depth", 0));
  c.tree.min_leaf = static_cast<std::size_t>(cfg.get_int("lore.tree_min_leaf", 2));
  c.max_counterfactuals =
      static_cast<std::size_t>(cfg.get_int("lore.max_counterfactuals", 3));
  return c;
}

// ---------------------------------------------------------------------------
// Human-readable rendering

std::string predicate_name(const PredicateSpace& space, int id) {
  return space.predicate(static_cast<std::size_t>(id)).name;
}

void render_attribution(const PredicateSpace& space, const Attribution& attr,
                        std::ostream& out) {
  out << "  intercept: " << attr.intercept << "\n";
  std::vector<int> order(attr.d());
  for (std::size_t i = 0; i < attr.d(); ++i) order[i] = static_cast<int>(i);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const double wa = std::abs(attr.weights[static_cast<std::size_t>(a)]);
    const double wb = std::abs(attr.weights[static_cast<std::size_t>(b)]);
    if (wa != wb) return wa > wb;
    return a < b;
  });
  for (int id : order) {
    out << "  " << std::showpos << attr.weights[static_cast<std::size_t>(id)]
        << std::noshowpos << "  " << predicate_name(space, id) << "\n";
  }
}

std::string rule_text(const PredicateSpace& space, const Rule& rule) {
  if (rule.empty()) return "(always)";
  std::string text;
  for (int id : rule.positive) {
    if (!text.empty()) text += " AND ";
    text += predicate_name(space, id);
  }
  for (int id : rule.negative) {
    if (!text.empty()) text += " AND ";
    text += "NOT " + predicate_name(space, id);
  }
  return text;
}

void render_rules(const PredicateSpace& space, const RuleSet& rules,
                  std::ostream& out) {
  out << "  factual: IF " << rule_text(space, rules.factual) << " THEN label "
      << rules.factual.label << "\n";
  for (std::size_t i = 0; i < rules.counterfactuals.size(); ++i) {
    const auto& cf = rules.counterfactuals[i];
    out << "  counterfactual " << i + 1 << ": IF " << rule_text(space, cf)
        << " THEN label " << cf.label << "\n";
  }
}

void render_explanation(const Explanation& e, std::ostream& out) {
  out << "explanation (" << payload_kind(e.payload) << ", "
      << to_string(e.space.kind()) << "-level, d=" << e.space.d()
      << ", instance=" << e.space.instance_ref() << ")\n";
  if (const auto* attr = std::get_if<Attribution>(&e.payload)) {
    render_attribution(e.space, *attr, out);
  } else if (const auto* anchor = std::get_if<AnchorRule>(&e.payload)) {
    out << "  IF " << rule_text(e.space, anchor->as_rule()) << " THEN label "
        << anchor->label << "\n";
    out << "  precision " << anchor->precision_estimate << ", coverage "
        << anchor->coverage_estimate << ", delta " << anchor->confidence
        << (anchor->converged ? "" : " [unconverged]") << "\n";
  } else if (const auto* rules = std::get_if<RuleSet>(&e.payload)) {
    render_rules(e.space, *rules, out);
  } else if (const auto* u = std::get_if<UnifiedExplanation>(&e.payload)) {
    if (u->rules) render_rules(e.space, *u->rules, out);
    out << "  fallback attribution (threshold " << u->decision_threshold << "):\n";
    render_attribution(e.space, u->attribution, out);
  }
}

int exit_code_for(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Config:
    case ErrorKind::Input:
    case ErrorKind::Contract:
    case ErrorKind::Numerical:
      return kExitConfig;
    case ErrorKind::Unsupported:
      return kExitUnsupportedMetric;
    default:
      return kExitBackend;
  }
}

}  // namespace

// ---------------------------------------------------------------------------
// explain

int cmd_explain(const ExplainArgs& args, std::ostream& out, std::ostream& err) {
  try {
    Pipeline pipeline = build_pipeline(args.common);
    const Instance& inst = find_instance(pipeline.instances, args.instance_ref);
    auto policy = policy_from_config(pipeline.cfg, pipeline.seed);
    auto sr = make_space(pipeline, inst, args.level, policy);
    auto ctx = make_context(pipeline, sr, policy);

    ExplanationPayload payload;
    bool unconverged = false;
    if (args.technique == "lime") {
      payload = explainers::explain_lime(ctx, lime_config(pipeline.cfg));
    } else if (args.technique == "kshap") {
      payload = explainers::explain_kshap(ctx, shap_config(pipeline.cfg));
    } else if (args.technique == "anchors") {
      auto anchor = explainers::explain_anchors(ctx, anchor_config(pipeline.cfg));
      unconverged = !anchor.converged;
      payload = std::move(anchor);
    } else if (args.technique == "lore") {
      payload = explainers::explain_lore(ctx, lore_config(pipeline.cfg));
    } else if (args.technique == "unified") {
      auto rules = explainers::explain_lore(ctx, lore_config(pipeline.cfg));
      auto attr = explainers::explain_kshap(ctx, shap_config(pipeline.cfg));
      payload = unified::build_unified(
          rules, attr, pipeline.cfg.get_double("unified.threshold", 0.5));
    } else {
      throw ConfigError("unknown technique '" + args.technique + "'");
    }

    Explanation explanation{sr.space, std::move(payload)};
    json doc = to_json(explanation);
    doc["effective_config"] = pipeline.cfg.to_json();
    write_file_atomic(args.out_path, doc.dump(2) + "\n");

    render_explanation(explanation, out);
    out << "wrote " << args.out_path << "\n";
    if (unconverged) {
      err << "warning: anchor search ran out of budget before meeting the "
             "precision target; result flagged unconverged\n";
      return kExitUnconverged;
    }
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

// ---------------------------------------------------------------------------
// evaluate

namespace {

const Rule* rule_of(const ExplanationPayload& payload, Rule& storage) {
  if (const auto* anchor = std::get_if<AnchorRule>(&payload)) {
    storage = anchor->as_rule();
    return &storage;
  }
  if (const auto* rules = std::get_if<RuleSet>(&payload)) return &rules->factual;
  if (const auto* u = std::get_if<UnifiedExplanation>(&payload))
    return u->rules ? &u->rules->factual : nullptr;
  return nullptr;
}

const Attribution* attribution_of(const ExplanationPayload& payload) {
  if (const auto* attr = std::get_if<Attribution>(&payload)) return attr;
  if (const auto* u = std::get_if<UnifiedExplanation>(&payload))
    return &u->attribution;
  return nullptr;
}

}  // namespace

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err) {
  try {
    Pipeline pipeline = build_pipeline(args.common);
    auto policy = policy_from_config(pipeline.cfg, pipeline.seed);

    // The explanation either comes from a file or is computed on the spot.
    std::optional<Explanation> explanation;
    std::string level = args.level;
    std::string instance_ref = args.instance_ref;
    if (!args.explanation_path.empty()) {
      std::ifstream in(args.explanation_path);
      if (!in)
        throw ConfigError("cannot open explanation file " + args.explanation_path);
      json doc = json::parse(in, nullptr, false);
      if (doc.is_discarded())
        throw ParseError(args.explanation_path + " holds invalid JSON");
      explanation = explanation_from_json(doc);
      instance_ref = explanation->space.instance_ref();
      level = explanation->space.kind() == SpaceKind::Concept ? "concept" : "feature";
    }

    const Instance& inst = find_instance(pipeline.instances, instance_ref);
    auto sr = make_space(pipeline, inst, level, policy);
    auto ctx = make_context(pipeline, sr, policy);

    if (!explanation) {
      if (args.technique.empty())
        throw ConfigError("evaluate needs --explanation or --technique");
      if (args.technique == "lime")
        explanation = Explanation{sr.space,
                                  explainers::explain_lime(ctx, lime_config(pipeline.cfg))};
      else if (args.technique == "kshap")
        explanation = Explanation{sr.space,
                                  explainers::explain_kshap(ctx, shap_config(pipeline.cfg))};
      else if (args.technique == "anchors")
        explanation = Explanation{sr.space,
                                  explainers::explain_anchors(ctx, anchor_config(pipeline.cfg))};
      else if (args.technique == "lore")
        explanation = Explanation{sr.space,
                                  explainers::explain_lore(ctx, lore_config(pipeline.cfg))};
      else if (args.technique == "unified")
        explanation = Explanation{
            sr.space,
            unified::build_unified(
                explainers::explain_lore(ctx, lore_config(pipeline.cfg)),
                explainers::explain_kshap(ctx, shap_config(pipeline.cfg)),
                pipeline.cfg.get_double("unified.threshold", 0.5))};
      else
        throw ConfigError("unknown technique '" + args.technique + "'");
    }

    if (explanation->space.d() != sr.space.d())
      throw ConfigError("explanation space (d=" +
                        std::to_string(explanation->space.d()) +
                        ") does not match the rebuilt space (d=" +
                        std::to_string(sr.space.d()) + ")");

    // Which metrics apply to this payload?
    Rule rule_storage;
    const Rule* rule = rule_of(explanation->payload, rule_storage);
    const Attribution* attr = attribution_of(explanation->payload);
    const auto* u = std::get_if<UnifiedExplanation>(&explanation->payload);

    std::vector<std::string> requested = args.metrics;
    if (requested.empty()) {
      if (rule) {
        requested.push_back("coverage");
        requested.push_back("precision");
      }
      if (attr && ctx.has_probabilities()) requested.push_back("aopc");
      if (attr) requested.push_back("accuracy_a");
      if (u || std::holds_alternative<Attribution>(explanation->payload))
        requested.push_back("surrogate");
    }

    const std::size_t n =
        args.n > 0 ? args.n
                   : static_cast<std::size_t>(pipeline.cfg.get_int("metrics.n", 1000));
    auto ks64 = pipeline.cfg.get_int_list(
        "metrics.ks", {10, 20, 30, 40, 50, 60, 70, 80, 90, 100});
    std::vector<int> ks(ks64.begin(), ks64.end());

    metrics::FidelityReport report;
    report.n_samples = n;
    for (const auto& metric : requested) {
      if (metric == "coverage") {
        if (!rule) throw ConfigError("metric 'coverage' needs a rule explanation");
        Rng rng = rng_fork(pipeline.seed, 0xc0f);
        report.coverage =
            metrics::estimate_coverage(*rule, ctx.d(), policy, n, rng);
      } else if (metric == "precision") {
        if (!rule) throw ConfigError("metric 'precision' needs a rule explanation");
        Rng rng = rng_fork(pipeline.seed, 0x9ec);
        report.precision =
            metrics::estimate_precision(*rule, rule->label, ctx, n, rng);
      } else if (metric == "aopc") {
        if (!attr) throw ConfigError("metric 'aopc' needs an attribution");
        report.aopc_curve = metrics::aopc_curve(ctx, *attr, ks);
        report.aopc_mean = metrics::aopc_mean(report.aopc_curve);
      } else if (metric == "accuracy_a") {
        if (!attr) throw ConfigError("metric 'accuracy_a' needs an attribution");
        report.accuracy_a = metrics::accuracy_a(ctx, *attr, ks);
      } else if (metric == "surrogate") {
        Rng rng = rng_fork(pipeline.seed, 0x5f1);
        const bool image_task =
            pipeline.model.task == adapters::Task::ImageMulticlass;
        if (u) {
          report.surrogate_accuracy =
              image_task
                  ? metrics::surrogate_fidelity_agreement(
                        metrics::agreement_surrogate(*u, ctx.explained_label()),
                        ctx, n, rng)
                  : metrics::surrogate_fidelity(metrics::label_surrogate(*u), ctx,
                                                n, rng);
        } else if (attr) {
          const double threshold =
              pipeline.cfg.get_double("unified.threshold", 0.5);
          report.surrogate_accuracy = metrics::surrogate_fidelity(
              metrics::label_surrogate(*attr, threshold), ctx, n, rng);
        } else {
          throw ConfigError("metric 'surrogate' needs an attribution or unified "
                            "explanation");
        }
      } else {
        throw ConfigError("unknown metric '" + metric + "'");
      }
    }

    json doc = metrics::to_json(report);
    doc["instance"] = instance_ref;
    doc["kind"] = payload_kind(explanation->payload);
    doc["effective_config"] = pipeline.cfg.to_json();
    write_file_atomic(args.out_path, doc.dump(2) + "\n");
    if (!report.aopc_curve.empty()) {
      fs::path csv = args.out_path;
      csv.replace_extension(".aopc.csv");
      write_file_atomic(csv.string(), metrics::aopc_csv(report.aopc_curve));
    }

    out << "fidelity report (" << payload_kind(explanation->payload)
        << ", instance=" << instance_ref << ", n=" << n << ")\n";
    if (report.coverage)
      out << "  coverage:  " << report.coverage->value << " +/- "
          << report.coverage->ci_halfwidth << "\n";
    if (report.precision)
      out << "  precision: " << report.precision->value << " +/- "
          << report.precision->ci_halfwidth << "\n";
    if (!report.aopc_curve.empty())
      out << "  aopc mean: " << *report.aopc_mean << "\n";
    if (report.accuracy_a) out << "  accuracy_a: " << *report.accuracy_a << "\n";
    if (report.surrogate_accuracy)
      out << "  surrogate accuracy: " << *report.surrogate_accuracy << "\n";
    out << "wrote " << args.out_path << "\n";
    return kExitOk;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

// ---------------------------------------------------------------------------
// oracle-check

namespace {

struct CheckResult {
  std::string name;
  bool pass = false;
  std::string detail;
};

CheckResult check_shapley(std::uint64_t seed) {
  CheckResult result{"shapley", true, ""};
  double max_exact_err = 0.0;
  double max_sampled_err = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t d = 2 + static_cast<std::size_t>(trial % 9);
    Rng vrng = rng_fork(seed, 7000 + static_cast<std::uint64_t>(trial));
    const std::uint64_t total = std::uint64_t{1} << d;
    std::vector<int> table(total);
    for (auto& v : table) v = rng_bernoulli(vrng, 0.5) ? 1 : 0;

    auto label_fn = [&table, d](const BitVector& z) {
      std::uint64_t mask = 0;
      for (std::size_t i = 0; i < d; ++i)
        if (z[i]) mask |= std::uint64_t{1} << i;
      return table[mask];
    };
    auto prob_fn = [label_fn](const BitVector& z) {
      return static_cast<double>(label_fn(z));
    };
    auto handle = bitmodels::make_handle(label_fn, prob_fn, "oracle-shap");
    auto ctx = bitmodels::make_context(d, handle, seed + static_cast<std::uint64_t>(trial));

    explainers::ShapConfig config;
    auto attr = explainers::explain_kshap(ctx, config);

    const int y = ctx.explained_label();
    auto score_fn = [&](const BitVector& z) {
      const double p1 = prob_fn(z);
      return y == 1 ? p1 : 1.0 - p1;
    };
    auto phi = metrics::exact_shapley_oracle(score_fn, d);
    for (std::size_t i = 0; i < d; ++i)
      max_exact_err = std::max(max_exact_err, std::abs(attr.weights[i] - phi[i]));

    explainers::ShapConfig sampled;
    sampled.exhaustive_threshold = 0;
    sampled.n_samples = 2000;
    auto attr_sampled = explainers::explain_kshap(ctx, sampled);
    for (std::size_t i = 0; i < d; ++i)
      max_sampled_err =
          std::max(max_sampled_err, std::abs(attr_sampled.weights[i] - phi[i]));
  }
  std::ostringstream detail;
  detail << "exact max|err|=" << max_exact_err
         << ", sampled(n=2000) max|err|=" << max_sampled_err;
  result.detail = detail.str();
  result.pass = max_exact_err <= 1e-6 && max_sampled_err <= 0.05;
  return result;
}

CheckResult check_rules(std::uint64_t seed) {
  CheckResult result{"rules", true, ""};
  const std::size_t d = 10;
  int anchor_hits = 0;
  const int runs = 100;
  for (int run = 0; run < runs; ++run) {
    Rng prng = rng_fork(seed, 8000 + static_cast<std::uint64_t>(run));
    const std::size_t q_size = 1 + rng_index(prng, 3);
    std::vector<int> planted;
    while (planted.size() < q_size) {
      const int id = static_cast<int>(rng_index(prng, d));
      if (std::find(planted.begin(), planted.end(), id) == planted.end())
        planted.push_back(id);
    }
    std::sort(planted.begin(), planted.end());

    auto handle = bitmodels::planted_conjunction(planted, "oracle-anchor");
    auto ctx =
        bitmodels::make_context(d, handle, seed * 1000 + static_cast<std::uint64_t>(run));
    explainers::AnchorConfig config;
    auto anchor = explainers::explain_anchors(ctx, config);
    if (anchor.converged && anchor.members == planted) {
      auto stats = metrics::brute_force_rule_stats(
          anchor.as_rule(),
          [&](const BitVector& z) {
            for (int i : planted)
              if (!z[static_cast<std::size_t>(i)]) return 0;
            return 1;
          },
          d);
      if (stats.precision == 1.0) ++anchor_hits;
    }
  }

  int lore_ok = 0;
  const int lore_runs = 30;
  for (int run = 0; run < lore_runs; ++run) {
    Rng prng = rng_fork(seed, 8500 + static_cast<std::uint64_t>(run));
    const std::size_t dim = 6 + rng_index(prng, 7);  // 6..12
    const std::size_t q_size = 1 + rng_index(prng, 3);
    std::vector<int> planted;
    while (planted.size() < q_size) {
      const int id = static_cast<int>(rng_index(prng, dim));
      if (std::find(planted.begin(), planted.end(), id) == planted.end())
        planted.push_back(id);
    }
    auto model_fn = [planted](const BitVector& z) {
      for (int i : planted)
        if (!z[static_cast<std::size_t>(i)]) return 0;
      return 1;
    };
    auto handle = bitmodels::planted_conjunction(planted, "oracle-lore");
    auto ctx =
        bitmodels::make_context(dim, handle, seed * 2000 + static_cast<std::uint64_t>(run));
    explainers::LoreConfig config;
    config.population = 200;
    auto rules = explainers::explain_lore(ctx, config);

    bool ok = evaluate_conjunction(rules.factual, BitVector::ones(dim));
    if (ok) {
      auto stats = metrics::brute_force_rule_stats(rules.factual, model_fn, dim);
      ok = stats.precision >= 0.9;
    }
    std::size_t prev_changes = 0;
    for (const auto& cf : rules.counterfactuals) {
      if (!ok) break;
      auto stats = metrics::brute_force_rule_stats(cf, model_fn, dim);
      ok = stats.precision >= 0.9;
      const std::size_t changes = cf.negative.size();  // x is all-ones
      ok = ok && changes >= prev_changes;
      prev_changes = changes;
    }
    if (ok) ++lore_ok;
  }

  std::ostringstream detail;
  detail << "anchors recovered " << anchor_hits << "/" << runs
         << " (need >= 95), lore valid " << lore_ok << "/" << lore_runs
         << " (need == " << lore_runs << ")";
  result.detail = detail.str();
  result.pass = anchor_hits >= 95 && lore_ok == lore_runs;
  return result;
}

CheckResult check_metrics(std::uint64_t seed) {
  CheckResult result{"metrics", true, ""};
  const int trials = 200;
  int within = 0;
  for (int trial = 0; trial < trials; ++trial) {
    Rng prng = rng_fork(seed, 9000 + static_cast<std::uint64_t>(trial));
    const std::size_t d = 4 + rng_index(prng, 9);  // 4..12
    std::vector<int> planted{static_cast<int>(rng_index(prng, d))};
    auto model_fn = [planted](const BitVector& z) {
      for (int i : planted)
        if (!z[static_cast<std::size_t>(i)]) return 0;
      return 1;
    };
    // A rule over 1-2 positive and up to 1 negated predicate.
    std::vector<int> q{static_cast<int>(rng_index(prng, d))};
    if (rng_bernoulli(prng, 0.5)) {
      const int extra = static_cast<int>(rng_index(prng, d));
      if (std::find(q.begin(), q.end(), extra) == q.end()) q.push_back(extra);
    }
    std::vector<int> c;
    const int neg = static_cast<int>(rng_index(prng, d));
    if (std::find(q.begin(), q.end(), neg) == q.end()) c.push_back(neg);
    Rule rule = make_rule(q, c, 1);

    auto exact = metrics::brute_force_rule_stats(rule, model_fn, d);

    perturb::PerturbPolicy policy;
    Rng rng_cov = rng_fork(seed, 9300 + static_cast<std::uint64_t>(trial));
    auto cov = metrics::estimate_coverage(rule, d, policy, 10000, rng_cov);

    auto handle = bitmodels::planted_conjunction(planted, "oracle-metrics");
    auto ctx =
        bitmodels::make_context(d, handle, seed * 3000 + static_cast<std::uint64_t>(trial));
    Rng rng_prec = rng_fork(seed, 9600 + static_cast<std::uint64_t>(trial));
    auto prec = metrics::estimate_precision(rule, 1, ctx, 10000, rng_prec);

    if (std::abs(cov.value - exact.coverage) <= 0.03 &&
        std::abs(prec.value - exact.precision) <= 0.03)
      ++within;
  }

  // AOPC closed form on an additive scorer.
  bool aopc_ok = true;
  {
    const std::size_t d = 5;
    const std::vector<double> w{0.08, 0.05, -0.02, 0.03, 0.01};
    auto p1 = [&](const BitVector& z) {
      double p = 0.5;
      for (std::size_t i = 0; i < d; ++i)
        if (z[i]) p += w[i];
      return std::min(1.0, std::max(0.0, p));
    };
    auto handle = bitmodels::make_handle(
        [&](const BitVector& z) { return p1(z) >= 0.5 ? 1 : 0; }, p1,
        "oracle-aopc");
    auto ctx = bitmodels::make_context(d, handle, seed);
    Attribution attr;
    attr.weights = w;
    attr.label = 1;
    auto curve = metrics::aopc_curve(ctx, attr, metrics::kDefaultKGrid);
    for (const auto& [k, v] : curve) {
      const BitVector masked = top_k_mask(attr, k);
      const double expected = p1(BitVector::ones(d)) - p1(masked);
      if (std::abs(v - expected) > 1e-9) aopc_ok = false;
    }
  }

  // The two-predicate worked case: both masks flip the label.
  bool acc_ok = true;
  {
    auto handle = bitmodels::make_handle(
        [](const BitVector& z) { return z[0] ? 1 : 0; },
        [](const BitVector& z) { return z[0] ? 1.0 : 0.0; }, "oracle-acc");
    auto ctx = bitmodels::make_context(2, handle, seed);
    Attribution attr;
    attr.weights = {1.0, 0.1};
    attr.label = 1;
    const double acc = metrics::accuracy_a(ctx, attr, {50, 100});
    acc_ok = acc == 0.0;
  }

  std::ostringstream detail;
  detail << "estimators within +/-0.03: " << within << "/" << trials
         << " (need >= 198), aopc closed-form " << (aopc_ok ? "ok" : "FAIL")
         << ", accuracy_a worked case " << (acc_ok ? "ok" : "FAIL");
  result.detail = detail.str();
  result.pass = within >= 198 && aopc_ok && acc_ok;
  return result;
}

}  // namespace

int cmd_oracle_check(const OracleArgs& args, std::ostream& out, std::ostream& err) {
  std::vector<std::string> suites;
  if (args.suite == "all") suites = {"shapley", "rules", "metrics"};
  else if (args.suite == "shapley" || args.suite == "rules" ||
           args.suite == "metrics")
    suites = {args.suite};
  else {
    err << "error: unknown suite '" << args.suite
        << "' (expected shapley|rules|metrics|all)\n";
    return kExitConfig;
  }

  bool all_pass = true;
  for (const auto& suite : suites) {
    CheckResult result;
    if (suite == "shapley") result = check_shapley(args.seed);
    else if (suite == "rules") result = check_rules(args.seed);
    else result = check_metrics(args.seed);
    out << (result.pass ? "PASS" : "FAIL") << "  " << result.name << "  "
        << result.detail << "\n";
    all_pass = all_pass && result.pass;
  }
  return all_pass ? kExitOk : 1;
}

}  // namespace pex::cli
