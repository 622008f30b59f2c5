#include "pex/serialize.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

namespace pex {

using nlohmann::json;

json to_json(const PredicateSpace& space) {
  json preds = json::array();
  for (const auto& p : space.predicates()) {
    json jp{{"id", p.id}, {"name", p.name}, {"description", p.description}};
    jp["feature_indices"] = p.feature_indices;
    if (!p.metadata.empty()) jp["metadata"] = p.metadata;
    preds.push_back(std::move(jp));
  }
  return json{{"d", space.d()},
              {"kind", to_string(space.kind())},
              {"instance_ref", space.instance_ref()},
              {"feature_count", space.feature_count()},
              {"predicates", std::move(preds)}};
}

PredicateSpace space_from_json(const json& j) {
  std::vector<PredicateDescriptor> preds;
  for (const auto& jp : j.at("predicates")) {
    PredicateDescriptor p;
    p.id = jp.at("id").get<int>();
    p.name = jp.at("name").get<std::string>();
    p.description = jp.at("description").get<std::string>();
    p.feature_indices = jp.value("feature_indices", std::vector<std::size_t>{});
    p.metadata = jp.value("metadata", std::string{});
    preds.push_back(std::move(p));
  }
  return PredicateSpace(space_kind_from_string(j.at("kind").get<std::string>()),
                        std::move(preds),
                        j.at("instance_ref").get<std::string>(),
                        j.value("feature_count", std::size_t{0}));
}

json to_json(const Rule& rule) {
  return json{{"q", rule.positive}, {"c", rule.negative}, {"label", rule.label}};
}

Rule rule_from_json(const json& j) {
  return make_rule(j.at("q").get<std::vector<int>>(),
                   j.at("c").get<std::vector<int>>(), j.at("label").get<int>());
}

json to_json(const Attribution& attr) {
  return json{{"intercept", attr.intercept},
              {"weights", attr.weights},
              {"label", attr.label}};
}

Attribution attribution_from_json(const json& j) {
  Attribution a;
  a.intercept = j.at("intercept").get<double>();
  a.weights = j.at("weights").get<std::vector<double>>();
  a.label = j.at("label").get<int>();
  return a;
}

json to_json(const AnchorRule& anchor) {
  return json{{"members", anchor.members},
              {"label", anchor.label},
              {"precision", anchor.precision_estimate},
              {"coverage", anchor.coverage_estimate},
              {"confidence", anchor.confidence},
              {"converged", anchor.converged}};
}

AnchorRule anchor_from_json(const json& j) {
  AnchorRule a;
  a.members = j.at("members").get<std::vector<int>>();
  a.label = j.at("label").get<int>();
  a.precision_estimate = j.at("precision").get<double>();
  a.coverage_estimate = j.at("coverage").get<double>();
  a.confidence = j.at("confidence").get<double>();
  a.converged = j.at("converged").get<bool>();
  return a;
}

json to_json(const RuleSet& rules) {
  json cfs = json::array();
  for (const auto& cf : rules.counterfactuals) cfs.push_back(to_json(cf));
  return json{{"factual", to_json(rules.factual)},
              {"counterfactuals", std::move(cfs)}};
}

RuleSet rule_set_from_json(const json& j) {
  RuleSet rs;
  rs.factual = rule_from_json(j.at("factual"));
  for (const auto& jc : j.at("counterfactuals"))
    rs.counterfactuals.push_back(rule_from_json(jc));
  return rs;
}

json to_json(const UnifiedExplanation& unified) {
  json rules;
  if (unified.rules) rules = to_json(*unified.rules);
  return json{{"rules", std::move(rules)},
              {"attribution", to_json(unified.attribution)},
              {"decision_threshold", unified.decision_threshold}};
}

UnifiedExplanation unified_from_json(const json& j) {
  UnifiedExplanation u;
  if (j.contains("rules") && !j.at("rules").is_null())
    u.rules = rule_set_from_json(j.at("rules"));
  u.attribution = attribution_from_json(j.at("attribution"));
  u.decision_threshold = j.at("decision_threshold").get<double>();
  return u;
}

std::string payload_kind(const ExplanationPayload& p) {
  switch (p.index()) {
    case 0: return "attribution";
    case 1: return "anchor";
    case 2: return "rules";
    default: return "unified";
  }
}

json to_json(const Explanation& e) {
  json payload;
  std::visit([&payload](const auto& v) { payload = to_json(v); }, e.payload);
  return json{{"version", kExplanationFormatVersion},
              {"kind", payload_kind(e.payload)},
              {"space", to_json(e.space)},
              {"payload", std::move(payload)}};
}

Explanation explanation_from_json(const json& j) {
  const int version = j.at("version").get<int>();
  if (version != kExplanationFormatVersion)
    throw ParseError("unsupported explanation format version " +
                     std::to_string(version));
  auto space = space_from_json(j.at("space"));
  const auto kind = j.at("kind").get<std::string>();
  const auto& payload = j.at("payload");
  ExplanationPayload p;
  if (kind == "attribution") p = attribution_from_json(payload);
  else if (kind == "anchor") p = anchor_from_json(payload);
  else if (kind == "rules") p = rule_set_from_json(payload);
  else if (kind == "unified") p = unified_from_json(payload);
  else throw ParseError("unknown explanation kind '" + kind + "'");
  return Explanation{std::move(space), std::move(p)};
}

void write_file_atomic(const std::string& path, const std::string& contents) {
  namespace fs = std::filesystem;
  fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  fs::path tmp = target;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot open " + tmp.string() + " for writing");
    out.write(contents.data(),
              static_cast<std::streamsize>(contents.size()));
    if (!out) throw InputError("short write to " + tmp.string());
  }
  fs::rename(tmp, target);
}

}  // namespace pex
