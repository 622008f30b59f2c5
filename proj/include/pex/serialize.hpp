#pragma once

#include <string>

#include <json.hpp>

#include "pex/core.hpp"

namespace pex {

// Versioned JSON document: {"version", "kind", "space", "payload"}.
// Bit vectors travel as 0/1 strings.
inline constexpr int kExplanationFormatVersion = 1;

nlohmann::json to_json(const PredicateSpace& space);
PredicateSpace space_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Rule& rule);
Rule rule_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Attribution& attr);
Attribution attribution_from_json(const nlohmann::json& j);

nlohmann::json to_json(const AnchorRule& anchor);
AnchorRule anchor_from_json(const nlohmann::json& j);

nlohmann::json to_json(const RuleSet& rules);
RuleSet rule_set_from_json(const nlohmann::json& j);

nlohmann::json to_json(const UnifiedExplanation& unified);
UnifiedExplanation unified_from_json(const nlohmann::json& j);

nlohmann::json to_json(const Explanation& e);
Explanation explanation_from_json(const nlohmann::json& j);

// The "kind" discriminator stored in serialized documents.
std::string payload_kind(const ExplanationPayload& p);

// Atomic write: temp file in the same directory, then rename.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace pex
