#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace pex::cli {

// Exit codes shared by all subcommands.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitBackend = 3;
inline constexpr int kExitUnconverged = 4;  // anchor budget ran out; output still written
inline constexpr int kExitUnsupportedMetric = 5;

struct CommonOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // overrides [run].seed
  std::size_t jobs = 1;
  bool offline = false;
};

struct ExplainArgs {
  CommonOptions common;
  std::string instance_ref;
  std::string technique;  // lime | kshap | anchors | lore | unified
  std::string level;      // feature | concept
  std::string out_path;
};

int cmd_explain(const ExplainArgs& args, std::ostream& out, std::ostream& err);

struct EvaluateArgs {
  CommonOptions common;
  std::string explanation_path;  // either this...
  std::string technique;         // ...or technique (+ instance + level)
  std::string instance_ref;
  std::string level = "feature";
  std::vector<std::string> metrics;  // empty = all applicable
  std::size_t n = 0;                 // 0 = config default
  std::string out_path;
};

int cmd_evaluate(const EvaluateArgs& args, std::ostream& out, std::ostream& err);

struct OracleArgs {
  std::string suite;  // shapley | rules | metrics | all
  std::uint64_t seed = 1;
};

int cmd_oracle_check(const OracleArgs& args, std::ostream& out, std::ostream& err);

}  // namespace pex::cli
