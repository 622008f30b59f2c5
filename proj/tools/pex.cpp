#include <CLI11.hpp>

#include <iostream>
#include <string>

#include "pex/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"predicate-space local explanations for black-box models"};
  app.require_subcommand(1);

  pex::cli::CommonOptions common;
  std::uint64_t seed_flag = 0;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("--config", common.config_path, "configuration file")
        ->required();
    cmd->add_option("--seed", seed_flag, "override [run].seed");
    cmd->add_option("--jobs", common.jobs, "parallel evaluation workers")
        ->check(CLI::PositiveNumber);
    cmd->add_flag("--offline", common.offline, "forbid live network calls");
  };

  pex::cli::ExplainArgs explain;
  auto* explain_cmd = app.add_subcommand("explain", "explain one instance");
  add_common(explain_cmd);
  explain_cmd->add_option("--instance", explain.instance_ref, "instance id")
      ->required();
  explain_cmd
      ->add_option("--technique", explain.technique,
                   "lime | kshap | anchors | lore | unified")
      ->required();
  explain_cmd->add_option("--level", explain.level, "feature | concept")
      ->default_val("feature");
  explain_cmd->add_option("--out", explain.out_path, "output JSON path")
      ->required();

  pex::cli::EvaluateArgs evaluate;
  auto* evaluate_cmd =
      app.add_subcommand("evaluate", "score an explanation's fidelity");
  add_common(evaluate_cmd);
  evaluate_cmd->add_option("--explanation", evaluate.explanation_path,
                           "explanation JSON produced by `explain`");
  evaluate_cmd->add_option("--technique", evaluate.technique,
                           "compute the explanation on the fly");
  evaluate_cmd->add_option("--instance", evaluate.instance_ref,
                           "instance id (with --technique)");
  evaluate_cmd->add_option("--level", evaluate.level, "feature | concept")
      ->default_val("feature");
  evaluate_cmd->add_option(
      "--metrics", evaluate.metrics,
      "subset of coverage,precision,aopc,accuracy_a,surrogate")
      ->delimiter(',');
  evaluate_cmd->add_option("--n", evaluate.n, "samples per estimate");
  evaluate_cmd->add_option("--out", evaluate.out_path, "output JSON path")
      ->required();

  pex::cli::OracleArgs oracle;
  auto* oracle_cmd =
      app.add_subcommand("oracle-check", "run brute-force oracle comparisons");
  oracle_cmd->add_option("--suite", oracle.suite, "shapley | rules | metrics | all")
      ->default_val("all");
  oracle_cmd->add_option("--seed", oracle.seed, "base seed")->default_val("1");

  CLI11_PARSE(app, argc, argv);

  if (explain_cmd->count("--seed") || evaluate_cmd->count("--seed"))
    common.seed = seed_flag;

  if (app.got_subcommand(explain_cmd)) {
    explain.common = common;
    return pex::cli::cmd_explain(explain, std::cout, std::cerr);
  }
  if (app.got_subcommand(evaluate_cmd)) {
    evaluate.common = common;
    return pex::cli::cmd_evaluate(evaluate, std::cout, std::cerr);
  }
  return pex::cli::cmd_oracle_check(oracle, std::cout, std::cerr);
}
