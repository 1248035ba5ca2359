#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "pad/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Preference-aligned distillation on tabular toy language models"};
  app.require_subcommand(1);

  pad::ExperimentSpec spec;
  std::uint64_t seed = 0;

  const auto common = [&](CLI::App* cmd) {
    cmd->add_option("--config", spec.config, "config file (key = value per line)");
    cmd->add_option("--set", spec.overrides, "override KEY=VALUE (repeatable)")->take_all();
    cmd->add_option("--seed", seed, "root seed override");
  };

  auto* train = app.add_subcommand("train", "distill a student and write metrics, checkpoints and a manifest");
  common(train);
  train->add_option("--out", spec.out, "run directory")->required();

  auto* verify = app.add_subcommand("verify", "run the oracle and gradient-check suites");
  verify->add_option("--only", spec.only, "run a single suite");
  verify->add_option("--seed", seed, "seed for the randomized cases");
  verify->add_flag("--corrupt-gradient", spec.corrupt_gradient)->group("");

  auto* eval = app.add_subcommand("eval", "held-out alignment of a checkpoint against the teacher");
  common(eval);
  eval->add_option("--checkpoint", spec.checkpoint, "student model file")->required();
  eval->add_option("--out", spec.out, "also write eval.json here");

  auto* gen = app.add_subcommand("gen", "write a planted teacher, prompts and quality tables");
  common(gen);
  gen->add_option("--out", spec.out, "fixture directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? pad::kExitOk : pad::kExitUsage;
  }

  for (auto* cmd : {train, verify, eval, gen})
    if (cmd->count("--seed") > 0) spec.seed = seed;

  if (*train) return pad::cmd_train(spec, std::cout, std::cerr);
  if (*verify) return pad::cmd_verify(spec, std::cout, std::cerr);
  if (*eval) return pad::cmd_eval(spec, std::cout, std::cerr);
  return pad::cmd_gen(spec, std::cout, std::cerr);
}
