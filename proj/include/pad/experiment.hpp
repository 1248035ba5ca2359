#pragma once

// Config resolution and the train / verify / eval / gen commands.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "pad/calibration.hpp"
#include "pad/config.hpp"
#include "pad/pipeline.hpp"

namespace pad {

enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitVerifyFailed = 2 };

struct Experiment {
  DistillConfig distill;
  TeacherSpec teacher;
  std::filesystem::path teacher_path;
  std::filesystem::path student_path;
  std::size_t train_prompts = 64;
  std::size_t eval_prompts = 50;
  std::size_t prompt_min_len = 1;
  std::size_t prompt_max_len = 3;
  std::filesystem::path train_prompts_file;
  std::filesystem::path eval_prompts_file;
  std::string quality_source = "teacher";
  double quality_scale = 1.0;
  std::filesystem::path quality_file;
  double reference_weight = 1.0;
  bool log_wall_time = false;
};

inline constexpr std::uint64_t kEvalPromptIdBase = 1'000'000;

// Relative paths resolve against `base_dir` (the config file's directory).
// Throws ConfigError naming the offending key.
Experiment resolve_experiment(const ConfigMap& config, const std::filesystem::path& base_dir = {});

struct ExperimentData {
  std::shared_ptr<const ToyLm> teacher;
  ToyLm student;
  std::vector<Prompt> train;
  std::vector<Prompt> eval;
  std::unique_ptr<SelectionScoreProvider> provider;
};

ExperimentData materialize(const Experiment& experiment);

// One JSON object per line: step, loss, jsd, top1, kendall_tau[, wall_time].
std::string metrics_record(const RunMetrics& m, bool include_wall_time);

struct ExperimentSpec {
  std::filesystem::path config;
  std::vector<std::string> overrides;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
  std::string only;
  std::filesystem::path checkpoint;
  // verify negative control: perturbs analytic gradients before checking
  bool corrupt_gradient = false;
};

int cmd_train(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
int cmd_verify(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
int cmd_eval(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);
int cmd_gen(const ExperimentSpec& spec, std::ostream& out, std::ostream& err);

}  // namespace pad
