#pragma once

// Sample -> reward + calibrate -> distill, repeated over decomposed rounds.

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "pad/calibration.hpp"
#include "pad/losses.hpp"
#include "pad/preference.hpp"
#include "pad/toy_lm.hpp"

namespace pad {

struct Prompt {
  std::uint64_t id = 0;
  std::vector<Token> tokens;
};

enum class DecompositionMode {
  // each of the k rounds samples m fresh responses from the current student
  fresh,
  // one pool of k*m responses split into k consecutive sub-batches
  partition,
};

struct DistillConfig {
  std::size_t n = 4;
  DecompositionPlan plan{1, 4};
  DecompositionMode mode = DecompositionMode::fresh;
  CalibrationConfig calibration;
  LossConfig loss;
  double temperature = 0.8;
  std::size_t max_len = 8;
  double learning_rate = 0.05;
  std::size_t steps = 1000;
  std::size_t batch = 8;
  std::size_t eval_every = 100;
  // responses per evaluation prompt; 0 picks n, or m when n exceeds the cap
  std::size_t eval_n = 0;
  // stop at the first eval point whose JSD falls below this (0 disables)
  double target_jsd = 0.0;
  std::uint64_t seed = 1;

  void validate() const;
  std::size_t responses_per_round() const noexcept {
    return mode == DecompositionMode::fresh ? plan.m : plan.total();
  }
  std::size_t rounds() const noexcept { return mode == DecompositionMode::fresh ? plan.k : 1; }
  std::size_t resolved_eval_n() const noexcept;
  // Loss settings for one round: decomposed only in partition mode.
  LossConfig round_loss() const;
};

struct RunMetrics {
  std::size_t step = 0;
  // mean training loss per prompt-step since the previous record; none at step 0
  std::optional<double> loss;
  double jsd = 0.0;
  double top1 = 0.0;
  double kendall_tau = 0.0;
  double wall_time = 0.0;
};

struct StepOutcome {
  double loss = 0.0;
  // -learning_rate * gradient
  LogitTable update;
  std::uint64_t ranking_terms = 0;
  bool skipped = false;
  ResponseSet responses;
};

// Seeds used by one distill_step call.
struct StepSeeds {
  std::uint64_t sampling = 0;
  std::uint64_t mapping = 0;
};

// `slot` is the position within the batch, so a prompt repeated in one batch still gets fresh samples.
StepSeeds step_seeds(std::uint64_t root, std::size_t step, std::size_t round, std::size_t slot);

// One on-policy round for a single prompt. Degenerate selection scores skip
// the step (zero update) with a warning on stderr.
StepOutcome distill_step(const ToyLm& teacher, const ToyLm& student, const Prompt& prompt,
                         const SelectionScoreProvider& provider, const DistillConfig& config,
                         const StepSeeds& seeds);

struct TrainResult {
  ToyLm student;
  std::vector<RunMetrics> metrics;
  std::uint64_t ranking_terms = 0;
  std::size_t skipped_steps = 0;
  std::size_t steps_run = 0;
};

using MetricsSink = std::function<void(const RunMetrics&, const ToyLm& student)>;

TrainResult iterative_distill(const ToyLm& teacher, ToyLm student, std::span<const Prompt> prompts,
                              std::span<const Prompt> eval_prompts,
                              const SelectionScoreProvider& provider, const DistillConfig& config,
                              const MetricsSink& sink = {});

struct AlignmentReport {
  double jsd = 0.0;
  double top1 = 0.0;
  double kendall_tau = 0.0;
};

// Held-out alignment with a frozen sampler: responses for each prompt are
// drawn from the student with seeds that depend only on config.seed and the
// prompt id.
AlignmentReport evaluate_alignment(const ToyLm& teacher, const ToyLm& student,
                                   std::span<const Prompt> eval_prompts,
                                   const SelectionScoreProvider& provider, const DistillConfig& config);

// Desk-scale fixtures.
struct TeacherSpec {
  Vocab vocab{8, 0};
  std::size_t order = 1;
  double boost = 3.0;
  double noise = 1.0;
  double eos_bias = 2.0;
  std::uint64_t seed = 0;
};

struct PlantedTeacher {
  ToyLm model;
  // preferred next token for every context row (never eos)
  std::vector<Token> preferred;
};

PlantedTeacher make_planted_teacher(const TeacherSpec& spec);

// Follows the planted preferred token `length - 1` times then emits eos.
std::vector<Token> planted_continuation(const PlantedTeacher& teacher, std::span<const Token> prompt,
                                        std::size_t length);

// Prompts of uniform length in [min_len, max_len] over non-eos tokens; ids start at id_base.
std::vector<Prompt> make_prompts(std::size_t count, std::size_t min_len, std::size_t max_len,
                                 const Vocab& vocab, std::uint64_t seed, std::uint64_t id_base = 0);

// One prompt per line: `<id> <token> <token> ...`.
void write_prompts(std::ostream& out, std::span<const Prompt> prompts);
std::vector<Prompt> read_prompts(std::istream& in);

}  // namespace pad
