#include "pad/pipeline.hpp"

#include <cmath>
#include <exception>
#include <iostream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "pad/errors.hpp"
#include "pad/reward.hpp"
#include "pad/rng.hpp"
#include "text_io.hpp"

namespace pad {

void DistillConfig::validate() const {
  plan.validate();
  if (n != plan.total())
    throw InvalidInput("n = " + std::to_string(n) + " must equal plan.k * plan.m = " +
                       std::to_string(plan.total()));
  calibration.validate();
  loss.validate();
  if (!(temperature > 0.0) || !std::isfinite(temperature))
    throw InvalidInput("temperature must be positive");
  if (max_len < 1) throw InvalidInput("max_len must be >= 1");
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw InvalidInput("learning_rate must be >= 0");
  if (batch < 1) throw InvalidInput("batch must be >= 1");
  if (eval_every < 1) throw InvalidInput("eval_every must be >= 1");
  if (calibration.method == CalibrationMethod::mcq && responses_per_round() > kMaxChoiceLabels)
    throw InvalidInput("mcq calibration supports at most " + std::to_string(kMaxChoiceLabels) +
                       " responses per round");
  if (loss.objective == Objective::ppd && plan.m > loss.enumeration_cap)
    throw CapacityError("plan " + std::to_string(plan.k) + " x " + std::to_string(plan.m) +
                        " needs " + std::to_string(plan.m) + "! rankings per sub-batch; the cap is n <= " +
                        std::to_string(loss.enumeration_cap));
  if (resolved_eval_n() < 2) throw InvalidInput("eval_n must be >= 2");
  if (resolved_eval_n() > loss.enumeration_cap)
    throw CapacityError("eval_n exceeds the enumeration cap");
}

std::size_t DistillConfig::resolved_eval_n() const noexcept {
  if (eval_n != 0) return eval_n;
  return n <= loss.enumeration_cap ? n : plan.m;
}

LossConfig DistillConfig::round_loss() const {
  LossConfig out = loss;
  if (mode == DecompositionMode::partition)
    out.decomposition = plan;
  else
    out.decomposition.reset();
  return out;
}

StepSeeds step_seeds(std::uint64_t root, std::size_t step, std::size_t round, std::size_t slot) {
  const auto at = [&](std::string_view stream) {
    return derive_seed(derive_seed(derive_seed(derive_seed(root, stream), step), round), slot);
  };
  return {at("sampling"), at("mapping")};
}

StepOutcome distill_step(const ToyLm& teacher, const ToyLm& student, const Prompt& prompt,
                         const SelectionScoreProvider& provider, const DistillConfig& config,
                         const StepSeeds& seeds) {
  SamplingOptions options;
  options.n = config.responses_per_round();
  options.decoding = Decoding::sample(config.temperature);
  options.max_len = config.max_len;
  options.seed = seeds.sampling;

  StepOutcome out;
  out.responses = sample_responses(student, prompt.tokens, options);
  out.responses.prompt_id = prompt.id;
  out.responses.source = ResponseSource::student;

  const RewardVector teacher_rewards = reward_set(teacher, out.responses, RewardKind::raw_teacher);
  CalibrationConfig calibration = config.calibration;
  calibration.seed = seeds.mapping;
  RewardVector target;
  try {
    target = calibrate_with(provider, out.responses, teacher_rewards, calibration);
  } catch (const DegenerateScores& e) {
    std::cerr << "warning: skipping step for prompt " << prompt.id << ": " << e.what() << '\n';
    out.skipped = true;
    out.update = LogitTable(student.num_contexts(), student.vocab_size());
    return out;
  }

  TermCounter counter;
  ParamGradient pg =
      loss_and_grad_wrt_params(config.round_loss(), target.values, student, out.responses, &counter);
  out.loss = pg.loss;
  out.ranking_terms = counter.ranking_terms;
  out.update = std::move(pg.grad);
  for (double& v : out.update.values()) v *= -config.learning_rate;
  return out;
}

namespace {

struct PromptEval {
  double jsd = 0.0;
  bool agree = false;
  double tau = 0.0;
};

PromptEval evaluate_prompt(const ToyLm& teacher, const ToyLm& student, const Prompt& prompt,
                           const SelectionScoreProvider& provider, const DistillConfig& config) {
  SamplingOptions options;
  options.n = config.resolved_eval_n();
  options.decoding = Decoding::sample(config.temperature);
  options.max_len = config.max_len;
  options.seed = derive_seed(derive_seed(config.seed, "eval.sampling"), prompt.id);
  ResponseSet set = sample_responses(student, prompt.tokens, options);
  set.prompt_id = prompt.id;
  set.source = ResponseSource::student;

  CalibrationConfig calibration = config.calibration;
  calibration.seed = derive_seed(derive_seed(config.seed, "eval.mapping"), prompt.id);
  const RewardVector target =
      calibrate_with(provider, set, reward_set(teacher, set, RewardKind::raw_teacher), calibration);
  const RewardVector mine = reward_set(student, set, RewardKind::raw_student);

  const std::size_t cap = config.loss.enumeration_cap;
  const auto t_dist = full_distribution(target, config.loss.beta, cap);
  const auto s_dist = full_distribution(mine, config.loss.beta, cap);
  const Ranking t_rank = argsort_rewards(target);
  const Ranking s_rank = argsort_rewards(mine);
  return {ppd_loss(t_dist, s_dist), t_rank == s_rank, kendall_tau(t_rank, s_rank)};
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
}

}  // namespace

AlignmentReport evaluate_alignment(const ToyLm& teacher, const ToyLm& student,
                                   std::span<const Prompt> eval_prompts,
                                   const SelectionScoreProvider& provider, const DistillConfig& config) {
  config.validate();
  if (eval_prompts.empty()) throw InvalidInput("evaluate_alignment needs at least one prompt");
  const auto count = static_cast<std::int64_t>(eval_prompts.size());
  std::vector<PromptEval> results(eval_prompts.size());
  std::vector<std::exception_ptr> errors(eval_prompts.size());
#pragma omp parallel for schedule(dynamic)
  for (std::int64_t i = 0; i < count; ++i) {
    const auto idx = static_cast<std::size_t>(i);
    try {
      results[idx] = evaluate_prompt(teacher, student, eval_prompts[idx], provider, config);
    } catch (...) {
      errors[idx] = std::current_exception();
    }
  }
  rethrow_first(errors);

  AlignmentReport report;
  for (const auto& r : results) {
    report.jsd += r.jsd;
    report.top1 += r.agree ? 1.0 : 0.0;
    report.kendall_tau += r.tau;
  }
  const double denom = static_cast<double>(results.size());
  report.jsd /= denom;
  report.top1 /= denom;
  report.kendall_tau /= denom;
  return report;
}

TrainResult iterative_distill(const ToyLm& teacher, ToyLm student, std::span<const Prompt> prompts,
                              std::span<const Prompt> eval_prompts,
                              const SelectionScoreProvider& provider, const DistillConfig& config,
                              const MetricsSink& sink) {
  config.validate();
  if (prompts.empty()) throw InvalidInput("iterative_distill needs training prompts");
  if (teacher.vocab_size() != student.vocab_size() || teacher.vocab().eos_id != student.vocab().eos_id)
    throw InvalidInput("teacher and student vocabularies differ");

  const auto start = std::chrono::steady_clock::now();
  TrainResult result{std::move(student), {}, 0, 0, 0};
  ToyLm& current = result.student;
  double loss_sum = 0.0;
  std::size_t loss_count = 0;

  const auto record = [&](std::size_t step) {
    const AlignmentReport report = evaluate_alignment(teacher, current, eval_prompts, provider, config);
    RunMetrics m;
    m.step = step;
    if (step > 0 && loss_count > 0) m.loss = loss_sum / static_cast<double>(loss_count);
    m.jsd = report.jsd;
    m.top1 = report.top1;
    m.kendall_tau = report.kendall_tau;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    loss_sum = 0.0;
    loss_count = 0;
    result.metrics.push_back(m);
    if (sink) sink(m, current);
    return m;
  };

  if (!eval_prompts.empty()) record(0);

  const std::size_t batch = config.batch;
  std::vector<StepOutcome> outcomes(batch);
  std::vector<std::exception_ptr> errors(batch);
  for (std::size_t step = 1; step <= config.steps; ++step) {
    for (std::size_t round = 0; round < config.rounds(); ++round) {
#pragma omp parallel for schedule(dynamic)
      for (std::int64_t j = 0; j < static_cast<std::int64_t>(batch); ++j) {
        const auto slot = static_cast<std::size_t>(j);
        const Prompt& prompt = prompts[((step - 1) * batch + slot) % prompts.size()];
        try {
          outcomes[slot] = distill_step(teacher, current, prompt, provider, config,
                                        step_seeds(config.seed, step, round, slot));
        } catch (...) {
          errors[slot] = std::current_exception();
        }
      }
      rethrow_first(errors);

      // fixed slot order keeps the update bit-reproducible
      LogitTable total(current.num_contexts(), current.vocab_size());
      for (const auto& out : outcomes) {
        if (out.responses.source != ResponseSource::student)
          throw std::logic_error("training responses must come from the student");
        if (out.skipped) {
          ++result.skipped_steps;
          continue;
        }
        total.add_scaled(out.update, 1.0);
        loss_sum += out.loss;
        ++loss_count;
        result.ranking_terms += out.ranking_terms;
      }
      if (config.learning_rate != 0.0)
        current.logits().add_scaled(total, 1.0 / static_cast<double>(batch));
    }
    result.steps_run = step;
    if (!eval_prompts.empty() && (step % config.eval_every == 0 || step == config.steps)) {
      const RunMetrics m = record(step);
      if (config.target_jsd > 0.0 && m.jsd < config.target_jsd) break;
    }
  }
  return result;
}

PlantedTeacher make_planted_teacher(const TeacherSpec& spec) {
  spec.vocab.validate();
  PlantedTeacher out{ToyLm(spec.vocab, spec.order), {}};
  auto& table = out.model.logits();
  Rng rng(spec.seed);
  const std::size_t v = spec.vocab.size;
  out.preferred.resize(table.rows());
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto pick = static_cast<Token>(uniform_index(rng, v - 1));
    if (pick >= spec.vocab.eos_id) ++pick;
    out.preferred[r] = pick;
    for (std::size_t c = 0; c < v; ++c) table.at(r, c) = spec.noise * (2.0 * uniform01(rng) - 1.0);
    table.at(r, pick) += spec.boost;
    table.at(r, spec.vocab.eos_id) += spec.eos_bias;
  }
  return out;
}

std::vector<Token> planted_continuation(const PlantedTeacher& teacher, std::span<const Token> prompt,
                                        std::size_t length) {
  if (length < 1) throw InvalidInput("continuation length must be >= 1");
  std::vector<Token> out;
  while (out.size() + 1 < length) out.push_back(teacher.preferred[teacher.model.context_row(prompt, out)]);
  out.push_back(teacher.model.vocab().eos_id);
  return out;
}

std::vector<Prompt> make_prompts(std::size_t count, std::size_t min_len, std::size_t max_len,
                                 const Vocab& vocab, std::uint64_t seed, std::uint64_t id_base) {
  vocab.validate();
  if (min_len > max_len) throw InvalidInput("prompt min_len exceeds max_len");
  Rng rng(seed);
  std::vector<Prompt> out(count);
  for (std::size_t i = 0; i < count; ++i) {
    out[i].id = id_base + i;
    const std::size_t len = min_len + uniform_index(rng, max_len - min_len + 1);
    for (std::size_t t = 0; t < len; ++t) {
      auto tok = static_cast<Token>(uniform_index(rng, vocab.size - 1));
      if (tok >= vocab.eos_id) ++tok;
      out[i].tokens.push_back(tok);
    }
  }
  return out;
}

void write_prompts(std::ostream& out, std::span<const Prompt> prompts) {
  for (const auto& p : prompts) {
    out << p.id;
    for (Token t : p.tokens) out << ' ' << t;
    out << '\n';
  }
}

std::vector<Prompt> read_prompts(std::istream& in) {
  std::vector<Prompt> out;
  std::string line;
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    std::istringstream ls(line);
    std::string field;
    ls >> field;
    Prompt p;
    p.id = detail::parse_uint(field, "prompt id");
    while (ls >> field) p.tokens.push_back(static_cast<Token>(detail::parse_uint(field, "token")));
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace pad
