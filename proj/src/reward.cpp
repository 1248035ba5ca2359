#include "pad/reward.hpp"

#include <string>

#include "pad/errors.hpp"
#include "pad/numeric.hpp"

namespace pad {

double log_partition(const ToyLm& lm, std::span<const Token> prompt,
                     std::span<const Token> response, std::size_t t) {
  if (t < 1 || t > response.size() + 1) throw InvalidInput("partition index out of range");
  return log_sum_exp(lm.logits().row(lm.context_row(prompt, response.first(t - 1))));
}

double token_reward(const ToyLm& lm, std::span<const Token> prompt,
                    std::span<const Token> response, std::size_t t) {
  lm.check_tokens(prompt);
  check_response(lm, response);
  if (t < 1 || t > response.size())
    throw InvalidInput("token_reward: step " + std::to_string(t) + " outside [1, " +
                       std::to_string(response.size()) + "]");
  const double f_t = lm.logits().at(lm.context_row(prompt, response.first(t - 1)), response[t - 1]);
  const double next_log_z = t == response.size() ? 0.0 : log_partition(lm, prompt, response, t + 1);
  return f_t - next_log_z;
}

double cumulative_reward(const ToyLm& lm, std::span<const Token> prompt,
                         std::span<const Token> response) {
  double total = 0.0;
  for (std::size_t t = 1; t <= response.size(); ++t)
    total += token_reward(lm, prompt, response, t);
  if (response.empty()) check_response(lm, response);
  return total;
}

double normalized_reward(const ToyLm& lm, std::span<const Token> prompt,
                         std::span<const Token> response) {
  return sequence_log_prob(lm, prompt, response) / static_cast<double>(response.size());
}

RewardVector reward_set(const ToyLm& lm, const ResponseSet& responses, RewardKind kind) {
  RewardVector out;
  out.kind = kind;
  out.values.reserve(responses.size());
  for (const auto& r : responses.responses)
    out.values.push_back(normalized_reward(lm, responses.prompt, r.tokens));
  return out;
}

double dpo_style_reward(const ToyLm& current, const ToyLm& reference,
                        std::span<const Token> prompt, std::span<const Token> response) {
  return sequence_log_prob(current, prompt, response) -
         sequence_log_prob(reference, prompt, response);
}

double minillm_style_reward(const ToyLm& teacher, const ToyLm& student,
                            std::span<const Token> prompt, std::span<const Token> response) {
  return sequence_log_prob(teacher, prompt, response) -
         sequence_log_prob(student, prompt, response);
}

}  // namespace pad
