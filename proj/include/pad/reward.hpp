#pragma once

// Log-likelihood rewards derived from a model's own logits, plus the
// likelihood-ratio rewards used by DPO-style and MiniLLM-style methods.

#include <cstddef>
#include <span>
#include <vector>

#include "pad/toy_lm.hpp"

namespace pad {

enum class RewardKind { raw_student, raw_teacher, calibrated_teacher, comparison };

struct RewardVector {
  std::vector<double> values;
  RewardKind kind = RewardKind::comparison;

  std::size_t size() const noexcept { return values.size(); }
  double operator[](std::size_t i) const { return values[i]; }
};

// log Z for the context x ++ y_<t (t is 1-based; t = 1 is the prompt alone).
double log_partition(const ToyLm& lm, std::span<const Token> prompt,
                     std::span<const Token> response, std::size_t t);

// u(y_t) = f_t - log Z_{t+1}, with log Z_{|y|+1} = 0. `t` is 1-based.
double token_reward(const ToyLm& lm, std::span<const Token> prompt,
                    std::span<const Token> response, std::size_t t);

// sum_t u(y_t); equals log p(y|x) + log Z_1.
double cumulative_reward(const ToyLm& lm, std::span<const Token> prompt,
                         std::span<const Token> response);

// (1/|y|) log p(y|x); |y| counts the eos token.
double normalized_reward(const ToyLm& lm, std::span<const Token> prompt,
                         std::span<const Token> response);

RewardVector reward_set(const ToyLm& lm, const ResponseSet& responses, RewardKind kind);

// log p_current(y|x) - log p_reference(y|x)
double dpo_style_reward(const ToyLm& current, const ToyLm& reference,
                        std::span<const Token> prompt, std::span<const Token> response);

// log p_teacher(y|x) - log p_student(y|x)
double minillm_style_reward(const ToyLm& teacher, const ToyLm& student,
                            std::span<const Token> prompt, std::span<const Token> response);

}  // namespace pad
