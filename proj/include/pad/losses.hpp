#pragma once

// Distillation objectives over ranking distributions: VPD is the listwise NLL
// of the teacher's hard ranking under the student's Plackett-Luce model; PPD
// is the Jensen-Shannon divergence between teacher and student distributions.

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "pad/preference.hpp"
#include "pad/toy_lm.hpp"

namespace pad {

enum class Objective { vpd, ppd };

struct LossConfig {
  double beta = 10.0;
  Objective objective = Objective::ppd;
  // Absent: one sub-batch covering every response.
  std::optional<DecompositionPlan> decomposition;
  std::size_t enumeration_cap = kDefaultEnumerationCap;

  void validate() const;
};

// Loss value and its gradient w.r.t. the student rewards.
struct LossValue {
  double value = 0.0;
  std::vector<double> grad;
};

// -log PL(teacher_ranking | beta * student_rewards).
double vpd_loss(std::span<const double> student_rewards, const Ranking& teacher_ranking, double beta);
std::vector<double> vpd_grad(std::span<const double> student_rewards, const Ranking& teacher_ranking,
                             double beta);

double kld(const RankingDistribution& p, const RankingDistribution& q);

// 1/2 [KL(teacher || mix) + KL(student || mix)], mix = (teacher + student) / 2.
double ppd_loss(const RankingDistribution& teacher, const RankingDistribution& student);

double decomposed_ppd_loss(std::span<const RankingDistribution> teacher,
                           std::span<const RankingDistribution> student);

// PPD straight from rewards: enumerates every ranking once, accumulating the
// loss and its reward gradient. The teacher side is a constant.
LossValue ppd_objective(std::span<const double> teacher_rewards, std::span<const double> student_rewards,
                        double beta, std::size_t cap = kDefaultEnumerationCap,
                        TermCounter* counter = nullptr);

// Selected objective over the configured sub-batches.
LossValue evaluate_loss(const LossConfig& config, std::span<const double> teacher_rewards,
                        std::span<const double> student_rewards, TermCounter* counter = nullptr);

std::vector<double> loss_grad_wrt_rewards(const LossConfig& config,
                                          std::span<const double> teacher_rewards,
                                          std::span<const double> student_rewards);

struct ParamGradient {
  double loss = 0.0;
  std::vector<double> reward_grad;
  LogitTable grad;
};

// Chains the reward gradient through r_i = log p(y_i | x) / |y_i|.
ParamGradient loss_and_grad_wrt_params(const LossConfig& config,
                                       std::span<const double> teacher_rewards,
                                       const ToyLm& student, const ResponseSet& responses,
                                       TermCounter* counter = nullptr);
LogitTable loss_grad_wrt_params(const LossConfig& config, std::span<const double> teacher_rewards,
                                const ToyLm& student, const ResponseSet& responses);

namespace serial {

// Reference for ppd_objective built from explicit distributions.
LossValue ppd_objective(std::span<const double> teacher_rewards, std::span<const double> student_rewards,
                        double beta, std::size_t cap = kDefaultEnumerationCap);

}  // namespace serial

}  // namespace pad
