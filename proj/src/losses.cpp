#include "pad/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "pad/errors.hpp"
#include "pad/numeric.hpp"
#include "pad/reward.hpp"
#include "permutation_blocks.hpp"

namespace pad {

void LossConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidInput("loss beta must be positive");
  if (decomposition) decomposition->validate();
}

namespace {

constexpr double kLogFloor = 1e-300;

void check_sizes(std::size_t a, std::size_t b, const char* what) {
  if (a != b) throw InvalidInput(std::string(what) + ": size mismatch");
}

// Suffix log-sum-exps s_i = log sum_{j>=i} exp(x_(j)) for ranking `order`.
void suffix_lse(const double* x, const std::size_t* order, std::size_t n, double* s) {
  s[n - 1] = x[order[n - 1]];
  for (std::size_t i = n - 1; i-- > 0;) s[i] = log_add_exp(x[order[i]], s[i + 1]);
}

// d/dx_(p) of log PL(order) for every position p, written into dlog[order[p]].
void pl_log_grad(const double* x, const std::size_t* order, const double* s, std::size_t n,
                 double* dlog) {
  for (std::size_t p = 0; p < n; ++p) {
    const double xk = x[order[p]];
    double acc = 0.0;
    for (std::size_t i = 0; i <= p; ++i) acc += std::exp(xk - s[i]);
    dlog[order[p]] = 1.0 - acc;
  }
}

double kl_term(double p, double q) {
  if (p <= 0.0) return 0.0;
  return p * (std::log(std::max(p, kLogFloor)) - std::log(std::max(q, kLogFloor)));
}

}  // namespace

double vpd_loss(std::span<const double> student_rewards, const Ranking& teacher_ranking, double beta) {
  check_sizes(student_rewards.size(), teacher_ranking.size(), "vpd_loss");
  return -pl_log_prob(student_rewards, beta, teacher_ranking.order);
}

std::vector<double> vpd_grad(std::span<const double> student_rewards, const Ranking& teacher_ranking,
                             double beta) {
  check_sizes(student_rewards.size(), teacher_ranking.size(), "vpd_grad");
  teacher_ranking.validate();
  if (!(beta > 0.0)) throw InvalidInput("beta must be positive");
  const std::size_t n = student_rewards.size();
  std::vector<double> grad(n);
  if (n == 0) return grad;
  std::vector<double> x(student_rewards.begin(), student_rewards.end());
  for (double& v : x) v *= beta;
  std::vector<double> s(n);
  suffix_lse(x.data(), teacher_ranking.order.data(), n, s.data());
  pl_log_grad(x.data(), teacher_ranking.order.data(), s.data(), n, grad.data());
  for (double& g : grad) g *= -beta;
  return grad;
}

double kld(const RankingDistribution& p, const RankingDistribution& q) {
  if (p.n != q.n || p.size() != q.size()) throw InvalidInput("kld: distributions differ in size");
  double total = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) total += kl_term(p.masses[i], q.masses[i]);
  return total;
}

double ppd_loss(const RankingDistribution& teacher, const RankingDistribution& student) {
  if (teacher.n != student.n || teacher.size() != student.size())
    throw InvalidInput("ppd_loss: distributions differ in size");
  double total = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    const double t = teacher.masses[i];
    const double s = student.masses[i];
    const double mix = 0.5 * (t + s);
    total += kl_term(t, mix) + kl_term(s, mix);
  }
  return std::clamp(0.5 * total, 0.0, kLn2);
}

double decomposed_ppd_loss(std::span<const RankingDistribution> teacher,
                           std::span<const RankingDistribution> student) {
  check_sizes(teacher.size(), student.size(), "decomposed_ppd_loss");
  double total = 0.0;
  for (std::size_t i = 0; i < teacher.size(); ++i) total += ppd_loss(teacher[i], student[i]);
  return total;
}

LossValue ppd_objective(std::span<const double> teacher_rewards, std::span<const double> student_rewards,
                        double beta, std::size_t cap, TermCounter* counter) {
  check_sizes(teacher_rewards.size(), student_rewards.size(), "ppd_objective");
  if (!(beta > 0.0) || !std::isfinite(beta)) throw InvalidInput("beta must be positive");
  const std::size_t n = student_rewards.size();
  if (n == 0) throw InvalidInput("ppd_objective: no responses");
  if (n > cap)
    throw CapacityError("enumerating " + std::to_string(n) + "! rankings exceeds the cap of n <= " +
                        std::to_string(cap) + "; decompose into smaller sub-batches");
  for (double r : teacher_rewards)
    if (!std::isfinite(r)) throw InvalidInput("rewards must be finite");
  for (double r : student_rewards)
    if (!std::isfinite(r)) throw InvalidInput("rewards must be finite");

  std::vector<double> xt(teacher_rewards.begin(), teacher_rewards.end());
  std::vector<double> xs(student_rewards.begin(), student_rewards.end());
  for (double& v : xt) v *= beta;
  for (double& v : xs) v *= beta;

  const std::uint64_t total = factorial(n);
  const auto blocks = static_cast<std::int64_t>(detail::block_count(total));
  // per block: [loss, grad_0 .. grad_{n-1}]
  const std::size_t stride = n + 1;
  std::vector<double> partial(static_cast<std::size_t>(blocks) * stride, 0.0);

#pragma omp parallel for schedule(static) if (blocks > 1)
  for (std::int64_t b = 0; b < blocks; ++b) {
    double* acc = partial.data() + static_cast<std::size_t>(b) * stride;
    std::vector<double> st(n), ss(n), dlog(n);
    detail::visit_block(n, static_cast<std::uint64_t>(b), total,
                        [&](std::uint64_t, const std::vector<std::size_t>& perm) {
                          suffix_lse(xt.data(), perm.data(), n, st.data());
                          suffix_lse(xs.data(), perm.data(), n, ss.data());
                          double log_t = 0.0, log_s = 0.0;
                          for (std::size_t i = 0; i < n; ++i) {
                            log_t += xt[perm[i]] - st[i];
                            log_s += xs[perm[i]] - ss[i];
                          }
                          const double log_mix = log_add_exp(log_t, log_s) - kLn2;
                          const double t = std::exp(log_t);
                          const double s = std::exp(log_s);
                          acc[0] += 0.5 * (t * (log_t - log_mix) + s * (log_s - log_mix));
                          // dL/dS_tau = (log S - log M) / 2, dS_tau/dx_k = S_tau dlog_k
                          const double coef = 0.5 * (log_s - log_mix) * s;
                          if (coef == 0.0) return;
                          pl_log_grad(xs.data(), perm.data(), ss.data(), n, dlog.data());
                          for (std::size_t k = 0; k < n; ++k) acc[1 + k] += coef * dlog[k];
                        });
  }

  LossValue out;
  out.grad.assign(n, 0.0);
  for (std::int64_t b = 0; b < blocks; ++b) {
    const double* acc = partial.data() + static_cast<std::size_t>(b) * stride;
    out.value += acc[0];
    for (std::size_t k = 0; k < n; ++k) out.grad[k] += acc[1 + k];
  }
  out.value = std::clamp(out.value, 0.0, kLn2);
  for (double& g : out.grad) g *= beta;
  if (counter) counter->ranking_terms += total;
  return out;
}

namespace serial {

LossValue ppd_objective(std::span<const double> teacher_rewards, std::span<const double> student_rewards,
                        double beta, std::size_t cap) {
  const auto t = pad::serial::full_distribution(teacher_rewards, beta, cap);
  const auto s = pad::serial::full_distribution(student_rewards, beta, cap);
  const std::size_t n = s.n;
  LossValue out;
  out.value = ppd_loss(t, s);
  out.grad.assign(n, 0.0);
  auto perm = Ranking::identity(n).order;
  std::size_t idx = 0;
  do {
    const double mix = 0.5 * (t.masses[idx] + s.masses[idx]);
    const double dl_ds = 0.5 * std::log(std::max(s.masses[idx], kLogFloor) / std::max(mix, kLogFloor));
    // d log S_tau / d r_k = -(VPD gradient of the same ranking)
    const auto g = vpd_grad(student_rewards, Ranking{perm}, beta);
    for (std::size_t k = 0; k < n; ++k) out.grad[k] -= dl_ds * s.masses[idx] * g[k];
    ++idx;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return out;
}

}  // namespace serial

LossValue evaluate_loss(const LossConfig& config, std::span<const double> teacher_rewards,
                        std::span<const double> student_rewards, TermCounter* counter) {
  config.validate();
  check_sizes(teacher_rewards.size(), student_rewards.size(), "evaluate_loss");
  const std::size_t n = student_rewards.size();
  const DecompositionPlan plan = config.decomposition.value_or(DecompositionPlan{1, n});
  if (plan.total() != n)
    throw InvalidInput("decomposition " + std::to_string(plan.k) + " x " + std::to_string(plan.m) +
                       " does not cover " + std::to_string(n) + " responses");

  LossValue out;
  out.grad.assign(n, 0.0);
  for (std::size_t b = 0; b < plan.k; ++b) {
    const auto t = teacher_rewards.subspan(b * plan.m, plan.m);
    const auto s = student_rewards.subspan(b * plan.m, plan.m);
    LossValue part;
    if (config.objective == Objective::vpd) {
      const Ranking target = argsort_rewards(t);
      part.value = vpd_loss(s, target, config.beta);
      part.grad = vpd_grad(s, target, config.beta);
      if (counter) ++counter->ranking_terms;
    } else {
      part = ppd_objective(t, s, config.beta, config.enumeration_cap, counter);
    }
    out.value += part.value;
    for (std::size_t k = 0; k < plan.m; ++k) out.grad[b * plan.m + k] = part.grad[k];
  }
  return out;
}

std::vector<double> loss_grad_wrt_rewards(const LossConfig& config,
                                          std::span<const double> teacher_rewards,
                                          std::span<const double> student_rewards) {
  return evaluate_loss(config, teacher_rewards, student_rewards).grad;
}

ParamGradient loss_and_grad_wrt_params(const LossConfig& config,
                                       std::span<const double> teacher_rewards,
                                       const ToyLm& student, const ResponseSet& responses,
                                       TermCounter* counter) {
  const RewardVector student_rewards = reward_set(student, responses, RewardKind::raw_student);
  LossValue lv = evaluate_loss(config, teacher_rewards, student_rewards.values, counter);
  ParamGradient out{lv.value, std::move(lv.grad),
                    LogitTable(student.num_contexts(), student.vocab_size())};
  for (std::size_t i = 0; i < responses.size(); ++i) {
    const auto& y = responses.responses[i].tokens;
    const double scale = out.reward_grad[i] / static_cast<double>(y.size());
    if (scale != 0.0) accumulate_grad_sequence_log_prob(student, responses.prompt, y, scale, out.grad);
  }
  return out;
}

LogitTable loss_grad_wrt_params(const LossConfig& config, std::span<const double> teacher_rewards,
                                const ToyLm& student, const ResponseSet& responses) {
  return loss_and_grad_wrt_params(config, teacher_rewards, student, responses).grad;
}

}  // namespace pad
