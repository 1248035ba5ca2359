#include "pad/verify.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "pad/calibration.hpp"
#include "pad/errors.hpp"
#include "pad/losses.hpp"
#include "pad/preference.hpp"
#include "pad/reward.hpp"
#include "pad/rng.hpp"
#include "pad/toy_lm.hpp"

namespace pad {

double gradient_error(const std::vector<double>& analytic, const std::vector<double>& numeric) {
  if (analytic.size() != numeric.size()) return std::numeric_limits<double>::infinity();
  double scale = 0.0, worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    scale = std::max({scale, std::abs(analytic[i]), std::abs(numeric[i])});
    worst = std::max(worst, std::abs(analytic[i] - numeric[i]));
  }
  return worst / std::max(scale, kGradientFloor);
}

namespace {

double uniform(Rng& rng, double lo, double hi) { return lo + (hi - lo) * uniform01(rng); }

std::vector<double> random_rewards(Rng& rng, std::size_t n, double lo, double hi) {
  std::vector<double> r(n);
  for (double& v : r) v = uniform(rng, lo, hi);
  return r;
}

ToyLm random_lm(Rng& rng, std::size_t vocab, std::size_t order, double spread) {
  ToyLm lm(Vocab{vocab, static_cast<Token>(uniform_index(rng, vocab))}, order);
  for (double& v : lm.logits().values()) v = uniform(rng, -spread, spread);
  return lm;
}

std::vector<Token> random_prompt(Rng& rng, const ToyLm& lm, std::size_t max_len) {
  std::vector<Token> x(uniform_index(rng, max_len + 1));
  for (Token& t : x) t = static_cast<Token>(uniform_index(rng, lm.vocab_size()));
  return x;
}

std::vector<Token> random_response(Rng& rng, const ToyLm& lm, std::size_t max_len) {
  const std::size_t len = 1 + uniform_index(rng, max_len);
  std::vector<Token> y(len);
  for (std::size_t i = 0; i + 1 < len; ++i) {
    auto t = static_cast<Token>(uniform_index(rng, lm.vocab_size() - 1));
    if (t >= lm.vocab().eos_id) ++t;
    y[i] = t;
  }
  y.back() = lm.vocab().eos_id;
  return y;
}

// Oracle: context index rebuilt from an explicitly padded history.
std::size_t naive_row(const ToyLm& lm, const std::vector<Token>& history) {
  std::vector<Token> padded(lm.order(), lm.vocab().eos_id);
  padded.insert(padded.end(), history.begin(), history.end());
  std::size_t row = 0;
  for (std::size_t j = 0; j < lm.order(); ++j) {
    const Token t = padded[padded.size() - lm.order() + j];
    std::size_t weight = 1;
    for (std::size_t p = 0; p + 1 < lm.order() - j; ++p) weight *= lm.vocab_size();
    row += t * weight;
  }
  return row;
}

// Oracle: product of per-step softmax probabilities, then log.
double naive_log_prob(const ToyLm& lm, const std::vector<Token>& x, const std::vector<Token>& y) {
  std::vector<Token> history = x;
  double prob = 1.0;
  for (Token t : y) {
    const auto row = lm.logits().row(naive_row(lm, history));
    double z = 0.0;
    for (double f : row) z += std::exp(f);
    prob *= std::exp(row[t]) / z;
    history.push_back(t);
  }
  return std::log(prob);
}

double naive_log_z(const ToyLm& lm, const std::vector<Token>& history) {
  double z = 0.0;
  for (double f : lm.logits().row(naive_row(lm, history))) z += std::exp(f);
  return std::log(z);
}

std::vector<double> central_difference(const std::function<double(const std::vector<double>&)>& f,
                                       std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double keep = x[i];
    x[i] = keep + h;
    const double up = f(x);
    x[i] = keep - h;
    const double down = f(x);
    x[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

void corrupt(std::vector<double>& g) {
  double scale = 0.0;
  for (double v : g) scale = std::max(scale, std::abs(v));
  for (double& v : g) v += 0.01 * scale + 1e-3;
}

struct Tracker {
  SuiteResult result;
  std::size_t cases = 0;

  Tracker(std::string name, double tol) {
    result.name = std::move(name);
    result.tolerance = tol;
    result.passed = true;
  }
  void observe(double err) {
    ++cases;
    if (!(err <= result.tolerance)) result.passed = false;
    if (std::isnan(err) || err > result.max_error) result.max_error = std::isnan(err) ? INFINITY : err;
  }
  void fail(const std::string& why) {
    result.passed = false;
    result.detail = why;
  }
  SuiteResult finish() {
    if (result.detail.empty()) result.detail = std::to_string(cases) + " cases";
    return result;
  }
};

SuiteResult suite_telescoping(const VerifyOptions& opt) {
  Tracker t("telescoping", 1e-9);
  Rng rng(derive_seed(opt.seed, "telescoping"));
  for (int i = 0; i < 200; ++i) {
    const ToyLm lm = random_lm(rng, 2 + uniform_index(rng, 6), 1 + uniform_index(rng, 2), 3.0);
    const auto x = random_prompt(rng, lm, 4);
    const auto y = random_response(rng, lm, 8);
    const double sum_u = cumulative_reward(lm, x, y);
    const double rhs = naive_log_prob(lm, x, y) + naive_log_z(lm, x);
    t.observe(std::abs(sum_u - rhs));
  }
  return t.finish();
}

SuiteResult suite_pl_normalization(const VerifyOptions& opt) {
  Tracker t("pl-normalization", 1e-9);
  Rng rng(derive_seed(opt.seed, "pl-normalization"));
  for (std::size_t n = 2; n <= 6; ++n)
    for (int i = 0; i < 50; ++i) {
      RewardVector r{random_rewards(rng, n, -3.0, 3.0)};
      const double beta = uniform(rng, 0.5, 10.0);
      Ranking perm = Ranking::identity(n);
      double total = 0.0;
      do total += pl_ranking_prob(r, beta, perm);
      while (std::next_permutation(perm.order.begin(), perm.order.end()));
      t.observe(std::abs(total - 1.0));
    }
  return t.finish();
}

SuiteResult suite_bt_reduction(const VerifyOptions& opt) {
  Tracker t("bt-reduction", 1e-12);
  Rng rng(derive_seed(opt.seed, "bt-reduction"));
  for (int i = 0; i < 1000; ++i) {
    const double r1 = uniform(rng, -5.0, 5.0), r2 = uniform(rng, -5.0, 5.0);
    const double beta = uniform(rng, 0.1, 10.0);
    const double pl = pl_ranking_prob(RewardVector{{r1, r2}}, beta, Ranking{{0, 1}});
    t.observe(std::abs(pl - bt_pair_prob(r1, r2, beta)));
  }
  return t.finish();
}

SuiteResult suite_shift_invariance(const VerifyOptions& opt) {
  Tracker t("shift-invariance", 1e-9);
  Rng rng(derive_seed(opt.seed, "shift-invariance"));
  for (int i = 0; i < 500; ++i) {
    const std::size_t n = 2 + uniform_index(rng, 5);
    RewardVector r{random_rewards(rng, n, -3.0, 3.0)};
    const double beta = uniform(rng, 0.5, 10.0);
    const double c = uniform(rng, -100.0, 100.0);
    RewardVector shifted = r;
    for (double& v : shifted.values) v += c;
    const Ranking perm{unrank_permutation(n, uniform_index(rng, factorial(n)))};
    t.observe(std::abs(pl_ranking_prob(r, beta, perm) - pl_ranking_prob(shifted, beta, perm)));
  }
  return t.finish();
}

RankingDistribution product_joint(const RankingDistribution& a, const RankingDistribution& b) {
  RankingDistribution joint;
  joint.n = 0;
  for (double pa : a.masses)
    for (double pb : b.masses) joint.masses.push_back(pa * pb);
  return joint;
}

SuiteResult suite_kld_additivity(const VerifyOptions& opt) {
  Tracker t("kld-additivity", 1e-10);
  Rng rng(derive_seed(opt.seed, "kld-additivity"));
  for (std::size_t m : {2u, 3u})
    for (int i = 0; i < 100; ++i) {
      const double beta = uniform(rng, 0.5, 10.0);
      RankingDistribution p[2], q[2];
      for (int b = 0; b < 2; ++b) {
        p[b] = full_distribution(random_rewards(rng, m, -1.0, 0.0), beta);
        q[b] = full_distribution(random_rewards(rng, m, -1.0, 0.0), beta);
      }
      const double joint = kld(product_joint(p[0], p[1]), product_joint(q[0], q[1]));
      t.observe(std::abs(joint - (kld(p[0], q[0]) + kld(p[1], q[1]))));
      const double single = decomposed_ppd_loss(std::span(p, 1), std::span(q, 1));
      if (single != ppd_loss(p[0], q[0])) t.fail("decomposed_ppd_loss(k=1) differs from ppd_loss");
    }
  return t.finish();
}

SuiteResult suite_grad_toy_lm(const VerifyOptions& opt) {
  Tracker t("grad-toy-lm", 1e-4);
  Rng rng(derive_seed(opt.seed, "grad-toy-lm"));
  for (int i = 0; i < 20; ++i) {
    ToyLm lm = random_lm(rng, 3 + uniform_index(rng, 5), 1 + uniform_index(rng, 2), 2.0);
    const auto x = random_prompt(rng, lm, 3);
    const auto y = random_response(rng, lm, 8);
    const auto analytic = grad_sequence_log_prob(lm, x, y);
    std::vector<double> a, fd;
    for (int e = 0; e < 100; ++e) {
      const std::size_t idx = uniform_index(rng, lm.logits().size());
      double& w = lm.logits().values()[idx];
      const double keep = w;
      w = keep + 1e-5;
      const double up = sequence_log_prob(lm, x, y);
      w = keep - 1e-5;
      const double down = sequence_log_prob(lm, x, y);
      w = keep;
      a.push_back(analytic.values()[idx]);
      fd.push_back((up - down) / 2e-5);
    }
    if (opt.corrupt_gradient) corrupt(a);
    t.observe(gradient_error(a, fd));
  }
  return t.finish();
}

LossConfig random_loss_config(Rng& rng, Objective objective, std::size_t n) {
  static constexpr double kBetas[] = {1.0, 2.0, 5.0, 8.0, 10.0};
  LossConfig c;
  c.objective = objective;
  c.beta = kBetas[uniform_index(rng, 5)];
  if (n % 2 == 0 && n >= 4 && uniform01(rng) < 0.5) c.decomposition = DecompositionPlan{2, n / 2};
  return c;
}

SuiteResult suite_grad_rewards(const VerifyOptions& opt) {
  Tracker t("grad-rewards", 1e-4);
  Rng rng(derive_seed(opt.seed, "grad-rewards"));
  for (Objective obj : {Objective::vpd, Objective::ppd})
    for (int i = 0; i < 100; ++i) {
      const std::size_t n = 2 + uniform_index(rng, 5);
      const LossConfig config = random_loss_config(rng, obj, n);
      const auto teacher = random_rewards(rng, n, -1.5, 0.0);
      const auto student = random_rewards(rng, n, -1.5, 0.0);
      auto analytic = loss_grad_wrt_rewards(config, teacher, student);
      const auto fd = central_difference(
          [&](const std::vector<double>& s) { return evaluate_loss(config, teacher, s).value; }, student,
          1e-6);
      if (opt.corrupt_gradient) corrupt(analytic);
      t.observe(gradient_error(analytic, fd));
    }
  return t.finish();
}

SuiteResult suite_grad_params(const VerifyOptions& opt) {
  Tracker t("grad-params", 1e-4);
  Rng rng(derive_seed(opt.seed, "grad-params"));
  for (Objective obj : {Objective::vpd, Objective::ppd})
    for (int i = 0; i < 100; ++i) {
      ToyLm student = random_lm(rng, 3 + uniform_index(rng, 4), 1, 1.0);
      const std::size_t n = 2 + uniform_index(rng, 4);
      const LossConfig config = random_loss_config(rng, obj, n);
      SamplingOptions so;
      so.n = n;
      so.max_len = 6;
      so.seed = rng();
      const ResponseSet set = sample_responses(student, random_prompt(rng, student, 3), so);
      const auto teacher = random_rewards(rng, n, -2.0, -0.5);
      const LogitTable analytic = loss_grad_wrt_params(config, teacher, student, set);
      std::vector<double> theta(student.logits().values().begin(), student.logits().values().end());
      const auto fd = central_difference(
          [&](const std::vector<double>& w) {
            std::copy(w.begin(), w.end(), student.logits().values().begin());
            return evaluate_loss(config, teacher, reward_set(student, set, RewardKind::raw_student).values)
                .value;
          },
          theta, 1e-5);
      std::copy(theta.begin(), theta.end(), student.logits().values().begin());
      std::vector<double> a(analytic.values().begin(), analytic.values().end());
      if (opt.corrupt_gradient) corrupt(a);
      t.observe(gradient_error(a, fd));
    }
  return t.finish();
}

SuiteResult suite_calibration(const VerifyOptions& opt) {
  Tracker t("calibration", 0.0);
  Rng rng(derive_seed(opt.seed, "calibration"));
  for (int i = 0; i < 1000; ++i) {
    const std::size_t n = 2 + uniform_index(rng, 5);
    RewardVector r{random_rewards(rng, n, -3.0, 0.0), RewardKind::raw_teacher};
    std::vector<double> log_sel(n);
    for (double& v : log_sel) v = std::log(uniform(rng, 1e-3, 1.0));
    const auto at0 = calibrate(r, log_sel, 0.0);
    const auto at1 = calibrate(r, log_sel, 1.0);
    if (at0.values != r.values) t.fail("alpha = 0 changed the teacher rewards");
    if (at1.values != log_sel) t.fail("alpha = 1 differs from log p_sel");

    // monotonicity at alpha = 0.8 in each argument
    const std::size_t k = uniform_index(rng, n);
    const auto base = calibrate(r, log_sel, 0.8);
    RewardVector r_up = r;
    r_up.values[k] += uniform(rng, 0.0, 1.0);
    auto sel_up = log_sel;
    sel_up[k] = std::min(0.0, sel_up[k] + uniform(rng, 0.0, 1.0));
    const double drop = std::max(base.values[k] - calibrate(r_up, log_sel, 0.8).values[k],
                                 base.values[k] - calibrate(r, sel_up, 0.8).values[k]);
    t.observe(std::max(drop, 0.0));
  }
  return t.finish();
}

SuiteResult suite_kernel_parity(const VerifyOptions& opt) {
  Tracker t("kernel-parity", 1e-12);
  Rng rng(derive_seed(opt.seed, "kernel-parity"));
  for (std::size_t n = 2; n <= 7; ++n)
    for (int i = 0; i < 5; ++i) {
      const double beta = uniform(rng, 1.0, 10.0);
      const auto a = random_rewards(rng, n, -1.0, 0.0);
      const auto b = random_rewards(rng, n, -1.0, 0.0);
      const auto par = full_distribution(a, beta);
      const auto ser = serial::full_distribution(a, beta);
      double err = 0.0;
      for (std::size_t j = 0; j < par.size(); ++j) err = std::max(err, std::abs(par.masses[j] - ser.masses[j]));
      const auto lp = ppd_objective(b, a, beta);
      const auto ls = serial::ppd_objective(b, a, beta);
      err = std::max(err, std::abs(lp.value - ls.value));
      err = std::max(err, gradient_error(lp.grad, ls.grad) * 1e-3);
      t.observe(err);
    }
  return t.finish();
}

SuiteResult suite_decomposition_economy(const VerifyOptions& opt) {
  Tracker t("decomposition-economy", 0.0);
  Rng rng(derive_seed(opt.seed, "decomposition-economy"));
  const auto terms = [&](std::size_t k, std::size_t m) {
    LossConfig c;
    c.decomposition = DecompositionPlan{k, m};
    TermCounter counter;
    evaluate_loss(c, random_rewards(rng, k * m, -1.0, 0.0), random_rewards(rng, k * m, -1.0, 0.0), &counter);
    return counter.ranking_terms;
  };
  const auto small = terms(3, 4);
  const auto full = terms(1, 8);
  if (small != 72) t.fail("plan 3x4 evaluated " + std::to_string(small) + " terms, expected 72");
  if (full != 40320) t.fail("plan 1x8 evaluated " + std::to_string(full) + " terms, expected 40320");
  bool rejected = false;
  try {
    terms(1, 12);
  } catch (const CapacityError&) {
    rejected = true;
  }
  if (!rejected) t.fail("plan 1x12 was not rejected by the enumeration cap");
  t.observe(0.0);
  if (t.result.passed) t.result.detail = "3x4 -> 72 terms, 1x8 -> 40320 terms, 1x12 rejected";
  return t.finish();
}

using SuiteFn = SuiteResult (*)(const VerifyOptions&);

struct Suite {
  const char* name;
  SuiteFn fn;
};

constexpr Suite kSuites[] = {
    {"telescoping", suite_telescoping},
    {"pl-normalization", suite_pl_normalization},
    {"bt-reduction", suite_bt_reduction},
    {"shift-invariance", suite_shift_invariance},
    {"kld-additivity", suite_kld_additivity},
    {"grad-toy-lm", suite_grad_toy_lm},
    {"grad-rewards", suite_grad_rewards},
    {"grad-params", suite_grad_params},
    {"calibration", suite_calibration},
    {"kernel-parity", suite_kernel_parity},
    {"decomposition-economy", suite_decomposition_economy},
};

}  // namespace

std::vector<std::string> verify_suite_names() {
  std::vector<std::string> names;
  for (const auto& s : kSuites) names.emplace_back(s.name);
  return names;
}

std::vector<SuiteResult> run_verify(std::string_view only, const VerifyOptions& options) {
  std::vector<SuiteResult> out;
  for (const auto& s : kSuites) {
    if (!only.empty() && only != s.name) continue;
    try {
      out.push_back(s.fn(options));
    } catch (const std::exception& e) {
      out.push_back({s.name, false, INFINITY, 0.0, std::string("threw: ") + e.what()});
    }
  }
  if (!only.empty() && out.empty()) {
    std::ostringstream os;
    os << "unknown suite '" << only << "'; available:";
    for (const auto& s : kSuites) os << ' ' << s.name;
    throw InvalidInput(os.str());
  }
  return out;
}

}  // namespace pad
