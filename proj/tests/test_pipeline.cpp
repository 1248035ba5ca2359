#include <doctest.h>

#include <cmath>
#include <sstream>

#include "oracles.hpp"
#include "pad/errors.hpp"
#include "pad/pipeline.hpp"

using namespace pad;

namespace {

struct Fixture {
  PlantedTeacher planted;
  std::shared_ptr<const ToyLm> teacher;
  QualityScoreProvider provider;
  std::vector<Prompt> train;
  std::vector<Prompt> eval;

  explicit Fixture(std::uint64_t seed = 3)
      : planted(make_planted_teacher(TeacherSpec{Vocab{8, 0}, 1, 3.0, 1.0, 2.0, seed})),
        teacher(std::make_shared<const ToyLm>(planted.model)),
        provider(likelihood_quality(teacher)),
        train(make_prompts(16, 1, 3, Vocab{8, 0}, seed + 1)),
        eval(make_prompts(10, 1, 3, Vocab{8, 0}, seed + 2, 1000)) {}
};

DistillConfig small_config() {
  DistillConfig c;
  c.steps = 5;
  c.batch = 4;
  c.eval_every = 5;
  return c;
}

class ZeroProvider final : public SelectionScoreProvider {
 public:
  std::vector<double> choice_scores(const ResponseSet&, std::span<const std::size_t> labels) const override {
    return std::vector<double>(labels.size(), 0.0);
  }
  YesNoLogits judge(const ResponseSet&, std::size_t, bool) const override { return {}; }
};

}  // namespace

TEST_CASE("config validation") {
  DistillConfig c;
  CHECK_NOTHROW(c.validate());
  c.n = 6;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
  c = DistillConfig{};
  c.n = 12;
  c.plan = {1, 12};
  CHECK_THROWS_AS(c.validate(), CapacityError);
  c.plan = {3, 4};
  CHECK_NOTHROW(c.validate());
  CHECK(c.resolved_eval_n() == 4);
  c.mode = DecompositionMode::partition;
  CHECK_NOTHROW(c.validate());
  c.n = 16;
  c.plan = {4, 4};
  CHECK_THROWS_AS(c.validate(), InvalidInput);  // 16 MCQ labels in one pooled round
  c = DistillConfig{};
  c.learning_rate = -1;
  CHECK_THROWS_AS(c.validate(), InvalidInput);
}

TEST_CASE("identical teacher and student without calibration give zero loss and update") {
  Fixture f;
  DistillConfig c = small_config();
  c.calibration.alpha = 0.0;
  const Prompt& p = f.train[0];
  const auto out = distill_step(*f.teacher, *f.teacher, p, f.provider, c, step_seeds(1, 1, 0, 0));
  CHECK(std::abs(out.loss) < 1e-10);
  for (double v : out.update.values()) CHECK(std::abs(v) < 1e-10);
}

TEST_CASE("operating point step is finite and deterministic") {
  Fixture f;
  DistillConfig c = small_config();
  c.n = 4;
  c.temperature = 0.8;
  c.calibration.alpha = 0.8;
  c.loss.beta = 10.0;
  const ToyLm student(Vocab{8, 0}, 1);
  const auto seeds = step_seeds(42, 3, 0, 1);
  const auto a = distill_step(*f.teacher, student, f.train[2], f.provider, c, seeds);
  const auto b = distill_step(*f.teacher, student, f.train[2], f.provider, c, seeds);
  CHECK(std::isfinite(a.loss));
  CHECK(a.loss > 0.0);
  for (double v : a.update.values()) CHECK(std::isfinite(v));
  CHECK(a.loss == b.loss);
  CHECK(a.update == b.update);
  CHECK(a.responses.source == ResponseSource::student);
  CHECK(a.responses.size() == 4);
  CHECK(a.ranking_terms == 24);
}

TEST_CASE("degenerate selection scores skip the step") {
  Fixture f;
  const ZeroProvider zero;
  const auto out = distill_step(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.train[0], zero, small_config(),
                                step_seeds(1, 1, 0, 0));
  CHECK(out.skipped);
  for (double v : out.update.values()) CHECK(v == 0.0);

  DistillConfig c = small_config();
  c.steps = 2;
  const auto r = iterative_distill(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.train, {}, zero, c);
  CHECK(r.skipped_steps == 2 * c.batch);
  CHECK(r.student == ToyLm(Vocab{8, 0}, 1));
}

TEST_CASE("ranking terms per prompt-step follow the decomposition plan") {
  Fixture f;
  const auto terms = [&](std::size_t k, std::size_t m) {
    DistillConfig c = small_config();
    c.n = k * m;
    c.plan = {k, m};
    c.steps = 1;
    c.batch = 1;
    return iterative_distill(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.train, {}, f.provider, c).ranking_terms;
  };
  CHECK(terms(1, 4) == 24);
  CHECK(terms(2, 2) == 4);
  CHECK(terms(3, 4) == 72);
  CHECK_THROWS_AS(terms(1, 12), CapacityError);
}

TEST_CASE("zero learning rate leaves the student bit-identical") {
  Fixture f;
  std::mt19937_64 rng(81);
  const ToyLm start = oracle::random_lm(rng, 8, 1, 1.0);
  DistillConfig c = small_config();
  c.learning_rate = 0.0;
  c.n = 4;
  c.plan = {2, 2};
  const auto r = iterative_distill(*f.teacher, start, f.train, f.eval, f.provider, c);
  CHECK(r.student == start);
  CHECK(r.steps_run == 5);
}

TEST_CASE("partition mode loss is the sum of independent sub-losses") {
  Fixture f;
  DistillConfig c = small_config();
  c.n = 6;
  c.plan = {3, 2};
  c.mode = DecompositionMode::partition;
  c.learning_rate = 0.0;
  std::mt19937_64 rng(82);
  const ToyLm student = oracle::random_lm(rng, 8, 1, 0.5);
  for (std::size_t s = 0; s < 5; ++s) {
    const auto out = distill_step(*f.teacher, student, f.train[s], f.provider, c, step_seeds(9, s, 0, 0));
    REQUIRE(out.responses.size() == 6);
    CalibrationConfig cal = c.calibration;
    cal.seed = step_seeds(9, s, 0, 0).mapping;
    const auto target =
        calibrate_with(f.provider, out.responses, reward_set(*f.teacher, out.responses, RewardKind::raw_teacher), cal);
    const auto mine = reward_set(student, out.responses, RewardKind::raw_student);
    double expect = 0.0;
    for (std::size_t b = 0; b < 3; ++b) {
      const std::vector<double> tb(target.values.begin() + 2 * b, target.values.begin() + 2 * b + 2);
      const std::vector<double> sb(mine.values.begin() + 2 * b, mine.values.begin() + 2 * b + 2);
      expect += ppd_loss(full_distribution(tb, c.loss.beta), full_distribution(sb, c.loss.beta));
    }
    CHECK(out.loss == doctest::Approx(expect).epsilon(1e-14));
    CHECK(out.ranking_terms == 6);
  }
}

TEST_CASE("alignment evaluation") {
  Fixture f;
  DistillConfig c = small_config();
  c.calibration.alpha = 0.0;
  const auto self = evaluate_alignment(*f.teacher, *f.teacher, f.eval, f.provider, c);
  CHECK(self.jsd == 0.0);
  CHECK(self.top1 == 1.0);
  CHECK(self.kendall_tau == 1.0);

  c.calibration.alpha = 0.8;
  const auto base = evaluate_alignment(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.eval, f.provider, c);
  CHECK(base.jsd > 0.0);
  const auto again = evaluate_alignment(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.eval, f.provider, c);
  CHECK(again.jsd == base.jsd);
  CHECK(again.top1 == base.top1);
}

TEST_CASE("short training run improves alignment and is reproducible") {
  Fixture f;
  DistillConfig c = small_config();
  c.steps = 150;
  c.batch = 8;
  c.eval_every = 50;
  c.learning_rate = 0.5;
  std::vector<RunMetrics> seen;
  const auto r = iterative_distill(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.train, f.eval, f.provider, c,
                                   [&](const RunMetrics& m, const ToyLm&) { seen.push_back(m); });
  REQUIRE(r.metrics.size() == 4);
  CHECK(seen.size() == 4);
  CHECK(r.metrics.front().step == 0);
  CHECK_FALSE(r.metrics.front().loss.has_value());
  CHECK(r.metrics.back().step == 150);
  CHECK(r.metrics.back().loss.has_value());
  CHECK(r.metrics.back().jsd < r.metrics.front().jsd);

  const auto again = iterative_distill(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.train, f.eval, f.provider, c);
  CHECK(again.student == r.student);
  for (std::size_t i = 0; i < r.metrics.size(); ++i) {
    CHECK(again.metrics[i].jsd == r.metrics[i].jsd);
    CHECK(again.metrics[i].loss == r.metrics[i].loss);
  }
}

TEST_CASE("target JSD stops training early") {
  Fixture f;
  DistillConfig c = small_config();
  c.steps = 100;
  c.eval_every = 10;
  c.target_jsd = 1.0;  // already met at the first eval point
  const auto r = iterative_distill(*f.teacher, ToyLm(Vocab{8, 0}, 1), f.train, f.eval, f.provider, c);
  CHECK(r.steps_run == 10);
}

TEST_CASE("planted teacher prefers its designated continuations") {
  const PlantedTeacher strong = make_planted_teacher(TeacherSpec{Vocab{8, 0}, 1, 6.0, 0.5, 2.0, 17});
  std::mt19937_64 rng(83);
  for (const auto& p : make_prompts(20, 1, 3, Vocab{8, 0}, 5)) {
    for (std::size_t len = 2; len <= 5; ++len) {
      const auto planted = planted_continuation(strong, p.tokens, len);
      REQUIRE(planted.size() == len);
      CHECK(planted.back() == 0u);
      for (int i = 0; i < 20; ++i) {
        std::vector<Token> other;
        do {
          other = oracle::random_response(rng, strong.model, len);
        } while (other.size() != len || other == planted);
        CHECK(normalized_reward(strong.model, p.tokens, planted) > normalized_reward(strong.model, p.tokens, other));
      }
    }
  }
  for (std::size_t r = 0; r < strong.preferred.size(); ++r) CHECK(strong.preferred[r] != 0u);
}

TEST_CASE("prompts") {
  const auto a = make_prompts(30, 2, 4, Vocab{6, 3}, 11, 500);
  const auto b = make_prompts(30, 2, 4, Vocab{6, 3}, 11, 500);
  REQUIRE(a.size() == 30);
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(a[i].id == 500 + i);
    CHECK(a[i].tokens == b[i].tokens);
    CHECK(a[i].tokens.size() >= 2);
    CHECK(a[i].tokens.size() <= 4);
    for (Token t : a[i].tokens) CHECK(t != 3u);
  }
  std::stringstream ss;
  write_prompts(ss, a);
  const auto back = read_prompts(ss);
  REQUIRE(back.size() == a.size());
  CHECK(back[7].tokens == a[7].tokens);
  CHECK(back[7].id == a[7].id);
}
