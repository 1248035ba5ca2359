#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "oracles.hpp"
#include "pad/calibration.hpp"
#include "pad/errors.hpp"

using namespace pad;

namespace {

class ConstantProvider final : public SelectionScoreProvider {
 public:
  explicit ConstantProvider(double score, YesNoLogits judge = {}) : score_(score), judge_(judge) {}
  std::vector<double> choice_scores(const ResponseSet&, std::span<const std::size_t> labels) const override {
    return std::vector<double>(labels.size(), score_);
  }
  YesNoLogits judge(const ResponseSet&, std::size_t, bool) const override { return judge_; }

 private:
  double score_;
  YesNoLogits judge_;
};

ResponseSet dummy_set(std::size_t n, std::uint64_t id = 7) {
  ResponseSet s;
  s.prompt_id = id;
  s.prompt = {1};
  for (std::size_t i = 0; i < n; ++i) s.responses.push_back({{static_cast<Token>(1 + i % 3), 0}});
  return s;
}

QualityFn fixed_quality(std::vector<double> q) {
  return [q = std::move(q)](const ResponseSet&, std::size_t i) { return q.at(i); };
}

}  // namespace

TEST_CASE("choice labels") {
  CHECK(choice_label(0) == 'A');
  CHECK(choice_label(11) == 'L');
  CHECK_THROWS_AS(choice_label(12), InvalidInput);
}

TEST_CASE("identical choice scores give a uniform selection") {
  const ConstantProvider provider(2.5);
  for (std::size_t n = 1; n <= 12; ++n) {
    const auto s = mcq_selection(provider, dummy_set(n), 11 * n);
    for (double p : s.probs) CHECK(p == doctest::Approx(1.0 / n).epsilon(1e-15));
  }
  CHECK_THROWS_AS(mcq_selection(provider, dummy_set(13), 1), InvalidInput);
}

TEST_CASE("choice mapping is a seeded bijection") {
  std::set<std::vector<std::size_t>> seen;
  for (std::uint64_t seed = 0; seed < 400; ++seed) {
    const auto m = choice_mapping(3, seed);
    CHECK(m == choice_mapping(3, seed));
    auto sorted = m;
    std::sort(sorted.begin(), sorted.end());
    CHECK(sorted == std::vector<std::size_t>{0, 1, 2});
    seen.insert(m);
  }
  CHECK(seen.size() == 6);
}

TEST_CASE("synthetic provider selection equals softmax of quality") {
  std::mt19937_64 rng(31);
  for (int i = 0; i < 100; ++i) {
    const std::size_t n = 2 + i % 11;
    const auto q = oracle::random_vector(rng, n, -4.0, 2.0);
    const QualityScoreProvider provider(fixed_quality(q));
    const auto s = mcq_selection(provider, dummy_set(n), rng());
    const auto expect = oracle::softmax(q);
    double total = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      CHECK(s.probs[j] == doctest::Approx(expect[j]).epsilon(1e-12));
      total += s.probs[j];
    }
    CHECK(std::abs(total - 1.0) < 1e-9);
  }
}

TEST_CASE("degenerate choice scores are rejected") {
  CHECK_THROWS_AS(mcq_selection(ConstantProvider(0.0), dummy_set(3), 1), DegenerateScores);
  CHECK_THROWS_AS(mcq_selection(ConstantProvider(NAN), dummy_set(3), 1), DegenerateScores);
  CHECK_THROWS_AS(mcq_selection(ConstantProvider(-1.0), dummy_set(3), 1), DegenerateScores);
}

TEST_CASE("calibration endpoints and operating point") {
  const RewardVector r{{-1.0, -0.3, -2.2}, RewardKind::raw_teacher};
  const std::vector<double> log_sel{std::log(0.5), std::log(0.2), std::log(0.3)};
  CHECK(calibrate(r, log_sel, 0.0).values == r.values);
  CHECK(calibrate(r, log_sel, 1.0).values == log_sel);
  const auto mid = calibrate(r, log_sel, 0.8);
  CHECK(mid.kind == RewardKind::calibrated_teacher);
  CHECK(mid[0] == doctest::Approx(0.2 * -1.0 + 0.8 * std::log(0.5)).epsilon(1e-15));
  CHECK_THROWS_AS(calibrate(r, log_sel, 1.5), InvalidInput);
  CHECK_THROWS_AS(calibrate(r, std::vector<double>{0.0}, 0.5), InvalidInput);
}

TEST_CASE("calibration is monotone in both arguments") {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 1000; ++i) {
    const double alpha = 0.01 + 0.98 * u(rng);
    const RewardVector r{oracle::random_vector(rng, 3, -3.0, 0.0)};
    const auto log_sel = oracle::random_vector(rng, 3, -5.0, 0.0);
    const auto base = calibrate(r, log_sel, alpha);
    RewardVector r2 = r;
    r2.values[1] += u(rng);
    auto s2 = log_sel;
    s2[2] += u(rng);
    CHECK(calibrate(r2, log_sel, alpha)[1] >= base[1]);
    CHECK(calibrate(r, s2, alpha)[2] >= base[2]);
  }
}

TEST_CASE("P(True)") {
  const auto set = dummy_set(3);
  CHECK(p_true(ConstantProvider(1.0, {0.7, 0.7}), set, 0) == 0.5);
  CHECK(p_true(ConstantProvider(1.0, {40.0, 0.0}), set, 1) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(p_true(ConstantProvider(1.0, {40.0, 0.0}), set, 1) < 1.0 + 1e-15);

  std::mt19937_64 rng(33);
  const auto q = oracle::random_vector(rng, 3, -3.0, 3.0);
  const QualityScoreProvider provider(fixed_quality(q), 0.5);
  double mean = (q[0] + q[1] + q[2]) / 3.0;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto two = oracle::softmax({q[i], 0.0});
    CHECK(p_true(provider, set, i) == doctest::Approx(two[0]).epsilon(1e-14));
    const auto with_ref = oracle::softmax({q[i] - 0.5 * mean, 0.0});
    CHECK(p_true_with_reference(provider, set, i) == doctest::Approx(with_ref[0]).epsilon(1e-14));
  }
  // a provider that ignores references answers the same either way
  const ConstantProvider flat(1.0, {0.3, -0.4});
  CHECK(p_true(flat, set, 2) == p_true_with_reference(flat, set, 2));
  CHECK_THROWS_AS(p_true(flat, set, 3), InvalidInput);
}

TEST_CASE("calibrate_with dispatches on the method") {
  std::mt19937_64 rng(34);
  const auto q = oracle::random_vector(rng, 4, -2.0, 0.0);
  const QualityScoreProvider provider(fixed_quality(q));
  const auto set = dummy_set(4);
  const RewardVector r{oracle::random_vector(rng, 4, -2.0, 0.0), RewardKind::raw_teacher};
  CalibrationConfig c;
  c.alpha = 0.8;
  c.seed = 5;

  c.method = CalibrationMethod::mcq;
  const auto soft = oracle::softmax(q);
  auto out = calibrate_with(provider, set, r, c);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(out[i] == doctest::Approx(0.2 * r[i] + 0.8 * std::log(soft[i])).epsilon(1e-12));

  c.method = CalibrationMethod::p_true;
  out = calibrate_with(provider, set, r, c);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(out[i] == doctest::Approx(0.2 * r[i] + 0.8 * std::log(oracle::softmax({q[i], 0.0})[0])).epsilon(1e-12));

  c.alpha = 0.0;
  CHECK(calibrate_with(ConstantProvider(0.0), set, r, c).values == r.values);
}

TEST_CASE("quality tables") {
  std::istringstream in("# prompt response score\n3 0 0.5\n3 1 -1.25  # trailing\n\n10 2 7\n");
  const QualityTable t = QualityTable::read(in);
  CHECK(t.size() == 3);
  CHECK(t.at(3, 1) == -1.25);
  CHECK_THROWS_AS(t.at(4, 0), InvalidInput);
  std::ostringstream out;
  t.write(out);
  std::istringstream again(out.str());
  const QualityTable t2 = QualityTable::read(again);
  CHECK(t2.at(10, 2) == 7.0);
  CHECK(t2.at(3, 0) == 0.5);

  auto table = std::make_shared<QualityTable>(t);
  const QualityScoreProvider provider(table_quality(table));
  auto set = dummy_set(2, 3);
  const auto s = mcq_selection(provider, set, 9);
  CHECK(s.probs[0] == doctest::Approx(oracle::softmax({0.5, -1.25})[0]).epsilon(1e-14));

  for (const char* bad : {"1 2\n", "1 2 3 4\n", "x 1 2\n", "1 1 nan\n"}) {
    std::istringstream b(bad);
    CHECK_THROWS(QualityTable::read(b));
  }
}

TEST_CASE("likelihood quality is the scaled normalized reward") {
  std::mt19937_64 rng(35);
  auto lm = std::make_shared<const ToyLm>(oracle::random_lm(rng, 5, 1, 2.0));
  const auto set = dummy_set(3);
  const auto f = likelihood_quality(lm, 2.0);
  for (std::size_t i = 0; i < 3; ++i)
    CHECK(f(set, i) == 2.0 * normalized_reward(*lm, set.prompt, set.responses[i].tokens));
}
