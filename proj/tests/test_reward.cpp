#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "pad/errors.hpp"
#include "pad/reward.hpp"

using namespace pad;

TEST_CASE("token rewards under uniform logits") {
  const std::size_t V = 6;
  ToyLm lm(Vocab{V, 0}, 1);
  const std::vector<Token> x{2};
  const std::vector<Token> y{4, 1, 5, 0};
  for (std::size_t t = 1; t < y.size(); ++t)
    CHECK(token_reward(lm, x, y, t) == doctest::Approx(-std::log(double(V))).epsilon(1e-15));
  CHECK(token_reward(lm, x, y, y.size()) == 0.0);
  CHECK_THROWS_AS(token_reward(lm, x, y, 0), InvalidInput);
  CHECK_THROWS_AS(token_reward(lm, x, y, 5), InvalidInput);
}

TEST_CASE("token rewards match a naive log-sum-exp oracle") {
  std::mt19937_64 rng(21);
  for (int i = 0; i < 100; ++i) {
    const ToyLm lm = oracle::random_lm(rng, 3 + i % 5, 1 + i % 2, 3.0, static_cast<Token>(i % 3));
    const auto x = oracle::random_tokens(rng, lm, i % 4);
    const auto y = oracle::random_response(rng, lm, 8);
    auto hist = x;
    for (std::size_t t = 1; t <= y.size(); ++t) {
      const double f = oracle::row_logits(lm, hist)[y[t - 1]];
      hist.push_back(y[t - 1]);
      const double expect = t == y.size() ? f : f - oracle::log_z(lm, hist);
      CHECK(std::abs(token_reward(lm, x, y, t) - expect) < 1e-12);
    }
  }
}

TEST_CASE("cumulative reward telescopes") {
  SUBCASE("uniform logits") {
    const double V = 5, L = 4;
    ToyLm lm(Vocab{5, 1}, 2);
    const std::vector<Token> y{0, 2, 3, 1};
    CHECK(cumulative_reward(lm, {}, y) == doctest::Approx(-L * std::log(V) + std::log(V)).epsilon(1e-14));
  }
  SUBCASE("single eos token") {
    std::mt19937_64 rng(22);
    const ToyLm lm = oracle::random_lm(rng, 4, 1, 2.0);
    const std::vector<Token> x{3};
    const std::vector<Token> y{0};
    const double f_eos = lm.logits().at(3, 0);
    CHECK(cumulative_reward(lm, x, y) == doctest::Approx(f_eos).epsilon(1e-15));
    const double log_z1 = oracle::log_z(lm, x);
    CHECK(cumulative_reward(lm, x, y) == doctest::Approx((f_eos - log_z1) + log_z1).epsilon(1e-14));
  }
  SUBCASE("50 random responses") {
    std::mt19937_64 rng(23);
    const ToyLm lm = oracle::random_lm(rng, 7, 2, 3.0, 5);
    double worst = 0.0;
    for (int i = 0; i < 50; ++i) {
      const auto x = oracle::random_tokens(rng, lm, i % 4);
      const auto y = oracle::random_response(rng, lm, 10);
      worst = std::max(worst, std::abs(cumulative_reward(lm, x, y) -
                                       (oracle::log_prob(lm, x, y) + oracle::log_z(lm, x))));
    }
    CHECK(worst < 1e-9);
  }
}

TEST_CASE("normalized reward") {
  SUBCASE("uniform logits give -ln V at any length") {
    ToyLm lm(Vocab{8, 0}, 1);
    for (std::size_t len = 1; len <= 6; ++len) {
      std::vector<Token> y(len, 3);
      y.back() = 0;
      CHECK(normalized_reward(lm, {}, y) == doctest::Approx(-std::log(8.0)).epsilon(1e-14));
    }
  }
  SUBCASE("doubling a repeated pattern leaves it unchanged") {
    // every row identical: a context-free unigram table
    ToyLm lm(Vocab{3, 0}, 1);
    for (std::size_t r = 0; r < 3; ++r) {
      lm.logits().at(r, 0) = 0.3;
      lm.logits().at(r, 1) = -0.2;
      lm.logits().at(r, 2) = 1.1;
    }
    const std::vector<Token> once{1, 2, 0};
    const std::vector<Token> twice{1, 2, 0, 1, 2, 0};
    // the inner eos is an ordinary token to the model
    CHECK(normalized_reward(lm, {}, twice) == doctest::Approx(normalized_reward(lm, {}, once)).epsilon(1e-14));
  }
  SUBCASE("random parameters equal log p / |y|") {
    std::mt19937_64 rng(24);
    for (int i = 0; i < 100; ++i) {
      const ToyLm lm = oracle::random_lm(rng, 4, 1 + i % 2, 2.0);
      const auto x = oracle::random_tokens(rng, lm, 2);
      const auto y = oracle::random_response(rng, lm, 8);
      CHECK(normalized_reward(lm, x, y) == sequence_log_prob(lm, x, y) / double(y.size()));
      CHECK(normalized_reward(lm, x, y) <= 0.0);
    }
  }
}

TEST_CASE("equal-length responses rank the same by normalized reward and log-probability") {
  std::mt19937_64 rng(25);
  const ToyLm lm = oracle::random_lm(rng, 6, 1, 2.0);
  const std::vector<Token> x{4};
  for (int i = 0; i < 200; ++i) {
    std::vector<Token> a = oracle::random_response(rng, lm, 6), b;
    do b = oracle::random_response(rng, lm, 6);
    while (b.size() != a.size());
    const bool by_norm = normalized_reward(lm, x, a) < normalized_reward(lm, x, b);
    const bool by_lp = sequence_log_prob(lm, x, a) < sequence_log_prob(lm, x, b);
    CHECK(by_norm == by_lp);
  }
}

TEST_CASE("reward_set") {
  std::mt19937_64 rng(26);
  const ToyLm lm = oracle::random_lm(rng, 5, 1, 2.0);
  ResponseSet set;
  set.prompt = {1, 2};
  set.responses = {{{3, 0}}, {{4, 4, 0}}, {{3, 0}}, {{0}}};
  const auto r = reward_set(lm, set, RewardKind::raw_student);
  REQUIRE(r.size() == 4);
  CHECK(r.kind == RewardKind::raw_student);
  CHECK(r[0] == r[2]);
  for (std::size_t i = 0; i < 4; ++i) CHECK(r[i] == normalized_reward(lm, set.prompt, set.responses[i].tokens));
}

TEST_CASE("likelihood-ratio rewards") {
  std::mt19937_64 rng(27);
  const ToyLm a = oracle::random_lm(rng, 5, 1, 2.0);
  const ToyLm b = oracle::random_lm(rng, 5, 1, 2.0);
  const ToyLm uniform(Vocab{5, 0}, 1);
  const std::vector<Token> x{3};
  for (int i = 0; i < 30; ++i) {
    const auto y = oracle::random_response(rng, a, 7);
    CHECK(dpo_style_reward(a, a, x, y) == 0.0);
    CHECK(minillm_style_reward(b, b, x, y) == 0.0);
    CHECK(dpo_style_reward(a, uniform, x, y) ==
          doctest::Approx(oracle::log_prob(a, x, y) + double(y.size()) * std::log(5.0)).epsilon(1e-12));
    CHECK(dpo_style_reward(a, b, x, y) ==
          doctest::Approx(oracle::log_prob(a, x, y) - oracle::log_prob(b, x, y)).epsilon(1e-12));
    CHECK(dpo_style_reward(a, b, x, y) == -dpo_style_reward(b, a, x, y));
    CHECK(minillm_style_reward(a, b, x, y) ==
          doctest::Approx(oracle::log_prob(a, x, y) - oracle::log_prob(b, x, y)).epsilon(1e-12));
  }
}
