#pragma once

// Brute-force reference computations shared by the tests. Nothing here calls
// into the library's numeric paths.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "pad/toy_lm.hpp"

namespace oracle {

inline std::size_t ipow(std::size_t b, std::size_t e) {
  std::size_t r = 1;
  while (e--) r *= b;
  return r;
}

inline std::size_t row_of(const pad::ToyLm& lm, std::vector<pad::Token> history) {
  const std::size_t c = lm.order();
  std::vector<pad::Token> padded(c, lm.vocab().eos_id);
  padded.insert(padded.end(), history.begin(), history.end());
  std::size_t row = 0;
  for (std::size_t j = 0; j < c; ++j) row += padded[padded.size() - c + j] * ipow(lm.vocab_size(), c - 1 - j);
  return row;
}

inline std::vector<double> softmax(std::vector<double> f) {
  double z = 0.0;
  for (double v : f) z += std::exp(v);
  for (double& v : f) v = std::exp(v) / z;
  return f;
}

inline std::vector<double> row_logits(const pad::ToyLm& lm, const std::vector<pad::Token>& history) {
  const auto r = lm.logits().row(row_of(lm, history));
  return {r.begin(), r.end()};
}

inline double log_prob(const pad::ToyLm& lm, const std::vector<pad::Token>& x,
                       const std::vector<pad::Token>& y) {
  auto h = x;
  double p = 1.0;
  for (auto t : y) {
    p *= softmax(row_logits(lm, h))[t];
    h.push_back(t);
  }
  return std::log(p);
}

inline double log_z(const pad::ToyLm& lm, const std::vector<pad::Token>& history) {
  double z = 0.0;
  for (double v : row_logits(lm, history)) z += std::exp(v);
  return std::log(z);
}

// Plackett-Luce as a product of explicit stage softmaxes.
inline double pl_prob(const std::vector<double>& r, double beta, const std::vector<std::size_t>& order) {
  double p = 1.0;
  for (std::size_t i = 0; i < order.size(); ++i) {
    double denom = 0.0;
    for (std::size_t j = i; j < order.size(); ++j) denom += std::exp(beta * r[order[j]]);
    p *= std::exp(beta * r[order[i]]) / denom;
  }
  return p;
}

// All permutations in lexicographic order.
inline std::vector<std::vector<std::size_t>> permutations(std::size_t n) {
  std::vector<std::size_t> p(n);
  std::iota(p.begin(), p.end(), 0);
  std::vector<std::vector<std::size_t>> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

inline std::vector<double> pl_masses(const std::vector<double>& r, double beta) {
  std::vector<double> m;
  for (const auto& p : permutations(r.size())) m.push_back(pl_prob(r, beta, p));
  return m;
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i)
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  return s;
}

inline double jsd(const std::vector<double>& p, const std::vector<double>& q) {
  std::vector<double> m(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) m[i] = 0.5 * (p[i] + q[i]);
  return 0.5 * (kl(p, m) + kl(q, m));
}

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

inline pad::ToyLm random_lm(std::mt19937_64& rng, std::size_t vocab, std::size_t order, double spread,
                            pad::Token eos = 0) {
  pad::ToyLm lm(pad::Vocab{vocab, eos}, order);
  std::uniform_real_distribution<double> u(-spread, spread);
  for (double& v : lm.logits().values()) v = u(rng);
  return lm;
}

inline std::vector<pad::Token> random_response(std::mt19937_64& rng, const pad::ToyLm& lm, std::size_t max_len) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  std::uniform_int_distribution<pad::Token> tok(0, static_cast<pad::Token>(lm.vocab_size() - 1));
  std::vector<pad::Token> y(len(rng));
  for (std::size_t i = 0; i + 1 < y.size(); ++i) {
    do y[i] = tok(rng);
    while (y[i] == lm.vocab().eos_id);
  }
  y.back() = lm.vocab().eos_id;
  return y;
}

inline std::vector<pad::Token> random_tokens(std::mt19937_64& rng, const pad::ToyLm& lm, std::size_t len) {
  std::uniform_int_distribution<pad::Token> tok(0, static_cast<pad::Token>(lm.vocab_size() - 1));
  std::vector<pad::Token> x(len);
  for (auto& t : x) t = tok(rng);
  return x;
}

}  // namespace oracle
