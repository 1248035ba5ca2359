#pragma once

// Order-c tabular softmax language model. Each context of the last c tokens
// (left-padded with the begin token) selects one row of next-token logits.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

namespace pad {

using Token = std::uint32_t;

struct Vocab {
  std::size_t size = 2;
  Token eos_id = 0;

  // The eos token doubles as the begin-of-sequence pad for short contexts.
  Token begin_id() const noexcept { return eos_id; }
  void validate() const;

  friend bool operator==(const Vocab&, const Vocab&) = default;
};

// Dense rows x V table. Used both for model logits and for gradients.
class LogitTable {
 public:
  LogitTable() = default;
  LogitTable(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  double& at(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

  std::span<const double> values() const noexcept { return data_; }
  std::span<double> values() noexcept { return data_; }

  // this += scale * other
  void add_scaled(const LogitTable& other, double scale);
  void fill(double v);

  friend bool operator==(const LogitTable&, const LogitTable&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

class ToyLm {
 public:
  // All-zero logits (uniform next-token distribution everywhere).
  ToyLm(Vocab vocab, std::size_t order);
  ToyLm(Vocab vocab, std::size_t order, LogitTable logits);

  const Vocab& vocab() const noexcept { return vocab_; }
  std::size_t order() const noexcept { return order_; }
  std::size_t vocab_size() const noexcept { return vocab_.size; }
  std::size_t num_contexts() const noexcept { return logits_.rows(); }

  const LogitTable& logits() const noexcept { return logits_; }
  LogitTable& logits() noexcept { return logits_; }

  // Row index for the context formed by `prompt ++ generated`, using its last
  // `order()` tokens. Throws InvalidInput on out-of-range tokens.
  std::size_t context_row(std::span<const Token> prompt, std::span<const Token> generated) const;

  void check_tokens(std::span<const Token> tokens) const;

  friend bool operator==(const ToyLm&, const ToyLm&) = default;

 private:
  Vocab vocab_;
  std::size_t order_;
  LogitTable logits_;
};

struct Response {
  std::vector<Token> tokens;
  // Hit max_len and was force-terminated with eos.
  bool truncated = false;

  std::size_t length() const noexcept { return tokens.size(); }
  friend bool operator==(const Response&, const Response&) = default;
};

enum class ResponseSource { student, teacher, external };

struct ResponseSet {
  std::uint64_t prompt_id = 0;
  std::vector<Token> prompt;
  std::vector<Response> responses;
  ResponseSource source = ResponseSource::external;

  std::size_t size() const noexcept { return responses.size(); }
};

struct Decoding {
  bool greedy = false;
  double temperature = 1.0;

  static Decoding sample(double temperature) { return {false, temperature}; }
  static Decoding argmax() { return {true, 1.0}; }
};

struct SamplingOptions {
  std::size_t n = 4;
  Decoding decoding = Decoding::sample(0.8);
  // Maximum response length, counting the terminating eos.
  std::size_t max_len = 8;
  std::uint64_t seed = 0;
};

// Next-token logits f(. | context); context is the full token history.
std::vector<double> logits(const ToyLm& lm, std::span<const Token> context);

// log p(y | x) = sum_t log softmax(f(. | x, y_<t))[y_t].
double sequence_log_prob(const ToyLm& lm, std::span<const Token> prompt,
                         std::span<const Token> response);

// Gradient of sequence_log_prob w.r.t. every logit entry.
LogitTable grad_sequence_log_prob(const ToyLm& lm, std::span<const Token> prompt,
                                  std::span<const Token> response);

// out += scale * grad_sequence_log_prob(lm, prompt, response)
void accumulate_grad_sequence_log_prob(const ToyLm& lm, std::span<const Token> prompt,
                                       std::span<const Token> response, double scale,
                                       LogitTable& out);

ResponseSet sample_responses(const ToyLm& lm, std::span<const Token> prompt,
                             const SamplingOptions& options);

// Nonempty, terminated by eos, tokens in range.
void check_response(const ToyLm& lm, std::span<const Token> response);

// Text format: `vocab=V order=c eos=e`, then V^c lines of V logits (%.17g).
void write_model(std::ostream& out, const ToyLm& lm);
ToyLm read_model(std::istream& in);
ToyLm load_model(const std::filesystem::path& path);
// Writes to a sibling temp file then renames over `path`.
void save_model_atomic(const std::filesystem::path& path, const ToyLm& lm);

}  // namespace pad
