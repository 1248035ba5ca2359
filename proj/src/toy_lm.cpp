#include "pad/toy_lm.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>

#include "pad/errors.hpp"
#include "pad/numeric.hpp"
#include "pad/rng.hpp"
#include "text_io.hpp"

namespace pad {

void Vocab::validate() const {
  if (size < 2) throw InvalidInput("vocab size must be >= 2");
  if (eos_id >= size) throw InvalidInput("eos_id must be < vocab size");
}

void LogitTable::add_scaled(const LogitTable& other, double scale) {
  if (other.rows_ != rows_ || other.cols_ != cols_)
    throw InvalidInput("LogitTable shape mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += scale * other.data_[i];
}

void LogitTable::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

namespace {

std::size_t checked_rows(const Vocab& vocab, std::size_t order) {
  vocab.validate();
  if (order < 1) throw InvalidInput("model order must be >= 1");
  std::size_t rows = 1;
  for (std::size_t i = 0; i < order; ++i) {
    if (rows > std::numeric_limits<std::size_t>::max() / vocab.size / vocab.size)
      throw InvalidInput("logit table too large");
    rows *= vocab.size;
  }
  return rows;
}

}  // namespace

ToyLm::ToyLm(Vocab vocab, std::size_t order)
    : vocab_(vocab), order_(order), logits_(checked_rows(vocab, order), vocab.size) {}

ToyLm::ToyLm(Vocab vocab, std::size_t order, LogitTable logits)
    : vocab_(vocab), order_(order), logits_(std::move(logits)) {
  const std::size_t rows = checked_rows(vocab, order);
  if (logits_.rows() != rows || logits_.cols() != vocab.size)
    throw InvalidInput("logit table shape does not match vocab/order");
  for (double v : logits_.values())
    if (!std::isfinite(v)) throw InvalidInput("logit table contains non-finite entries");
}

void ToyLm::check_tokens(std::span<const Token> tokens) const {
  for (Token t : tokens)
    if (t >= vocab_.size)
      throw InvalidInput("token " + std::to_string(t) + " out of range for vocab size " +
                         std::to_string(vocab_.size));
}

std::size_t ToyLm::context_row(std::span<const Token> prompt,
                               std::span<const Token> generated) const {
  const std::size_t total = prompt.size() + generated.size();
  std::size_t row = 0;
  for (std::size_t j = 0; j < order_; ++j) {
    // position of the j-th (oldest first) context slot in the joint history
    const std::size_t back = order_ - j;
    Token tok = vocab_.begin_id();
    if (back <= total) {
      const std::size_t pos = total - back;
      tok = pos < prompt.size() ? prompt[pos] : generated[pos - prompt.size()];
    }
    if (tok >= vocab_.size)
      throw InvalidInput("token " + std::to_string(tok) + " out of range for vocab size " +
                         std::to_string(vocab_.size));
    row = row * vocab_.size + tok;
  }
  return row;
}

std::vector<double> logits(const ToyLm& lm, std::span<const Token> context) {
  lm.check_tokens(context);
  auto row = lm.logits().row(lm.context_row(context, {}));
  return {row.begin(), row.end()};
}

void check_response(const ToyLm& lm, std::span<const Token> response) {
  if (response.empty()) throw InvalidInput("response must be nonempty");
  lm.check_tokens(response);
  if (response.back() != lm.vocab().eos_id) throw InvalidInput("response must end with eos");
}

double sequence_log_prob(const ToyLm& lm, std::span<const Token> prompt,
                         std::span<const Token> response) {
  lm.check_tokens(prompt);
  check_response(lm, response);
  double total = 0.0;
  for (std::size_t t = 0; t < response.size(); ++t) {
    auto row = lm.logits().row(lm.context_row(prompt, response.first(t)));
    total += row[response[t]] - log_sum_exp(row);
  }
  return total;
}

void accumulate_grad_sequence_log_prob(const ToyLm& lm, std::span<const Token> prompt,
                                       std::span<const Token> response, double scale,
                                       LogitTable& out) {
  lm.check_tokens(prompt);
  check_response(lm, response);
  if (out.rows() != lm.num_contexts() || out.cols() != lm.vocab_size())
    throw InvalidInput("gradient table shape mismatch");
  for (std::size_t t = 0; t < response.size(); ++t) {
    const std::size_t r = lm.context_row(prompt, response.first(t));
    auto row = lm.logits().row(r);
    auto g = out.row(r);
    const double lse = log_sum_exp(row);
    for (std::size_t v = 0; v < row.size(); ++v) g[v] -= scale * std::exp(row[v] - lse);
    g[response[t]] += scale;
  }
}

LogitTable grad_sequence_log_prob(const ToyLm& lm, std::span<const Token> prompt,
                                  std::span<const Token> response) {
  LogitTable out(lm.num_contexts(), lm.vocab_size());
  accumulate_grad_sequence_log_prob(lm, prompt, response, 1.0, out);
  return out;
}

namespace {

Token draw_token(std::span<const double> row, const Decoding& decoding, Rng& rng,
                 std::vector<double>& scratch) {
  if (decoding.greedy)
    return static_cast<Token>(std::max_element(row.begin(), row.end()) - row.begin());
  scratch.resize(row.size());
  const double hi = *std::max_element(row.begin(), row.end());
  double total = 0.0;
  for (std::size_t v = 0; v < row.size(); ++v) {
    scratch[v] = std::exp((row[v] - hi) / decoding.temperature);
    total += scratch[v];
  }
  double u = uniform01(rng) * total;
  for (std::size_t v = 0; v < row.size(); ++v) {
    u -= scratch[v];
    if (u < 0.0) return static_cast<Token>(v);
  }
  // rounding: fall back to the last token with nonzero mass
  for (std::size_t v = row.size(); v-- > 0;)
    if (scratch[v] > 0.0) return static_cast<Token>(v);
  return 0;
}

}  // namespace

ResponseSet sample_responses(const ToyLm& lm, std::span<const Token> prompt,
                             const SamplingOptions& options) {
  if (options.n < 2) throw InvalidInput("sample_responses needs n >= 2");
  if (!options.decoding.greedy &&
      !(options.decoding.temperature > 0.0 && std::isfinite(options.decoding.temperature)))
    throw InvalidInput("temperature must be positive");
  if (options.max_len < 1) throw InvalidInput("max_len must be >= 1");
  lm.check_tokens(prompt);

  const Token eos = lm.vocab().eos_id;
  ResponseSet set;
  set.prompt.assign(prompt.begin(), prompt.end());
  set.responses.reserve(options.n);
  Rng rng(options.seed);
  std::vector<double> scratch;
  for (std::size_t i = 0; i < options.n; ++i) {
    Response resp;
    while (true) {
      if (resp.tokens.size() + 1 == options.max_len) {
        resp.tokens.push_back(eos);
        resp.truncated = true;
        break;
      }
      auto row = lm.logits().row(lm.context_row(prompt, resp.tokens));
      const Token next = draw_token(row, options.decoding, rng, scratch);
      resp.tokens.push_back(next);
      if (next == eos) break;
    }
    set.responses.push_back(std::move(resp));
  }
  return set;
}

void write_model(std::ostream& out, const ToyLm& lm) {
  out << "vocab=" << lm.vocab_size() << " order=" << lm.order() << " eos=" << lm.vocab().eos_id
      << '\n';
  const auto& table = lm.logits();
  for (std::size_t r = 0; r < table.rows(); ++r) {
    auto row = table.row(r);
    for (std::size_t v = 0; v < row.size(); ++v) {
      if (v) out << ' ';
      out << detail::format_double(row[v]);
    }
    out << '\n';
  }
}

ToyLm read_model(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw ConfigError("model file: missing header");
  std::size_t vocab = 0, order = 0, eos = 0;
  bool has_v = false, has_o = false, has_e = false;
  std::istringstream hs(header);
  std::string field;
  while (hs >> field) {
    const auto eq = field.find('=');
    if (eq == std::string::npos) throw ConfigError("model file: bad header field '" + field + "'");
    const std::string key = field.substr(0, eq);
    const std::string_view value = std::string_view(field).substr(eq + 1);
    if (key == "vocab") {
      vocab = detail::parse_uint(value, "vocab");
      has_v = true;
    } else if (key == "order") {
      order = detail::parse_uint(value, "order");
      has_o = true;
    } else if (key == "eos") {
      eos = detail::parse_uint(value, "eos");
      has_e = true;
    } else {
      throw ConfigError("model file: unknown header key '" + key + "'", key);
    }
  }
  if (!(has_v && has_o && has_e)) throw ConfigError("model file: header needs vocab, order, eos");
  Vocab v{vocab, static_cast<Token>(eos)};
  ToyLm lm(v, order);
  auto& table = lm.logits();
  std::string line;
  for (std::size_t r = 0; r < table.rows(); ++r) {
    if (!std::getline(in, line)) throw ConfigError("model file: truncated logit table");
    std::istringstream ls(line);
    std::string tok;
    std::size_t c = 0;
    while (ls >> tok) {
      if (c >= table.cols()) throw ConfigError("model file: too many logits on a row");
      table.at(r, c++) = detail::parse_double(tok, "logit");
    }
    if (c != table.cols()) throw ConfigError("model file: too few logits on a row");
  }
  while (std::getline(in, line))
    if (!detail::trim(line).empty()) throw ConfigError("model file: trailing content");
  return ToyLm(v, order, table);
}

ToyLm load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open model file " + path.string());
  return read_model(in);
}

void save_model_atomic(const std::filesystem::path& path, const ToyLm& lm) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw ConfigError("cannot write " + tmp.string());
    write_model(out, lm);
    if (!out.flush()) throw ConfigError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace pad
