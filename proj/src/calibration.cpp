#include "pad/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

#include "pad/errors.hpp"
#include "pad/rng.hpp"
#include "text_io.hpp"

namespace pad {

char choice_label(std::size_t label) {
  if (label >= kMaxChoiceLabels) throw InvalidInput("choice label index out of range");
  return static_cast<char>('A' + label);
}

void CalibrationConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw InvalidInput("calibration alpha must lie in [0, 1]");
}

std::vector<double> QualityScoreProvider::choice_scores(
    const ResponseSet& set, std::span<const std::size_t> label_to_response) const {
  std::vector<double> q;
  q.reserve(label_to_response.size());
  for (std::size_t idx : label_to_response) q.push_back(quality_(set, idx));
  const double hi = q.empty() ? 0.0 : *std::max_element(q.begin(), q.end());
  for (double& v : q) v = std::exp(v - hi);
  return q;
}

YesNoLogits QualityScoreProvider::judge(const ResponseSet& set, std::size_t index,
                                        bool with_references) const {
  double yes = quality_(set, index);
  if (with_references && set.size() > 0) {
    double mean = 0.0;
    for (std::size_t j = 0; j < set.size(); ++j) mean += quality_(set, j);
    mean /= static_cast<double>(set.size());
    yes -= reference_weight_ * mean;
  }
  return {yes, 0.0};
}

void QualityTable::set(std::uint64_t prompt_id, std::size_t index, double score) {
  if (!std::isfinite(score)) throw InvalidInput("quality score must be finite");
  scores_[{prompt_id, index}] = score;
}

double QualityTable::at(std::uint64_t prompt_id, std::size_t index) const {
  auto it = scores_.find({prompt_id, index});
  if (it == scores_.end())
    throw InvalidInput("no quality score for prompt " + std::to_string(prompt_id) + " response " +
                       std::to_string(index));
  return it->second;
}

QualityTable QualityTable::read(std::istream& in) {
  QualityTable table;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    auto body = detail::trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    std::istringstream ls{std::string(body)};
    std::string pid, idx, score, extra;
    if (!(ls >> pid >> idx >> score) || (ls >> extra))
      throw ConfigError("quality table line " + std::to_string(lineno) +
                        ": expected '<prompt_id> <response_index> <score>'");
    table.set(detail::parse_uint(pid, "prompt_id"),
              static_cast<std::size_t>(detail::parse_uint(idx, "response_index")),
              detail::parse_double(score, "score"));
  }
  return table;
}

void QualityTable::write(std::ostream& out) const {
  for (const auto& [key, score] : scores_)
    out << key.first << ' ' << key.second << ' ' << detail::format_double(score) << '\n';
}

QualityFn table_quality(std::shared_ptr<const QualityTable> table) {
  return [table = std::move(table)](const ResponseSet& set, std::size_t index) {
    return table->at(set.prompt_id, index);
  };
}

QualityFn likelihood_quality(std::shared_ptr<const ToyLm> model, double scale) {
  return [model = std::move(model), scale](const ResponseSet& set, std::size_t index) {
    return scale * normalized_reward(*model, set.prompt, set.responses.at(index).tokens);
  };
}

std::vector<std::size_t> choice_mapping(std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> mapping(n);
  for (std::size_t i = 0; i < n; ++i) mapping[i] = i;
  Rng rng(seed);
  for (std::size_t i = n; i > 1; --i) std::swap(mapping[i - 1], mapping[uniform_index(rng, i)]);
  return mapping;
}

SelectionScores mcq_selection(const SelectionScoreProvider& provider, const ResponseSet& set,
                              std::uint64_t seed) {
  const std::size_t n = set.size();
  if (n == 0) throw InvalidInput("mcq_selection needs at least one response");
  if (n > kMaxChoiceLabels)
    throw InvalidInput("mcq_selection supports at most " + std::to_string(kMaxChoiceLabels) +
                       " responses");
  SelectionScores out;
  out.mapping = choice_mapping(n, seed);
  std::vector<std::size_t> label_to_response(n);
  for (std::size_t i = 0; i < n; ++i) label_to_response[out.mapping[i]] = i;

  const auto scores = provider.choice_scores(set, label_to_response);
  if (scores.size() != n) throw InvalidInput("provider returned the wrong number of choice scores");
  double total = 0.0;
  for (double s : scores) {
    if (!std::isfinite(s) || s < 0.0) throw DegenerateScores("choice scores must be finite and >= 0");
    total += s;
  }
  if (total <= 0.0) throw DegenerateScores("all choice scores are zero");
  out.probs.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    out.probs[i] = scores[out.mapping[i]] / total;
    if (out.probs[i] <= 0.0)
      throw DegenerateScores(std::string("choice ") + choice_label(out.mapping[i]) +
                             " has zero selection probability");
  }
  return out;
}

namespace {

double two_way_softmax(YesNoLogits l) {
  const double d = l.yes - l.no;
  if (d >= 0.0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

double log_two_way_softmax(YesNoLogits l) {
  const double d = l.yes - l.no;
  return d >= 0.0 ? -std::log1p(std::exp(-d)) : d - std::log1p(std::exp(d));
}

void check_index(const ResponseSet& set, std::size_t index) {
  if (index >= set.size()) throw InvalidInput("response index out of range");
}

}  // namespace

double p_true(const SelectionScoreProvider& provider, const ResponseSet& set, std::size_t index) {
  check_index(set, index);
  return two_way_softmax(provider.judge(set, index, false));
}

double p_true_with_reference(const SelectionScoreProvider& provider, const ResponseSet& set,
                             std::size_t index) {
  check_index(set, index);
  return two_way_softmax(provider.judge(set, index, true));
}

RewardVector calibrate(const RewardVector& teacher, std::span<const double> log_selection,
                       double alpha) {
  CalibrationConfig{alpha}.validate();
  if (log_selection.size() != teacher.size())
    throw InvalidInput("calibrate: reward and selection sizes differ");
  RewardVector out;
  out.kind = RewardKind::calibrated_teacher;
  out.values.resize(teacher.size());
  for (std::size_t i = 0; i < teacher.size(); ++i) {
    // endpoints exact: alpha = 0 keeps r, alpha = 1 keeps log p_sel
    if (alpha == 0.0)
      out.values[i] = teacher.values[i];
    else if (alpha == 1.0)
      out.values[i] = log_selection[i];
    else
      out.values[i] = (1.0 - alpha) * teacher.values[i] + alpha * log_selection[i];
  }
  return out;
}

RewardVector calibrate(const RewardVector& teacher, const SelectionScores& scores,
                       const CalibrationConfig& config) {
  config.validate();
  std::vector<double> log_sel(scores.probs.size());
  for (std::size_t i = 0; i < log_sel.size(); ++i) {
    if (!(scores.probs[i] > 0.0)) throw InvalidInput("selection probability must be positive");
    log_sel[i] = std::log(scores.probs[i]);
  }
  return calibrate(teacher, log_sel, config.alpha);
}

RewardVector calibrate_with(const SelectionScoreProvider& provider, const ResponseSet& set,
                            const RewardVector& teacher, const CalibrationConfig& config) {
  config.validate();
  if (teacher.size() != set.size()) throw InvalidInput("calibrate: reward and response counts differ");
  if (config.alpha == 0.0) return calibrate(teacher, teacher.values, 0.0);
  switch (config.method) {
    case CalibrationMethod::mcq:
      return calibrate(teacher, mcq_selection(provider, set, config.seed), config);
    case CalibrationMethod::p_true:
    case CalibrationMethod::p_true_with_ref: {
      const bool refs = config.method == CalibrationMethod::p_true_with_ref;
      std::vector<double> log_sel(set.size());
      for (std::size_t i = 0; i < set.size(); ++i)
        log_sel[i] = log_two_way_softmax(provider.judge(set, i, refs));
      return calibrate(teacher, log_sel, config.alpha);
    }
  }
  throw InvalidInput("unknown calibration method");
}

}  // namespace pad
