#pragma once

// Teacher reward calibration with selection probabilities: multiple-choice
// selection over the candidate set, and the yes/no P(True) variants.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <utility>
#include <vector>

#include "pad/reward.hpp"
#include "pad/toy_lm.hpp"

namespace pad {

inline constexpr std::size_t kMaxChoiceLabels = 12;

// 'A', 'B', ... for label indices below kMaxChoiceLabels.
char choice_label(std::size_t label);

struct SelectionScores {
  // probs[i] is the selection probability of response i.
  std::vector<double> probs;
  // mapping[i] is the label index response i was presented under.
  std::vector<std::size_t> mapping;

  std::size_t size() const noexcept { return probs.size(); }
};

enum class CalibrationMethod { mcq, p_true, p_true_with_ref };

struct CalibrationConfig {
  double alpha = 0.8;
  CalibrationMethod method = CalibrationMethod::mcq;
  std::uint64_t seed = 0;

  void validate() const;
};

struct YesNoLogits {
  double yes = 0.0;
  double no = 0.0;
};

class SelectionScoreProvider {
 public:
  virtual ~SelectionScoreProvider() = default;

  // One nonnegative score per label; label l shows response label_to_response[l].
  virtual std::vector<double> choice_scores(const ResponseSet& set,
                                            std::span<const std::size_t> label_to_response) const = 0;

  // Answer logits for "is response `index` correct?". With references the
  // whole candidate set is part of the question.
  virtual YesNoLogits judge(const ResponseSet& set, std::size_t index, bool with_references) const = 0;
};

// Quality of response `index` within its set.
using QualityFn = std::function<double(const ResponseSet&, std::size_t)>;

// Synthetic provider: choice scores are softmax(quality) over the shown
// labels; yes/no logits are (quality, 0), with the candidate-set mean quality
// subtracted (times reference_weight) when references are included.
class QualityScoreProvider final : public SelectionScoreProvider {
 public:
  explicit QualityScoreProvider(QualityFn quality, double reference_weight = 1.0)
      : quality_(std::move(quality)), reference_weight_(reference_weight) {}

  std::vector<double> choice_scores(const ResponseSet& set,
                                    std::span<const std::size_t> label_to_response) const override;
  YesNoLogits judge(const ResponseSet& set, std::size_t index, bool with_references) const override;

 private:
  QualityFn quality_;
  double reference_weight_;
};

// Quality scores keyed by (prompt id, response index). Text format: one
// `<prompt_id> <response_index> <score>` triple per line; '#' starts a comment.
class QualityTable {
 public:
  void set(std::uint64_t prompt_id, std::size_t index, double score);
  double at(std::uint64_t prompt_id, std::size_t index) const;
  std::size_t size() const noexcept { return scores_.size(); }

  static QualityTable read(std::istream& in);
  void write(std::ostream& out) const;

 private:
  std::map<std::pair<std::uint64_t, std::size_t>, double> scores_;
};

QualityFn table_quality(std::shared_ptr<const QualityTable> table);

// Quality = the model's normalized log-likelihood reward of the response.
QualityFn likelihood_quality(std::shared_ptr<const ToyLm> model, double scale = 1.0);

// Seed-determined random response->label bijection.
std::vector<std::size_t> choice_mapping(std::size_t n, std::uint64_t seed);

// Throws DegenerateScores when the provider gives no usable mass.
SelectionScores mcq_selection(const SelectionScoreProvider& provider, const ResponseSet& set,
                              std::uint64_t seed);

double p_true(const SelectionScoreProvider& provider, const ResponseSet& set, std::size_t index);
double p_true_with_reference(const SelectionScoreProvider& provider, const ResponseSet& set,
                             std::size_t index);

// r_hat_i = (1 - alpha) r_i + alpha log p_sel_i
RewardVector calibrate(const RewardVector& teacher, std::span<const double> log_selection, double alpha);
RewardVector calibrate(const RewardVector& teacher, const SelectionScores& scores,
                       const CalibrationConfig& config);

// Runs the configured selection method on `set` and calibrates `teacher`.
RewardVector calibrate_with(const SelectionScoreProvider& provider, const ResponseSet& set,
                            const RewardVector& teacher, const CalibrationConfig& config);

}  // namespace pad
