#include "pad/config.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>

#include "pad/errors.hpp"
#include "text_io.hpp"

namespace pad {

namespace {

constexpr std::array kSchema = {
    ConfigKey{"seed", "1", "root seed; every random stream is derived from it"},
    ConfigKey{"model.vocab", "8", "vocabulary size V"},
    ConfigKey{"model.order", "1", "context length c of the tabular models"},
    ConfigKey{"model.eos", "0", "eos token id (also the begin-of-sequence pad)"},
    ConfigKey{"teacher.path", "", "teacher model file; empty builds a planted teacher"},
    ConfigKey{"teacher.boost", "3", "planted teacher: logit boost of the preferred next token"},
    ConfigKey{"teacher.noise", "1", "planted teacher: half-width of uniform logit noise"},
    ConfigKey{"teacher.eos_bias", "2", "planted teacher: logit added to eos in every row"},
    ConfigKey{"student.path", "", "initial student model file; empty starts uniform"},
    ConfigKey{"prompts.train", "64", "number of generated training prompts"},
    ConfigKey{"prompts.eval", "50", "number of generated held-out prompts"},
    ConfigKey{"prompts.min_len", "1", "shortest generated prompt"},
    ConfigKey{"prompts.max_len", "3", "longest generated prompt"},
    ConfigKey{"prompts.train_file", "", "training prompts file; empty generates them"},
    ConfigKey{"prompts.eval_file", "", "held-out prompts file; empty generates them"},
    ConfigKey{"sampling.n", "4", "responses per prompt per step (k * m)"},
    ConfigKey{"sampling.temperature", "0.8", "student sampling temperature"},
    ConfigKey{"sampling.max_len", "8", "maximum response length including eos"},
    ConfigKey{"plan.k", "1", "number of sub-preferences"},
    ConfigKey{"plan.m", "4", "responses per sub-preference"},
    ConfigKey{"plan.mode", "fresh", "fresh | partition"},
    ConfigKey{"calibration.alpha", "0.8", "reward calibration ratio in [0, 1]"},
    ConfigKey{"calibration.method", "mcq", "mcq | p_true | p_true_with_ref"},
    ConfigKey{"calibration.quality", "teacher", "teacher | table: source of synthetic quality scores"},
    ConfigKey{"calibration.quality_scale", "1", "multiplier on teacher-likelihood quality"},
    ConfigKey{"calibration.quality_file", "", "quality table for calibration.quality = table"},
    ConfigKey{"calibration.reference_weight", "1", "P(True)-with-reference: weight of the set mean"},
    ConfigKey{"loss.objective", "ppd", "ppd | vpd"},
    ConfigKey{"loss.beta", "10", "reward scale inside the ranking model"},
    ConfigKey{"loss.enumeration_cap", "8", "largest n whose n! rankings may be enumerated"},
    ConfigKey{"train.learning_rate", "0.05", "gradient descent step size"},
    ConfigKey{"train.steps", "1000", "outer steps (each runs k rounds in fresh mode)"},
    ConfigKey{"train.batch", "8", "prompts per round"},
    ConfigKey{"train.eval_every", "100", "steps between metric records"},
    ConfigKey{"train.target_jsd", "0", "stop once eval JSD drops below this (0 = never)"},
    ConfigKey{"eval.n", "0", "responses per held-out prompt (0 = n, or m if n exceeds the cap)"},
    ConfigKey{"log.wall_time", "false", "include wall_time in metrics.jsonl"},
};

bool known_key(std::string_view key) {
  for (const auto& k : kSchema)
    if (k.name == key) return true;
  return false;
}

}  // namespace

std::span<const ConfigKey> config_schema() { return kSchema; }

ConfigMap::ConfigMap() {
  for (const auto& k : kSchema) values_.emplace(std::string(k.name), std::string(k.default_value));
}

void ConfigMap::set(std::string_view key, std::string_view value) {
  if (!known_key(key)) throw ConfigError("unknown config key '" + std::string(key) + "'", std::string(key));
  values_[std::string(key)] = std::string(value);
}

void ConfigMap::load(std::istream& in, std::string_view source) {
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto body = detail::trim(std::string_view(line).substr(0, line.find('#')));
    if (body.empty()) continue;
    const auto eq = body.find('=');
    if (eq == std::string_view::npos)
      throw ConfigError(std::string(source) + ":" + std::to_string(lineno) + ": expected key = value");
    const auto key = detail::trim(body.substr(0, eq));
    const auto value = detail::trim(body.substr(eq + 1));
    if (!known_key(key))
      throw ConfigError(std::string(source) + ":" + std::to_string(lineno) + ": unknown config key '" +
                            std::string(key) + "'",
                        std::string(key));
    values_[std::string(key)] = std::string(value);
  }
}

void ConfigMap::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  load(in, path.string());
}

void ConfigMap::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos)
    throw ConfigError("override '" + std::string(assignment) + "' is not KEY=VALUE");
  set(detail::trim(assignment.substr(0, eq)), detail::trim(assignment.substr(eq + 1)));
  overrides_.emplace_back(assignment);
}

const std::string& ConfigMap::get(std::string_view key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + std::string(key) + "'", std::string(key));
  return it->second;
}

double ConfigMap::get_double(std::string_view key) const {
  try {
    return detail::parse_double(get(key), key);
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + std::string(key) + "' must be a number, got '" + get(key) + "'",
                      std::string(key));
  }
}

std::uint64_t ConfigMap::get_uint(std::string_view key) const {
  try {
    return detail::parse_uint(get(key), key);
  } catch (const ConfigError&) {
    throw ConfigError("config key '" + std::string(key) + "' must be a non-negative integer, got '" +
                          get(key) + "'",
                      std::string(key));
  }
}

bool ConfigMap::get_bool(std::string_view key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + std::string(key) + "' must be true or false, got '" + v + "'",
                    std::string(key));
}

void ConfigMap::write(std::ostream& out) const {
  for (const auto& k : kSchema) out << k.name << " = " << get(k.name) << '\n';
}

}  // namespace pad
