#pragma once

#include <stdexcept>
#include <string>

namespace pad {

// Bad argument to a library operation (out-of-range token, size mismatch, ...).
class InvalidInput : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Ranking enumeration requested beyond the configured cap.
class CapacityError : public std::length_error {
 public:
  using std::length_error::length_error;
};

// Selection-score provider produced scores that cannot form a categorical.
class DegenerateScores : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// Malformed configuration or file content. `key()` names the offending entry when known.
class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what, std::string key = {})
      : std::runtime_error(what), key_(std::move(key)) {}
  const std::string& key() const noexcept { return key_; }

 private:
  std::string key_;
};

}  // namespace pad
