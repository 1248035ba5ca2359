#pragma once

// Flat `dotted.key = value` configuration with a fixed key schema.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pad {

struct ConfigKey {
  std::string_view name;
  std::string_view default_value;
  std::string_view help;
};

// Every accepted key, in manifest order.
std::span<const ConfigKey> config_schema();

class ConfigMap {
 public:
  // Schema defaults.
  ConfigMap();

  // Merges `key = value` lines; '#' starts a comment. Unknown keys throw
  // ConfigError naming the key.
  void load(std::istream& in, std::string_view source = "config");
  void load_file(const std::filesystem::path& path);

  // Applies a `key=value` override and records it.
  void apply_override(std::string_view assignment);
  void set(std::string_view key, std::string_view value);

  const std::string& get(std::string_view key) const;
  double get_double(std::string_view key) const;
  std::uint64_t get_uint(std::string_view key) const;
  bool get_bool(std::string_view key) const;

  const std::vector<std::string>& overrides() const noexcept { return overrides_; }

  // All keys in schema order; loading the output reproduces this map.
  void write(std::ostream& out) const;

 private:
  std::map<std::string, std::string, std::less<>> values_;
  std::vector<std::string> overrides_;
};

}  // namespace pad
