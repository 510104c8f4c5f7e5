#pragma once

#include <cstdint>
#include <stdexcept>
#include <map>
#include <string>
#include <vector>

namespace gg {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Flat key/value experiment config with [section] grouping. Keys are
/// addressed as "section.key". Fully serializable; the canonical form
/// (sorted keys) feeds the config hash embedded in outputs.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  /// "section.key=value" as given by --override.
  void apply_override(const std::string& assignment);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::string get(const std::string& key) const;
  std::string get(const std::string& key, const std::string& fallback) const;
  double get_num(const std::string& key, double fallback) const;
  long get_int(const std::string& key, long fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_flag(const std::string& key, bool fallback) const;
  /// Comma-separated list value.
  std::vector<std::string> get_list(const std::string& key) const;
  std::vector<double> get_num_list(const std::string& key) const;

  std::string canonical() const;
  std::uint64_t hash() const;

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace gg
