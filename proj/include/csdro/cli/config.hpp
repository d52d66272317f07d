#pragma once

#include "csdro/common.hpp"

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace csdro::cli {

// INI-style key-value file: [section] headers, `key = value` lines, `;` comments.
// Only keys from the built-in schema are accepted.
class Config {
 public:
  static Config from_file(const std::string& path);
  static Config from_string(const std::string& text);

  bool has(const std::string& section, const std::string& key) const;
  std::string get_string(const std::string& section, const std::string& key, const std::string& def) const;
  double get_double(const std::string& section, const std::string& key, double def) const;
  long get_long(const std::string& section, const std::string& key, long def) const;
  bool get_bool(const std::string& section, const std::string& key, bool def) const;
  std::vector<double> get_doubles(const std::string& section, const std::string& key, const std::vector<double>& def) const;
  std::vector<long> get_longs(const std::string& section, const std::string& key, const std::vector<long>& def) const;
  std::vector<std::string> get_strings(const std::string& section, const std::string& key,
                                       const std::vector<std::string>& def) const;

  void set(const std::string& section, const std::string& key, const std::string& value);

  // Sorted `section.key=value` lines; stable across key order and whitespace.
  std::string canonical() const;
  std::uint64_t hash() const;
  std::string hash_hex() const;

 private:
  std::map<std::string, std::map<std::string, std::string>> values_;
};

// Allowed sections and keys.
const std::map<std::string, std::vector<std::string>>& config_schema();

}  // namespace csdro::cli
