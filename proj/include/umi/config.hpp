#pragma once

// Flat key-value config with one level of [section] grouping. Keys are
// addressed as "section.key". Repeated keys accumulate (used for
// scatterer / speckle-box lists).

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "umi/common.hpp"

namespace umi {

class Config {
 public:
  static Config parse_string(const std::string& text);
  static Config parse_file(const std::string& path);

  bool has(const std::string& key) const;

  std::string get_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  /// All values recorded for a repeated key, in file order.
  std::vector<std::string> get_all(const std::string& key) const;

  /// Keys (full "section.key" form) that start with the given prefix.
  std::vector<std::string> keys_with_prefix(const std::string& prefix) const;

  void set(const std::string& key, const std::string& value);
  std::string to_string() const;

  /// Splits "a, b, c" into trimmed tokens; sep is ',' by default.
  static std::vector<std::string> split_list(const std::string& value, char sep = ',');

 private:
  // Insertion-ordered storage; map from key to indices into entries_.
  std::vector<std::pair<std::string, std::string>> entries_;
  std::map<std::string, std::vector<std::size_t>> index_;
};

}  // namespace umi
