#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>

namespace pgflow {

/// Flat `key = value` document. '#' starts a comment; blank lines are
/// ignored; keys are unique. Throws ConfigError with the line number on
/// malformed input.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(std::istream& is, const std::string& source = "<config>");
  static KeyValueConfig load(const std::string& path);

  bool has(const std::string& key) const { return entries_.count(key) != 0; }
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  /// Each getter marks the key as consumed. Missing required keys and
  /// unparseable values raise ConfigError naming the key.
  std::string require_string(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  int get_int(const std::string& key, int fallback) const;
  std::uint64_t get_u64(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::optional<double> find_double(const std::string& key) const;

  /// Keys never read by a getter; callers reject them as unknown.
  std::set<std::string> unused_keys() const;

  /// FNV-1a 64 of the sorted, trimmed `key=value` lines, as 16 hex digits.
  /// Keys in `exclude` do not contribute.
  std::string digest(const std::set<std::string>& exclude = {}) const;

  const std::map<std::string, std::string>& entries() const { return entries_; }

 private:
  const std::string* lookup(const std::string& key) const;

  std::map<std::string, std::string> entries_;
  mutable std::set<std::string> consumed_;
};

}  // namespace pgflow
