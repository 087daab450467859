#include "pgflow/config.hpp"

#include <cerrno>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <istream>

#include "pgflow/errors.hpp"

namespace pgflow {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

ConfigError bad_value(const std::string& key, const std::string& value, const char* expected) {
  return ConfigError("key '" + key + "': expected " + expected + ", got '" + value + "'");
}

}  // namespace

KeyValueConfig KeyValueConfig::parse(std::istream& is, const std::string& source) {
  KeyValueConfig cfg;
  std::string line;
  int number = 0;
  while (std::getline(is, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(number);
    if (eq == std::string::npos) throw ConfigError(where + ": expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError(where + ": empty key");
    if (cfg.entries_.count(key) != 0) throw ConfigError(where + ": duplicate key '" + key + "'");
    cfg.entries_[key] = value;
  }
  return cfg;
}

KeyValueConfig KeyValueConfig::load(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot read config file '" + path + "'");
  return parse(is, path);
}

const std::string* KeyValueConfig::lookup(const std::string& key) const {
  consumed_.insert(key);
  const auto it = entries_.find(key);
  return it == entries_.end() ? nullptr : &it->second;
}

std::string KeyValueConfig::require_string(const std::string& key) const {
  const std::string* v = lookup(key);
  if (v == nullptr || v->empty()) throw ConfigError("missing required key '" + key + "'");
  return *v;
}

std::string KeyValueConfig::get_string(const std::string& key, const std::string& fallback) const {
  const std::string* v = lookup(key);
  return v == nullptr ? fallback : *v;
}

std::optional<double> KeyValueConfig::find_double(const std::string& key) const {
  const std::string* v = lookup(key);
  if (v == nullptr) return std::nullopt;
  errno = 0;
  char* end = nullptr;
  const double d = std::strtod(v->c_str(), &end);
  if (v->empty() || end != v->c_str() + v->size() || errno == ERANGE) throw bad_value(key, *v, "a number");
  return d;
}

double KeyValueConfig::get_double(const std::string& key, double fallback) const {
  return find_double(key).value_or(fallback);
}

int KeyValueConfig::get_int(const std::string& key, int fallback) const {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  int out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) throw bad_value(key, *v, "an integer");
  return out;
}

std::uint64_t KeyValueConfig::get_u64(const std::string& key, std::uint64_t fallback) const {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  std::uint64_t out = 0;
  const auto [ptr, ec] = std::from_chars(v->data(), v->data() + v->size(), out);
  if (ec != std::errc() || ptr != v->data() + v->size()) throw bad_value(key, *v, "an unsigned integer");
  return out;
}

bool KeyValueConfig::get_bool(const std::string& key, bool fallback) const {
  const std::string* v = lookup(key);
  if (v == nullptr) return fallback;
  if (*v == "true" || *v == "1" || *v == "yes") return true;
  if (*v == "false" || *v == "0" || *v == "no") return false;
  throw bad_value(key, *v, "true or false");
}

std::set<std::string> KeyValueConfig::unused_keys() const {
  std::set<std::string> out;
  for (const auto& [key, value] : entries_) {
    if (consumed_.count(key) == 0) out.insert(key);
  }
  return out;
}

std::string KeyValueConfig::digest(const std::set<std::string>& exclude) const {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (const auto& [key, value] : entries_) {
    if (exclude.count(key) != 0) continue;
    const std::string line = key + "=" + value + "\n";
    for (unsigned char c : line) {
      h ^= c;
      h *= 0x100000001b3ull;
    }
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace pgflow
