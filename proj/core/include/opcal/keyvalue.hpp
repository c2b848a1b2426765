#pragma once

#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace opcal {

/// Flat `key = value` configuration text. '#' starts a comment (full-line or
/// trailing). Later assignments of the same key override earlier ones.
class KeyValueFile {
 public:
  static KeyValueFile parse(std::istream& in, const std::string& source);
  static KeyValueFile load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return entries_.contains(key); }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, std::string value, std::string origin = "override");
  std::vector<std::string> keys() const;

  // Typed accessors raise ConfigError naming the key (and line, if the value
  // came from a file) when the value does not parse.
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;
  std::string get_string(const std::string& key, const std::string& fallback) const;
  std::vector<double> get_doubles(const std::string& key, const std::vector<double>& fallback) const;

 private:
  struct Entry {
    std::string value;
    std::string origin;
  };
  [[noreturn]] void bad_value(const std::string& key, const std::string& expected) const;

  std::map<std::string, Entry> entries_;
};

}  // namespace opcal
