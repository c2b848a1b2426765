#include "opcal/keyvalue.hpp"

#include "opcal/errors.hpp"
#include "opcal/text_io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <sstream>

namespace opcal {

KeyValueFile KeyValueFile::parse(std::istream& in, const std::string& source) {
  KeyValueFile kv;
  std::string raw;
  std::size_t line = 0;
  while (std::getline(in, raw)) {
    ++line;
    std::string_view view = raw;
    if (auto hash = view.find('#'); hash != std::string_view::npos) view = view.substr(0, hash);
    view = text::trim(view);
    if (view.empty()) continue;
    auto eq = view.find('=');
    if (eq == std::string_view::npos) throw ParseError(source, line, "expected 'key = value'");
    auto key = text::trim(view.substr(0, eq));
    auto value = text::trim(view.substr(eq + 1));
    if (key.empty()) throw ParseError(source, line, "empty key");
    kv.entries_[std::string(key)] = Entry{std::string(value), source + ":" + std::to_string(line)};
  }
  return kv;
}

KeyValueFile KeyValueFile::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path.string() + "'");
  return parse(in, path.string());
}

std::optional<std::string> KeyValueFile::get(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return std::nullopt;
  return it->second.value;
}

void KeyValueFile::set(const std::string& key, std::string value, std::string origin) {
  entries_[key] = Entry{std::move(value), std::move(origin)};
}

std::vector<std::string> KeyValueFile::keys() const {
  std::vector<std::string> out;
  for (const auto& [k, v] : entries_) out.push_back(k);
  return out;
}

void KeyValueFile::bad_value(const std::string& key, const std::string& expected) const {
  const auto& e = entries_.at(key);
  throw ConfigError(e.origin + ": key '" + key + "' expects " + expected + ", got '" + e.value + "'");
}

double KeyValueFile::get_double(const std::string& key, double fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string_view s = text::trim(*v);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) bad_value(key, "a number");
  return out;
}

long long KeyValueFile::get_int(const std::string& key, long long fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::string_view s = text::trim(*v);
  long long out = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
  if (ec != std::errc{} || ptr != s.data() + s.size()) bad_value(key, "an integer");
  return out;
}

bool KeyValueFile::get_bool(const std::string& key, bool fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  if (*v == "1" || *v == "true" || *v == "yes" || *v == "on") return true;
  if (*v == "0" || *v == "false" || *v == "no" || *v == "off") return false;
  bad_value(key, "a boolean (0/1, true/false)");
}

std::string KeyValueFile::get_string(const std::string& key, const std::string& fallback) const {
  auto v = get(key);
  return v ? *v : fallback;
}

std::vector<double> KeyValueFile::get_doubles(const std::string& key,
                                              const std::vector<double>& fallback) const {
  auto v = get(key);
  if (!v) return fallback;
  std::vector<double> out;
  for (auto tok : text::split(*v, ',')) {
    if (!tok.empty() && tok.front() == '+') tok.remove_prefix(1);
    double d = 0.0;
    auto [ptr, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), d);
    if (tok.empty() || ec != std::errc{} || ptr != tok.data() + tok.size()) {
      bad_value(key, "a comma-separated list of numbers");
    }
    out.push_back(d);
  }
  return out;
}

}  // namespace opcal
