#include "sqr_app/config.hpp"

#include <algorithm>
#include <cerrno>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "sqr/error.hpp"

namespace sqr::app {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

bool parse_number(const std::string& text, double& out) {
  const char* b = text.data();
  const char* e = b + text.size();
  const auto [ptr, ec] = std::from_chars(b, e, out);
  return ec == std::errc{} && ptr == e && std::isfinite(out);
}

}  // namespace

Config Config::parse(const std::string& text, const std::string& origin) {
  Config c;
  c.origin_ = origin;
  std::istringstream in(text);
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ConfigError(origin + ":" + std::to_string(number) + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    if (key.empty()) throw ConfigError(origin + ":" + std::to_string(number) + ": empty key");
    if (c.values_.count(key))
      throw ConfigError(origin + ":" + std::to_string(number) + ": duplicate key '" + key + "'");
    c.values_[key] = value;
    c.lines_[key] = number;
  }
  return c;
}

Config Config::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

std::string Config::where(const std::string& key) const {
  const auto it = lines_.find(key);
  if (it == lines_.end()) return "'" + key + "'";
  return origin_ + ":" + std::to_string(it->second) + ": '" + key + "'";
}

void Config::require_known(const std::set<std::string>& allowed, const std::string& command) const {
  for (const auto& [key, value] : values_)
    if (!allowed.count(key)) throw ConfigError(where(key) + " is not a recognized key for '" + command + "'");
}

std::string Config::get_string(const std::string& key, const std::string& fallback) const {
  const auto it = values_.find(key);
  return it == values_.end() ? fallback : it->second;
}

std::string Config::require_string(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end() || it->second.empty()) throw ConfigError("missing required key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key, double fallback) const {
  return get_optional_double(key).value_or(fallback);
}

std::optional<double> Config::get_optional_double(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return std::nullopt;
  double v;
  if (!parse_number(it->second, v)) throw ConfigError(where(key) + " expects a number, got '" + it->second + "'");
  return v;
}

long long Config::get_int(const std::string& key, long long fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  long long v;
  const char* b = it->second.data();
  const char* e = b + it->second.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e) throw ConfigError(where(key) + " expects an integer, got '" + it->second + "'");
  return v;
}

std::uint64_t Config::get_uint64(const std::string& key, std::uint64_t fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::uint64_t v;
  const char* b = it->second.data();
  const char* e = b + it->second.size();
  const auto [ptr, ec] = std::from_chars(b, e, v);
  if (ec != std::errc{} || ptr != e)
    throw ConfigError(where(key) + " expects a non-negative integer, got '" + it->second + "'");
  return v;
}

bool Config::get_bool(const std::string& key, bool fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError(where(key) + " expects true or false, got '" + v + "'");
}

std::vector<double> Config::get_doubles(const std::string& key, const std::vector<double>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  const std::string& v = it->second;
  std::vector<double> out;
  if (v.find(':') != std::string::npos) {
    const auto parts = split(v, ':');
    double a, b, step;
    if (parts.size() != 3 || !parse_number(parts[0], a) || !parse_number(parts[1], b) ||
        !parse_number(parts[2], step) || !(step > 0.0) || b < a)
      throw ConfigError(where(key) + " expects 'start:stop:step' with step > 0, got '" + v + "'");
    const auto n = static_cast<long long>(std::floor((b - a) / step + 1e-9));
    for (long long i = 0; i <= n; ++i) out.push_back(a + static_cast<double>(i) * step);
    return out;
  }
  for (const auto& part : split(v, ',')) {
    double x;
    if (!parse_number(part, x)) throw ConfigError(where(key) + " expects numbers, got '" + part + "'");
    out.push_back(x);
  }
  if (out.empty()) throw ConfigError(where(key) + " is empty");
  return out;
}

std::vector<std::string> Config::get_strings(const std::string& key, const std::vector<std::string>& fallback) const {
  const auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  std::vector<std::string> out;
  for (auto& s : split(it->second, ','))
    if (!s.empty()) out.push_back(s);
  return out;
}

std::string Config::get_choice(const std::string& key, const std::string& fallback,
                               const std::vector<std::string>& choices) const {
  const std::string v = get_string(key, fallback);
  if (std::find(choices.begin(), choices.end(), v) == choices.end()) {
    std::string list;
    for (const auto& c : choices) list += (list.empty() ? "" : ", ") + c;
    throw ConfigError(where(key) + " must be one of {" + list + "}, got '" + v + "'");
  }
  return v;
}

std::string Config::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
  return out;
}

}  // namespace sqr::app
