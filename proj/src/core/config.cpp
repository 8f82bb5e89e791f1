// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

#include "mixmt/config.hpp"

#include <cctype>
#include <charconv>
#include <fstream>
#include <sstream>

#include "mixmt/error.hpp"

namespace mixmt {

std::string format_double(double v) {
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

std::vector<std::string> split(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos == std::string_view::npos ? s.npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

KeyValues KeyValues::parse(std::string_view text, std::string_view origin) {
  KeyValues kv;
  std::istringstream in{std::string(text)};
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    const std::string t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) +
                        ": expected key = value, got '" + t + "'");
    }
    std::string key = trim(std::string_view(t).substr(0, eq));
    if (key.empty()) {
      throw ConfigError(std::string(origin) + ":" + std::to_string(lineno) + ": empty key");
    }
    kv.values_[key] = trim(std::string_view(t).substr(eq + 1));
  }
  return kv;
}

KeyValues KeyValues::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open config file " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse(buf.str(), path.string());
}

void KeyValues::apply_override(std::string_view assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string_view::npos) {
    throw ConfigError("override must look like key=value, got '" + std::string(assignment) + "'");
  }
  std::string key = trim(assignment.substr(0, eq));
  if (key.empty()) throw ConfigError("override with empty key");
  values_[key] = trim(assignment.substr(eq + 1));
}

void KeyValues::set_default(const std::string& key, const std::string& value) {
  values_.try_emplace(key, value);
}

std::string KeyValues::get(std::string_view key, std::string_view fallback) const {
  auto it = values_.find(std::string(key));
  return it == values_.end() ? std::string(fallback) : it->second;
}

std::string KeyValues::require(std::string_view key) const {
  auto it = values_.find(std::string(key));
  if (it == values_.end()) throw ConfigError("missing required key '" + std::string(key) + "'");
  return it->second;
}

namespace {

template <typename T>
T parse_number(std::string_view key, const std::string& text) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw ConfigError("key '" + std::string(key) + "': cannot parse '" + text + "' as a number");
  }
  return value;
}

}  // namespace

std::int64_t KeyValues::get_int(std::string_view key, std::int64_t fallback) const {
  return has(key) ? parse_number<std::int64_t>(key, require(key)) : fallback;
}

std::uint64_t KeyValues::get_uint(std::string_view key, std::uint64_t fallback) const {
  if (!has(key)) return fallback;
  const std::string v = require(key);
  if (!v.empty() && v[0] == '-') {
    throw ConfigError("key '" + std::string(key) + "' must be non-negative, got " + v);
  }
  return parse_number<std::uint64_t>(key, v);
}

double KeyValues::get_double(std::string_view key, double fallback) const {
  return has(key) ? parse_number<double>(key, require(key)) : fallback;
}

bool KeyValues::get_bool(std::string_view key, bool fallback) const {
  if (!has(key)) return fallback;
  const std::string v = require(key);
  if (v == "1" || v == "true" || v == "on" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "off" || v == "no") return false;
  throw ConfigError("key '" + std::string(key) + "': expected a boolean, got '" + v + "'");
}

std::vector<std::string> KeyValues::get_list(std::string_view key) const {
  if (!has(key)) return {};
  const std::string v = require(key);
  if (v.empty()) return {};
  return split(v, ',');
}

void KeyValues::reject_unknown(const std::set<std::string>& known) const {
  for (const auto& [key, value] : values_) {
    if (known.count(key)) continue;
    bool matched = false;
    for (const auto& k : known) {
      if (!k.empty() && k.back() == '.' && key.rfind(k, 0) == 0) {
        matched = true;
        break;
      }
    }
    if (!matched) throw ConfigError("unknown configuration key '" + key + "'");
  }
}

std::string KeyValues::to_text() const {
  std::string out;
  for (const auto& [key, value] : values_) out += key + " = " + value + "\n";
  return out;
}

void KeyValues::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << to_text();
}

}  // namespace mixmt
