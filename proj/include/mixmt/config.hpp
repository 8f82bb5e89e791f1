// Copyright 2026 The mixmt Authors.
// SPDX-License-Identifier: Apache-2.0

// Flat key=value configuration. Lines are `key = value`; '#' starts a
// comment; blank lines are ignored. Later assignments override earlier ones.

#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace mixmt {

class KeyValues {
 public:
  static KeyValues parse(std::string_view text, std::string_view origin = "<string>");
  static KeyValues load(const std::filesystem::path& path);

  // Apply a single "key=value" override (as given on the command line).
  void apply_override(std::string_view assignment);

  bool has(std::string_view key) const { return values_.count(std::string(key)) > 0; }
  void set(std::string key, std::string value) { values_[std::move(key)] = std::move(value); }
  void set_default(const std::string& key, const std::string& value);

  std::string get(std::string_view key, std::string_view fallback) const;
  std::string require(std::string_view key) const;
  std::int64_t get_int(std::string_view key, std::int64_t fallback) const;
  std::uint64_t get_uint(std::string_view key, std::uint64_t fallback) const;
  double get_double(std::string_view key, double fallback) const;
  bool get_bool(std::string_view key, bool fallback) const;
  // Comma-separated list; empty when absent.
  std::vector<std::string> get_list(std::string_view key) const;

  // ConfigError naming the first key not in `known` (prefix entries ending
  // in '.' match any key with that prefix).
  void reject_unknown(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const { return values_; }
  std::string to_text() const;
  void save(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

// Shortest text that parses back to exactly v.
std::string format_double(double v);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

}  // namespace mixmt
