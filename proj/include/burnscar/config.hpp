#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace burnscar {

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Parses `key = value` lines. '#' starts a comment, blank lines are skipped, keys are
/// lower-cased. Throws ConfigError on a line without '=', an empty key or a repeated key.
std::vector<KeyValue> parse_key_values(std::string_view text);

std::string_view trim(std::string_view s) noexcept;
/// Comma-separated items, trimmed; empty items are dropped.
std::vector<std::string> split_list(std::string_view s);

// Value parsers; all throw ConfigError naming `key` on malformed input.
std::uint64_t parse_u64(std::string_view key, std::string_view value);
std::int64_t parse_i64(std::string_view key, std::string_view value);
double parse_f64(std::string_view key, std::string_view value);
/// true/false, yes/no, on/off, 1/0.
bool parse_bool(std::string_view key, std::string_view value);
std::vector<std::size_t> parse_size_list(std::string_view key, std::string_view value);

}  // namespace burnscar
