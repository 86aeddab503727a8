#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace audit::util {

inline char ascii_lower(char c) {
  return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : c;
}

inline char ascii_upper(char c) {
  return (c >= 'a' && c <= 'z') ? static_cast<char>(c - 'a' + 'A') : c;
}

inline bool is_ascii_alnum(char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
}

std::string_view trim(std::string_view s);
std::string lowercase(std::string_view s);
bool starts_with_icase(std::string_view s, std::string_view prefix);

/// Trims and collapses each whitespace run to a single space.
std::string normalize_whitespace(std::string_view s);

/// Byte spans [begin, end) of whitespace-separated words, in order.
std::vector<std::pair<std::size_t, std::size_t>> word_spans(std::string_view text);

/// Number of whitespace-separated words.
int word_count(std::string_view text);

// Deterministic hashing, fixed across platforms and processes.
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t splitmix64(std::uint64_t x);

/// Uniform double in [0, 1) from the top 53 bits of x.
double unit_double(std::uint64_t x);

std::int64_t now_unix_seconds();
std::string format_iso8601(std::int64_t unix_seconds);

}  // namespace audit::util
