#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace focusrl::text {

inline bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' ||
         c == '\v';
}

inline std::string_view ltrim(std::string_view s) {
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  return s;
}

inline std::string_view rtrim(std::string_view s) {
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string_view trim(std::string_view s) { return rtrim(ltrim(s)); }

/// Trim, ASCII case-fold and collapse internal whitespace runs to one space.
std::string normalize_exact(std::string_view s);

}  // namespace focusrl::text
