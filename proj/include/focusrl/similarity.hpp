#pragma once

// String and box similarity primitives behind the redundancy penalties.
// All results lie in [0, 1].

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "focusrl/focus_trace.hpp"

namespace focusrl {

/// Decodes UTF-8 into Unicode scalar values; each invalid byte becomes U+FFFD.
std::u32string decode_utf8(std::string_view text);

struct MatchingBlock {
  std::size_t a = 0;
  std::size_t b = 0;
  std::size_t size = 0;
  friend bool operator==(const MatchingBlock&, const MatchingBlock&) = default;
};

/// Longest common block of a[alo,ahi) and b[blo,bhi). Ties go to the earliest
/// start in `a`, then the earliest start in `b`. size == 0 when none exists.
MatchingBlock find_longest_match(std::u32string_view a, std::u32string_view b,
                                 std::size_t alo, std::size_t ahi,
                                 std::size_t blo, std::size_t bhi);

/// Ratcliff-Obershelp matching blocks (no junk heuristics), sorted by position,
/// with adjacent blocks merged.
std::vector<MatchingBlock> matching_blocks(std::u32string_view a,
                                           std::u32string_view b);

/// 2*M / (|a| + |b|) over matched characters M; 1 for two empty strings.
double gestalt_ratio(std::u32string_view a, std::u32string_view b);
double gestalt_ratio(std::string_view a, std::string_view b);

/// Intersection over union of two normalized boxes; 0 when the union is empty.
double iou(const Box& a, const Box& b);

}  // namespace focusrl
