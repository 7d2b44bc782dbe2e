#include "focusrl/similarity.hpp"

#include <algorithm>
#include <cstdint>
#include <span>
#include <tuple>
#include <utility>

#include "focusrl/kernels.hpp"

namespace focusrl {

std::u32string decode_utf8(std::string_view text) {
  std::u32string out;
  out.reserve(text.size());
  const auto* p = reinterpret_cast<const unsigned char*>(text.data());
  const std::size_t n = text.size();
  std::size_t i = 0;
  while (i < n) {
    const unsigned char c = p[i];
    std::size_t len = 0;
    char32_t cp = 0;
    if (c < 0x80) {
      len = 1;
      cp = c;
    } else if ((c & 0xE0) == 0xC0) {
      len = 2;
      cp = c & 0x1F;
    } else if ((c & 0xF0) == 0xE0) {
      len = 3;
      cp = c & 0x0F;
    } else if ((c & 0xF8) == 0xF0) {
      len = 4;
      cp = c & 0x07;
    }
    bool ok = len != 0 && i + len <= n;
    for (std::size_t k = 1; ok && k < len; ++k) {
      if ((p[i + k] & 0xC0) != 0x80) ok = false;
      cp = (cp << 6) | (p[i + k] & 0x3F);
    }
    // Reject overlong forms, surrogates and out-of-range values.
    if (ok) {
      static constexpr char32_t kMin[] = {0, 0, 0x80, 0x800, 0x10000};
      ok = cp >= kMin[len] && cp <= 0x10FFFF && !(cp >= 0xD800 && cp <= 0xDFFF);
    }
    if (ok) {
      out.push_back(cp);
      i += len;
    } else {
      out.push_back(U'\uFFFD');
      i += 1;
    }
  }
  return out;
}

MatchingBlock find_longest_match(std::u32string_view a, std::u32string_view b,
                                 std::size_t alo, std::size_t ahi,
                                 std::size_t blo, std::size_t bhi) {
  MatchingBlock best{alo, blo, 0};
  if (alo >= ahi || blo >= bhi) return best;
  const std::size_t m = bhi - blo;
  thread_local std::vector<std::int32_t> prev_buf, cur_buf;
  prev_buf.assign(m, 0);
  cur_buf.resize(m);
  std::span<std::int32_t> prev(prev_buf);
  std::span<std::int32_t> cur(cur_buf);
  const std::span<const char32_t> bs(b.data() + blo, m);

  for (std::size_t i = alo; i < ahi; ++i) {
    const auto row = kernels::match_row(a[i], bs, prev, cur);
    if (static_cast<std::size_t>(row.length) > best.size) {
      best.size = static_cast<std::size_t>(row.length);
      best.a = i + 1 - best.size;
      best.b = blo + row.index + 1 - best.size;
    }
    std::swap(prev, cur);
  }
  return best;
}

std::vector<MatchingBlock> matching_blocks(std::u32string_view a,
                                           std::u32string_view b) {
  std::vector<MatchingBlock> blocks;
  std::vector<std::tuple<std::size_t, std::size_t, std::size_t, std::size_t>>
      pending{{0, a.size(), 0, b.size()}};
  while (!pending.empty()) {
    const auto [alo, ahi, blo, bhi] = pending.back();
    pending.pop_back();
    const auto m = find_longest_match(a, b, alo, ahi, blo, bhi);
    if (m.size == 0) continue;
    blocks.push_back(m);
    if (alo < m.a && blo < m.b) pending.emplace_back(alo, m.a, blo, m.b);
    if (m.a + m.size < ahi && m.b + m.size < bhi) {
      pending.emplace_back(m.a + m.size, ahi, m.b + m.size, bhi);
    }
  }
  std::sort(blocks.begin(), blocks.end(), [](const auto& x, const auto& y) {
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
  });
  std::vector<MatchingBlock> merged;
  for (const auto& m : blocks) {
    if (!merged.empty() && merged.back().a + merged.back().size == m.a &&
        merged.back().b + merged.back().size == m.b) {
      merged.back().size += m.size;
    } else {
      merged.push_back(m);
    }
  }
  return merged;
}

double gestalt_ratio(std::u32string_view a, std::u32string_view b) {
  const std::size_t total = a.size() + b.size();
  if (total == 0) return 1.0;
  std::size_t matched = 0;
  for (const auto& blk : matching_blocks(a, b)) matched += blk.size;
  return 2.0 * static_cast<double>(matched) / static_cast<double>(total);
}

double gestalt_ratio(std::string_view a, std::string_view b) {
  return gestalt_ratio(std::u32string_view(decode_utf8(a)),
                       std::u32string_view(decode_utf8(b)));
}

double iou(const Box& a, const Box& b) {
  return kernels::scalar::iou(a.x1, a.y1, a.x2, a.y2, b.x1, b.y1, b.x2, b.y2);
}

}  // namespace focusrl
