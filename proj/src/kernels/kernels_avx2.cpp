// Compiled with -mavx2 -ffp-contract=off; only reached after a CPU check.
#include "focusrl/kernels.hpp"

#include <immintrin.h>

#include <cassert>

namespace focusrl::kernels::avx2 {

RowBest match_row(char32_t ch, std::span<const char32_t> b,
                  std::span<const std::int32_t> prev,
                  std::span<std::int32_t> cur) {
  assert(prev.size() == b.size() && cur.size() == b.size());
  const std::size_t n = b.size();
  if (n == 0) return {};

  cur[0] = b[0] == ch ? 1 : 0;
  const __m256i needle = _mm256_set1_epi32(static_cast<int>(ch));
  const __m256i one = _mm256_set1_epi32(1);
  __m256i vmax = _mm256_setzero_si256();

  std::size_t j = 1;
  for (; j + 8 <= n; j += 8) {
    const __m256i chars =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(b.data() + j));
    const __m256i diag =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(prev.data() + j - 1));
    const __m256i eq = _mm256_cmpeq_epi32(chars, needle);
    const __m256i v = _mm256_and_si256(eq, _mm256_add_epi32(diag, one));
    _mm256_storeu_si256(reinterpret_cast<__m256i*>(cur.data() + j), v);
    vmax = _mm256_max_epi32(vmax, v);
  }
  alignas(32) std::int32_t lanes[8];
  _mm256_store_si256(reinterpret_cast<__m256i*>(lanes), vmax);
  std::int32_t best = cur[0];
  for (int k = 0; k < 8; ++k) best = lanes[k] > best ? lanes[k] : best;
  for (; j < n; ++j) {
    const std::int32_t v = b[j] == ch ? prev[j - 1] + 1 : 0;
    cur[j] = v;
    best = v > best ? v : best;
  }
  if (best == 0) return {};

  // Earliest column holding the maximum.
  const __m256i target = _mm256_set1_epi32(best);
  std::size_t k = 0;
  for (; k + 8 <= n; k += 8) {
    const __m256i v =
        _mm256_loadu_si256(reinterpret_cast<const __m256i*>(cur.data() + k));
    const int mask =
        _mm256_movemask_ps(_mm256_castsi256_ps(_mm256_cmpeq_epi32(v, target)));
    if (mask != 0) {
      return {best, k + static_cast<std::size_t>(__builtin_ctz(
                            static_cast<unsigned>(mask)))};
    }
  }
  for (; k < n; ++k) {
    if (cur[k] == best) return {best, k};
  }
  return {};  // unreachable
}

void iou_many(double bx1, double by1, double bx2, double by2,
              const BoxesSoA& others, std::span<double> out) {
  assert(out.size() == others.size());
  const std::size_t n = others.size();
  const __m256d ax1 = _mm256_set1_pd(bx1);
  const __m256d ay1 = _mm256_set1_pd(by1);
  const __m256d ax2 = _mm256_set1_pd(bx2);
  const __m256d ay2 = _mm256_set1_pd(by2);
  const __m256d zero = _mm256_setzero_pd();
  const __m256d area_a = _mm256_mul_pd(_mm256_sub_pd(ax2, ax1),
                                       _mm256_sub_pd(ay2, ay1));
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d qx1 = _mm256_loadu_pd(others.x1.data() + k);
    const __m256d qy1 = _mm256_loadu_pd(others.y1.data() + k);
    const __m256d qx2 = _mm256_loadu_pd(others.x2.data() + k);
    const __m256d qy2 = _mm256_loadu_pd(others.y2.data() + k);
    // _mm256_max_pd(x, y) == (x > y ? x : y); operand order matches scalar.
    const __m256d ix1 = _mm256_max_pd(ax1, qx1);
    const __m256d iy1 = _mm256_max_pd(ay1, qy1);
    const __m256d ix2 = _mm256_min_pd(ax2, qx2);
    const __m256d iy2 = _mm256_min_pd(ay2, qy2);
    const __m256d iw = _mm256_max_pd(_mm256_sub_pd(ix2, ix1), zero);
    const __m256d ih = _mm256_max_pd(_mm256_sub_pd(iy2, iy1), zero);
    const __m256d inter = _mm256_mul_pd(iw, ih);
    const __m256d area_b = _mm256_mul_pd(_mm256_sub_pd(qx2, qx1),
                                         _mm256_sub_pd(qy2, qy1));
    const __m256d uni = _mm256_sub_pd(_mm256_add_pd(area_a, area_b), inter);
    const __m256d pos = _mm256_cmp_pd(uni, zero, _CMP_GT_OQ);
    const __m256d ratio = _mm256_div_pd(inter, uni);
    _mm256_storeu_pd(out.data() + k, _mm256_and_pd(pos, ratio));
  }
  for (; k < n; ++k) {
    out[k] = scalar::iou(bx1, by1, bx2, by2, others.x1[k], others.y1[k],
                         others.x2[k], others.y2[k]);
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  const std::size_t n = x.size();
  const __m256d a = _mm256_set1_pd(alpha);
  std::size_t k = 0;
  for (; k + 4 <= n; k += 4) {
    const __m256d t = _mm256_mul_pd(a, _mm256_loadu_pd(x.data() + k));
    _mm256_storeu_pd(y.data() + k,
                     _mm256_add_pd(_mm256_loadu_pd(y.data() + k), t));
  }
  for (; k < n; ++k) {
    const double t = alpha * x[k];
    y[k] = y[k] + t;
  }
}

}  // namespace focusrl::kernels::avx2
