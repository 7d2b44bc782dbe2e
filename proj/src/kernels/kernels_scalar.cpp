#include "focusrl/kernels.hpp"

#include <cassert>

namespace focusrl::kernels::scalar {

RowBest match_row(char32_t ch, std::span<const char32_t> b,
                  std::span<const std::int32_t> prev,
                  std::span<std::int32_t> cur) {
  assert(prev.size() == b.size() && cur.size() == b.size());
  RowBest best;
  const std::size_t n = b.size();
  for (std::size_t j = 0; j < n; ++j) {
    const std::int32_t diag = j == 0 ? 0 : prev[j - 1];
    const std::int32_t v = b[j] == ch ? diag + 1 : 0;
    cur[j] = v;
    if (v > best.length) {
      best.length = v;
      best.index = j;
    }
  }
  return best;
}

// Operand order of min/max mirrors the AVX2 variant so signed zeros agree.
double iou(double ax1, double ay1, double ax2, double ay2, double bx1,
           double by1, double bx2, double by2) {
  const double ix1 = ax1 > bx1 ? ax1 : bx1;
  const double iy1 = ay1 > by1 ? ay1 : by1;
  const double ix2 = ax2 < bx2 ? ax2 : bx2;
  const double iy2 = ay2 < by2 ? ay2 : by2;
  double iw = ix2 - ix1;
  double ih = iy2 - iy1;
  iw = iw > 0.0 ? iw : 0.0;
  ih = ih > 0.0 ? ih : 0.0;
  const double inter = iw * ih;
  const double area_a = (ax2 - ax1) * (ay2 - ay1);
  const double area_b = (bx2 - bx1) * (by2 - by1);
  const double uni = (area_a + area_b) - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

void iou_many(double bx1, double by1, double bx2, double by2,
              const BoxesSoA& others, std::span<double> out) {
  assert(out.size() == others.size());
  for (std::size_t k = 0; k < others.size(); ++k) {
    out[k] = iou(bx1, by1, bx2, by2, others.x1[k], others.y1[k], others.x2[k],
                 others.y2[k]);
  }
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  assert(x.size() == y.size());
  for (std::size_t k = 0; k < x.size(); ++k) {
    const double t = alpha * x[k];
    y[k] = y[k] + t;
  }
}

}  // namespace focusrl::kernels::scalar
