#pragma once

// Data-parallel inner loops shared by the similarity, rewards and toysim
// modules. Every kernel has a scalar reference implementation and, on x86-64,
// an AVX2 variant. The variant is chosen once at runtime; results are
// bit-identical between variants (the kernel TUs are built without FMA
// contraction), which the equivalence tests check directly.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace focusrl::kernels {

enum class Isa { Scalar, Avx2 };

std::string_view isa_name(Isa isa);

/// Best ISA supported by both the build and the running CPU.
Isa detected_isa();

/// ISA currently used by the dispatching entry points. Defaults to
/// detected_isa(), or Scalar when FOCUSRL_KERNELS=scalar is set.
Isa active_isa();

/// Overrides the dispatch target. Requests for an unavailable ISA fall back to
/// Scalar. Not thread-safe with respect to concurrent kernel calls.
void set_active_isa(Isa isa);

/// Result of one row of the longest-common-block dynamic program.
struct RowBest {
  std::int32_t length = 0;  ///< largest run length in the row
  std::size_t index = 0;    ///< first column attaining it (valid iff length > 0)
};

/// Advances the longest-common-substring DP by one row of `a`:
///   cur[j] = (b[j] == ch) ? prev[j-1] + 1 : 0,   prev[-1] := 0
/// `prev` and `cur` have b.size() entries and must not alias.
/// Returns the maximum of `cur` and its earliest column.
using MatchRowFn = RowBest (*)(char32_t ch, std::span<const char32_t> b,
                               std::span<const std::int32_t> prev,
                               std::span<std::int32_t> cur);

/// Structure-of-arrays box batch; all spans share one length.
struct BoxesSoA {
  std::span<const double> x1, y1, x2, y2;
  std::size_t size() const { return x1.size(); }
};

/// out[k] = IoU(box, others[k]) with IoU := 0 when the union area is 0.
/// Boxes must be normalized (x1 <= x2, y1 <= y2).
using IouManyFn = void (*)(double bx1, double by1, double bx2, double by2,
                           const BoxesSoA& others, std::span<double> out);

/// y[k] += alpha * x[k]
using AxpyFn = void (*)(double alpha, std::span<const double> x,
                        std::span<double> y);

struct KernelTable {
  MatchRowFn match_row;
  IouManyFn iou_many;
  AxpyFn axpy;
};

/// Table for a specific ISA (Scalar always available). Returns nullptr when the
/// ISA was not compiled in or is not supported by the CPU.
const KernelTable* table_for(Isa isa);

// Dispatching entry points.
RowBest match_row(char32_t ch, std::span<const char32_t> b,
                  std::span<const std::int32_t> prev,
                  std::span<std::int32_t> cur);
void iou_many(double bx1, double by1, double bx2, double by2,
              const BoxesSoA& others, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);

namespace scalar {
RowBest match_row(char32_t ch, std::span<const char32_t> b,
                  std::span<const std::int32_t> prev,
                  std::span<std::int32_t> cur);
void iou_many(double bx1, double by1, double bx2, double by2,
              const BoxesSoA& others, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
double iou(double ax1, double ay1, double ax2, double ay2, double bx1,
           double by1, double bx2, double by2);
}  // namespace scalar

#if defined(FOCUSRL_HAVE_AVX2)
namespace avx2 {
RowBest match_row(char32_t ch, std::span<const char32_t> b,
                  std::span<const std::int32_t> prev,
                  std::span<std::int32_t> cur);
void iou_many(double bx1, double by1, double bx2, double by2,
              const BoxesSoA& others, std::span<double> out);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
}  // namespace avx2
#endif

}  // namespace focusrl::kernels
