#include <atomic>
#include <cstdlib>
#include <string_view>

#include "focusrl/kernels.hpp"

namespace focusrl::kernels {
namespace {

constexpr KernelTable kScalarTable{&scalar::match_row, &scalar::iou_many,
                                   &scalar::axpy};
#if defined(FOCUSRL_HAVE_AVX2)
constexpr KernelTable kAvx2Table{&avx2::match_row, &avx2::iou_many,
                                 &avx2::axpy};
#endif

bool cpu_has_avx2() {
#if defined(FOCUSRL_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  __builtin_cpu_init();
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa initial_isa() {
  if (const char* env = std::getenv("FOCUSRL_KERNELS")) {
    if (std::string_view(env) == "scalar") return Isa::Scalar;
  }
  return detected_isa();
}

std::atomic<const KernelTable*>& active_table() {
  static std::atomic<const KernelTable*> table{table_for(initial_isa())};
  return table;
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return "scalar";
    case Isa::Avx2:
      return "avx2";
  }
  return "unknown";
}

Isa detected_isa() {
  static const Isa isa = cpu_has_avx2() ? Isa::Avx2 : Isa::Scalar;
  return isa;
}

const KernelTable* table_for(Isa isa) {
  switch (isa) {
    case Isa::Scalar:
      return &kScalarTable;
    case Isa::Avx2:
#if defined(FOCUSRL_HAVE_AVX2)
      return cpu_has_avx2() ? &kAvx2Table : nullptr;
#else
      return nullptr;
#endif
  }
  return nullptr;
}

Isa active_isa() {
#if defined(FOCUSRL_HAVE_AVX2)
  if (active_table().load() == &kAvx2Table) return Isa::Avx2;
#endif
  return Isa::Scalar;
}

void set_active_isa(Isa isa) {
  const KernelTable* t = table_for(isa);
  active_table().store(t != nullptr ? t : &kScalarTable);
}

RowBest match_row(char32_t ch, std::span<const char32_t> b,
                  std::span<const std::int32_t> prev,
                  std::span<std::int32_t> cur) {
  return active_table().load(std::memory_order_relaxed)->match_row(ch, b, prev,
                                                                    cur);
}

void iou_many(double bx1, double by1, double bx2, double by2,
              const BoxesSoA& others, std::span<double> out) {
  active_table().load(std::memory_order_relaxed)->iou_many(bx1, by1, bx2, by2,
                                                           others, out);
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  active_table().load(std::memory_order_relaxed)->axpy(alpha, x, y);
}

}  // namespace focusrl::kernels
