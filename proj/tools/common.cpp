#include <cmath>
#include <iomanip>
#include <ostream>

#include "cli_common.hpp"

namespace focusrl::cli {

void add_reward_flags(CLI::App* cmd, RewardConfig& cfg) {
  cmd->add_option("--alpha", cfg.alpha, "Efficiency reward sharpness")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--tau", cfg.tau, "Text similarity threshold")
      ->check(CLI::Range(0.0, 1.0))
      ->capture_default_str();
  cmd->add_option("--w1", cfg.w1, "Format reward weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--w2", cfg.w2, "Efficiency reward weight")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
  cmd->add_option("--box-pairs", cfg.box_pairs, "Box pairs entering the box-box penalty")
      ->transform(CLI::CheckedTransformer(
          std::map<std::string, BoxPairMode>{{"all", BoxPairMode::All},
                                             {"overlapping", BoxPairMode::OverlappingOnly}},
          CLI::ignore_case))
      ->default_str("all");
}

void add_objective_flags(CLI::App* cmd, ObjectiveConfig& cfg) {
  cmd->add_option("--beta", cfg.beta, "KL coefficient")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--epsilon", cfg.epsilon, "Clip radius")
      ->check(CLI::PositiveNumber)
      ->capture_default_str();
  cmd->add_option("--std-floor", cfg.std_floor, "Advantage std floor")
      ->check(CLI::NonNegativeNumber)
      ->capture_default_str();
}

void print_histogram(std::ostream& os, const std::string& title,
                     std::span<const double> values, double lo, double hi,
                     std::size_t bins) {
  std::vector<std::size_t> counts(bins, 0);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (double v : values) {
    if (!std::isfinite(v)) continue;
    auto b = static_cast<long>(std::floor((v - lo) / width));
    b = std::clamp<long>(b, 0, static_cast<long>(bins) - 1);
    ++counts[static_cast<std::size_t>(b)];
  }
  const std::size_t peak = std::max<std::size_t>(1, *std::max_element(counts.begin(), counts.end()));
  os << title << '\n';
  for (std::size_t b = 0; b < bins; ++b) {
    const double a = lo + width * static_cast<double>(b);
    const std::size_t bar = (counts[b] * 40 + peak - 1) / peak;
    os << "  [" << std::fixed << std::setprecision(2) << std::setw(5) << a << ", "
       << std::setw(5) << a + width << (b + 1 == bins ? "] " : ") ") << std::setw(6)
       << counts[b] << ' ' << std::string(bar, '#') << '\n';
  }
  os.unsetf(std::ios::floatfield);
}

}  // namespace focusrl::cli
