#pragma once

#include <algorithm>
#include <atomic>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "focusrl/objective.hpp"
#include "focusrl/rewards.hpp"

namespace focusrl::cli {

enum ExitCode : int {
  kOk = 0,
  kCheckFailed = 1,  ///< gradient check failure or divergence
  kValidation = 2,   ///< bad flags or records
  kIo = 3,
  kProvider = 4,
  kPartial = 5,  ///< some records failed, others were written
};

using Runner = std::function<int()>;

void register_score(CLI::App& app, Runner& run);
void register_gradcheck(CLI::App& app, Runner& run);
void register_simulate(CLI::App& app, Runner& run);
void register_report(CLI::App& app, Runner& run);
void register_pipeline(CLI::App& app, Runner& run);
void register_chart_id(CLI::App& app, Runner& run);

void add_reward_flags(CLI::App* cmd, RewardConfig& cfg);
void add_objective_flags(CLI::App* cmd, ObjectiveConfig& cfg);

/// Text histogram of `values` over [lo, hi] with `bins` equal bins; values
/// outside the range land in the end bins.
void print_histogram(std::ostream& os, const std::string& title,
                     std::span<const double> values, double lo, double hi,
                     std::size_t bins = 10);

template <class Fn>
void parallel_for(std::size_t n, std::size_t jobs, Fn fn) {
  const std::size_t threads = std::max<std::size_t>(1, std::min(jobs, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  for (std::size_t t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) fn(i);
    });
  }
  for (auto& th : pool) th.join();
}

}  // namespace focusrl::cli
