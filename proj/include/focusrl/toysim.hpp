#pragma once

// Desk-scale harness for the Focus-GRPO objective: a tabular autoregressive
// softmax policy over a small symbolic vocabulary, a synthetic chart-QA
// environment, the exact policy gradient, and a plain gradient-ascent loop.
//
// Sampled token sequences are rendered to text and scored by the real
// parser + reward stack, so the simulator exercises the whole pipeline.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "focusrl/focus_trace.hpp"
#include "focusrl/objective.hpp"
#include "focusrl/rewards.hpp"

namespace focusrl::toysim {

enum class Token : std::uint8_t {
  Eos,
  ThinkOpen,
  ThinkClose,
  FocusOpen,
  FocusClose,
  AnswerOpen,
  AnswerClose,
  OcrQuery,   // the queried row, "key: value"
  OcrRowA,    // two distractor rows
  OcrRowB,
  OcrTitle,
  BoxQuery,   // bar of the queried row, labelled with its key
  BoxRowA,
  BoxRowB,
  BoxLegend,  // legend box, labelled with the title
  Filler0, Filler1, Filler2, Filler3, Filler4, Filler5, Filler6, Filler7,
  AnsFocused,  // value of the first OCR item read
  AnsMax,      // largest value in the chart, absent from the prior
  Digit0, Digit1, Digit2, Digit3, Digit4, Digit5, Digit6, Digit7, Digit8,
  Digit9,
};

inline constexpr std::size_t kVocabSize = static_cast<std::size_t>(Token::Digit9) + 1;

/// Coarse class of the previous token; together with the position it forms
/// the policy state.
enum class TokenClass : std::uint8_t {
  Start,
  ThinkOpen,
  ThinkClose,
  FocusOpen,
  FocusClose,
  AnswerOpen,
  AnswerClose,
  Ocr,
  Box,
  Filler,
  AnswerValue,
  End,  // Eos; never a conditioning state
};

inline constexpr std::size_t kNumStateClasses = static_cast<std::size_t>(TokenClass::End);

TokenClass token_class(Token t);
std::string_view token_name(Token t);

struct ChartRow {
  std::string key;
  int value = 0;
  Box bar;
};

struct SyntheticTask {
  std::string id;
  std::string title;
  std::vector<ChartRow> rows;
  std::size_t query_row = 0;
  Box legend;

  std::string question() const;
  std::string ground_truth() const;
  AnswerSpec answer_spec() const;  ///< numeric, ground truth in the table
};

/// Deterministic chart with four rows of distinct values in [10, 99].
SyntheticTask make_task(std::uint64_t seed);

/// Renders a token sequence to response text for `task`.
std::string render_tokens(std::span<const Token> tokens, const SyntheticTask& task);

class ToyPolicy {
 public:
  /// Uniform policy (all logits zero).
  explicit ToyPolicy(std::size_t max_len);

  /// Structured prior standing in for a cold-started model: mostly emits the
  /// response grammar, with a realistic share of repeated focus items.
  static ToyPolicy cold_start(std::size_t max_len);

  std::size_t max_len() const { return max_len_; }
  std::size_t num_params() const { return logits_.size(); }
  std::size_t index(std::size_t pos, TokenClass prev, Token tok) const;

  std::span<double> logits() { return logits_; }
  std::span<const double> logits() const { return logits_; }
  std::span<const double> row(std::size_t pos, TokenClass prev) const;

  /// Softmax of one state row into `out` (kVocabSize entries).
  void probs(std::size_t pos, TokenClass prev, std::span<double> out) const;
  double log_prob(std::size_t pos, TokenClass prev, Token tok) const;

  /// Per-token log-probabilities of a sequence (state chain from Start).
  std::vector<double> sequence_logprobs(std::span<const Token> tokens) const;

 private:
  std::size_t max_len_;
  std::vector<double> logits_;
};

/// Samples one sequence; stops at Eos or after max_len tokens.
std::vector<Token> sample_sequence(const ToyPolicy& policy, std::uint64_t seed);

struct SampledResponse {
  std::vector<Token> tokens;
  std::string text;
  RewardBreakdown reward;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
};

/// G responses to one task drawn from the old policy; reference log-probs and
/// rewards are frozen at sampling time.
struct SampledGroup {
  SyntheticTask task;
  std::vector<SampledResponse> responses;
};

SampledGroup sample_rollouts(const ToyPolicy& old_policy,
                             const ToyPolicy& ref_policy,
                             const SyntheticTask& task, std::size_t group_size,
                             std::uint64_t seed, const RewardConfig& reward_cfg);

/// Objective input for the current parameters `theta`.
RolloutGroup to_rollout_group(const SampledGroup& group, const ToyPolicy& theta);

/// Mean Focus-GRPO objective over the groups at parameters `theta`.
double batch_objective(const ToyPolicy& theta, std::span<const SampledGroup> groups,
                       const ObjectiveConfig& cfg);

/// Exact d(batch_objective)/d(logits). Throws std::invalid_argument when a
/// sequence does not fit the policy table.
std::vector<double> analytic_gradient(const ToyPolicy& theta,
                                      std::span<const SampledGroup> groups,
                                      const ObjectiveConfig& cfg);

/// Central differences of batch_objective, one parameter at a
/// time. Only parameters listed in `indices` are evaluated (all when empty).
std::vector<double> finite_difference_gradient(
    const ToyPolicy& theta, std::span<const SampledGroup> groups,
    const ObjectiveConfig& cfg, double h, std::span<const std::size_t> indices = {});

struct GradCheckConfig {
  std::uint64_t seed = 1;
  std::size_t max_len = 12;
  std::size_t group_size = 8;
  std::size_t num_tasks = 2;
  double h = 1e-5;
  double perturbation = 0.5;  ///< spread of the random theta/old/ref offsets
  double tolerance = 1e-4;
  double denominator_floor = 1e-6;
  bool flip_analytic_sign = false;  ///< negative control
  ObjectiveConfig objective;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::size_t worst_index = 0;
  std::size_t checked = 0;
  double seconds = 0.0;
  bool passed = false;
};

/// Random theta != old != ref instance; compares analytic_gradient against
/// central differences on every parameter touched by a sampled sequence.
GradCheckResult run_gradcheck(const GradCheckConfig& cfg);

struct TrainConfig {
  std::size_t iterations = 200;
  std::size_t group_size = 8;
  std::size_t tasks_per_iteration = 4;
  std::size_t updates_per_iteration = 2;
  std::size_t max_len = 32;
  double learning_rate = 0.3;
  std::uint64_t seed = 1;
  RewardConfig reward;
  ObjectiveConfig objective;
  bool efficiency_reward = true;  ///< false: "w/o efficiency" ablation (w2 = 0)
  bool adaptive_kl = true;        ///< false: fixed beta

  void validate() const;
};

struct IterationMetrics {
  std::size_t iteration = 0;
  double mean_reward = 0.0;
  double mean_accuracy = 0.0;
  double mean_p_redundancy = 0.0;
  double mean_n_info = 0.0;
  double mean_beta = 0.0;
  double focus_rate = 0.0;  ///< share of FocusCoT responses
  double objective = 0.0;
};

using TrainMetrics = std::vector<IterationMetrics>;

class DivergenceError : public std::runtime_error {
 public:
  DivergenceError(std::size_t iteration, TrainMetrics partial);
  std::size_t iteration() const { return iteration_; }
  /// Metrics of all iterations completed with finite values.
  const TrainMetrics& partial() const { return partial_; }

 private:
  std::size_t iteration_;
  TrainMetrics partial_;
};

using IterationCallback = std::function<void(const IterationMetrics&)>;

/// Gradient-ascent loop. Throws DivergenceError on a non-finite objective.
TrainMetrics train(const TrainConfig& cfg, const IterationCallback& on_iteration = {});

/// Mean of `field` over iterations [begin, end).
double window_mean(const TrainMetrics& m, std::size_t begin, std::size_t end,
                   double IterationMetrics::*field);

}  // namespace focusrl::toysim
