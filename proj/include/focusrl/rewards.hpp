#pragma once

// Per-response reward components and their weighted total.

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "focusrl/focus_trace.hpp"

namespace focusrl {

enum class AnswerType { Numeric, Exact };

std::string_view to_string(AnswerType t);
/// Accepts "numeric" / "exact" (case-insensitive); nullopt otherwise.
std::optional<AnswerType> parse_answer_type(std::string_view s);
/// Numeric when the ground truth parses as a number, Exact otherwise.
AnswerType infer_answer_type(std::string_view ground_truth);

struct AnswerSpec {
  std::string ground_truth;
  AnswerType answer_type = AnswerType::Exact;
  double mu = 1e-6;

  /// Throws std::invalid_argument when mu <= 0 or a numeric ground truth does
  /// not parse as a finite number.
  void validate() const;
};

enum class BoxPairMode {
  All,             ///< every unordered pair enters the mean
  OverlappingOnly  ///< only pairs with IoU > 0
};

struct RewardConfig {
  double alpha = 2.0;  ///< efficiency decay rate
  double tau = 0.9;    ///< similarity threshold for text redundancy
  double w1 = 0.1;     ///< format weight
  double w2 = 0.1;     ///< efficiency weight
  BoxPairMode box_pairs = BoxPairMode::All;

  void validate() const;
};

inline constexpr double kFormatRewardFocus = 1.0;
inline constexpr double kFormatRewardPlain = 0.667;
inline constexpr double kRelativeTolerance = 0.05;

struct RewardBreakdown {
  double r_relaxed_acc = 0.0;
  double r_format = 0.0;
  std::optional<double> p_tt;
  std::optional<double> p_bb;
  std::optional<double> p_tb;
  double p_redundancy = 0.0;
  double r_efficiency = 1.0;
  double total = 0.0;
  FormatClass format = FormatClass::Malformed;
  CueCounts cues;

  friend bool operator==(const RewardBreakdown&,
                         const RewardBreakdown&) = default;
};

/// Parses a chart answer as a number: strips a leading currency sign, a
/// trailing percent sign and thousands separators (groups of three).
/// nullopt when anything else remains or the value is not finite.
std::optional<double> parse_numeric_answer(std::string_view s);

double relaxed_accuracy(std::string_view prediction, const AnswerSpec& spec);
double format_reward(FormatClass fc);

std::optional<double> ocr_ocr_penalty(std::span<const std::string> texts,
                                      double tau);
std::optional<double> box_box_penalty(std::span<const Box> boxes,
                                      BoxPairMode mode = BoxPairMode::All);
std::optional<double> ocr_box_penalty(std::span<const std::string> texts,
                                      std::span<const std::string> labels,
                                      double tau);

struct RedundancyTerms {
  std::optional<double> p_tt, p_bb, p_tb;
  double p_redundancy = 0.0;  ///< mean of the present terms, 0 if none
};

RedundancyTerms redundancy_terms(const FocusTrace& trace,
                                 const RewardConfig& cfg);
double redundancy_penalty(const FocusTrace& trace, const RewardConfig& cfg);

double efficiency_reward(double p_redundancy, double alpha);

RewardBreakdown score_trace(const FocusTrace& trace, const AnswerSpec& spec,
                            const RewardConfig& cfg);
RewardBreakdown score_response(std::string_view response,
                               const AnswerSpec& spec, const RewardConfig& cfg);

}  // namespace focusrl
