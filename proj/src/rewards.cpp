#include "focusrl/rewards.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <stdexcept>

#include "focusrl/kernels.hpp"
#include "focusrl/similarity.hpp"
#include "text_util.hpp"

namespace focusrl {
namespace {

bool is_digit(char c) { return c >= '0' && c <= '9'; }

std::vector<std::u32string> decode_all(std::span<const std::string> texts) {
  std::vector<std::u32string> out;
  out.reserve(texts.size());
  for (const auto& t : texts) out.push_back(decode_utf8(t));
  return out;
}

}  // namespace

std::string_view to_string(AnswerType t) {
  return t == AnswerType::Numeric ? "numeric" : "exact";
}

std::optional<AnswerType> parse_answer_type(std::string_view s) {
  const auto n = text::normalize_exact(s);
  if (n == "numeric") return AnswerType::Numeric;
  if (n == "exact") return AnswerType::Exact;
  return std::nullopt;
}

AnswerType infer_answer_type(std::string_view ground_truth) {
  return parse_numeric_answer(ground_truth) ? AnswerType::Numeric : AnswerType::Exact;
}

void AnswerSpec::validate() const {
  if (!(mu > 0.0) || !std::isfinite(mu)) {
    throw std::invalid_argument("answer spec: mu must be a positive finite number");
  }
  if (answer_type == AnswerType::Numeric && !parse_numeric_answer(ground_truth)) {
    throw std::invalid_argument("answer spec: numeric ground truth '" +
                                ground_truth + "' is not a finite number");
  }
}

void RewardConfig::validate() const {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw std::invalid_argument("reward config: alpha must be > 0");
  }
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw std::invalid_argument("reward config: tau must lie in [0, 1]");
  }
  if (!(w1 >= 0.0) || !(w2 >= 0.0) || !std::isfinite(w1) || !std::isfinite(w2)) {
    throw std::invalid_argument("reward config: weights must be >= 0");
  }
}

std::optional<double> parse_numeric_answer(std::string_view s) {
  s = text::trim(s);
  bool negative = false;
  if (!s.empty() && (s.front() == '-' || s.front() == '+')) {
    negative = s.front() == '-';
    s = text::ltrim(s.substr(1));
  }
  for (std::string_view sign : {"$", "\xE2\x82\xAC", "\xC2\xA3", "\xC2\xA5"}) {
    if (s.starts_with(sign)) {
      s = text::ltrim(s.substr(sign.size()));
      break;
    }
  }
  if (!s.empty() && s.back() == '%') s = text::rtrim(s.substr(0, s.size() - 1));
  if (s.empty()) return std::nullopt;

  // Commas must group the integer part in threes: 1,234,567.5
  const std::string_view int_part = s.substr(0, s.find('.'));
  if (int_part.size() < s.size() &&
      s.substr(int_part.size()).find(',') != std::string_view::npos) {
    return std::nullopt;
  }
  if (int_part.find(',') != std::string_view::npos) {
    std::size_t run = 0;
    bool first = true;
    for (char c : int_part) {
      if (c == ',') {
        if (run == 0 || run > 3 || (!first && run != 3)) return std::nullopt;
        first = false;
        run = 0;
      } else if (is_digit(c)) {
        ++run;
      } else {
        return std::nullopt;
      }
    }
    if (run != 3) return std::nullopt;
  }

  std::string digits;
  digits.reserve(s.size() + 1);
  if (negative) digits += '-';
  for (char c : s) {
    if (c != ',') digits += c;
  }
  // A second sign after the currency symbol is not a number.
  if (digits.size() > (negative ? 1u : 0u) &&
      (digits[negative ? 1 : 0] == '-' || digits[negative ? 1 : 0] == '+')) {
    return std::nullopt;
  }
  double v = 0;
  const auto* first = digits.data();
  const auto* last = digits.data() + digits.size();
  const auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc{} || ptr != last || !std::isfinite(v)) return std::nullopt;
  return v;
}

double relaxed_accuracy(std::string_view prediction, const AnswerSpec& spec) {
  if (spec.answer_type == AnswerType::Numeric) {
    const auto truth = parse_numeric_answer(spec.ground_truth);
    const auto pred = parse_numeric_answer(prediction);
    if (!truth || !pred) return 0.0;
    const double rel = std::abs(*pred - *truth) / std::max(std::abs(*truth), spec.mu);
    return rel <= kRelativeTolerance ? 1.0 : 0.0;
  }
  return text::normalize_exact(prediction) ==
                 text::normalize_exact(spec.ground_truth)
             ? 1.0
             : 0.0;
}

double format_reward(FormatClass fc) {
  switch (fc) {
    case FormatClass::FocusCoT:
      return kFormatRewardFocus;
    case FormatClass::PlainCoT:
      return kFormatRewardPlain;
    case FormatClass::Malformed:
      return 0.0;
  }
  return 0.0;
}

std::optional<double> ocr_ocr_penalty(std::span<const std::string> texts,
                                      double tau) {
  if (texts.size() < 2) return std::nullopt;
  const auto decoded = decode_all(texts);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i < decoded.size(); ++i) {
    for (std::size_t j = i + 1; j < decoded.size(); ++j) {
      const double s = gestalt_ratio(decoded[i], decoded[j]);
      if (s > tau) {
        sum += s;
        ++count;
      }
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::optional<double> box_box_penalty(std::span<const Box> boxes,
                                      BoxPairMode mode) {
  const std::size_t n = boxes.size();
  if (n < 2) return std::nullopt;
  std::vector<double> x1(n), y1(n), x2(n), y2(n), row(n);
  for (std::size_t k = 0; k < n; ++k) {
    const Box b = boxes[k].normalized();
    x1[k] = b.x1;
    y1[k] = b.y1;
    x2[k] = b.x2;
    y2[k] = b.y2;
  }
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t i = 0; i + 1 < n; ++i) {
    const std::size_t m = n - i - 1;
    const kernels::BoxesSoA rest{{x1.data() + i + 1, m},
                                 {y1.data() + i + 1, m},
                                 {x2.data() + i + 1, m},
                                 {y2.data() + i + 1, m}};
    std::span<double> out(row.data(), m);
    kernels::iou_many(x1[i], y1[i], x2[i], y2[i], rest, out);
    for (double v : out) {
      if (mode == BoxPairMode::OverlappingOnly && !(v > 0.0)) continue;
      sum += v;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

std::optional<double> ocr_box_penalty(std::span<const std::string> texts,
                                      std::span<const std::string> labels,
                                      double tau) {
  if (texts.empty() || labels.empty()) return std::nullopt;
  const auto dt = decode_all(texts);
  const auto dl = decode_all(labels);
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : dt) {
    double best = 0.0;
    for (const auto& l : dl) best = std::max(best, gestalt_ratio(t, l));
    if (best > tau) {
      sum += best;
      ++count;
    }
  }
  if (count == 0) return std::nullopt;
  return sum / static_cast<double>(count);
}

RedundancyTerms redundancy_terms(const FocusTrace& trace,
                                 const RewardConfig& cfg) {
  RedundancyTerms terms;
  if (trace.events.empty()) return terms;
  const auto texts = pooled_ocr_texts(trace);
  const auto boxes = pooled_boxes(trace);
  std::vector<std::string> labels;
  for (const auto& b : boxes) {
    if (b.label) labels.push_back(*b.label);
  }
  terms.p_tt = ocr_ocr_penalty(texts, cfg.tau);
  terms.p_bb = box_box_penalty(boxes, cfg.box_pairs);
  terms.p_tb = ocr_box_penalty(texts, labels, cfg.tau);

  double sum = 0.0;
  int present = 0;
  for (const auto& t : {terms.p_tt, terms.p_bb, terms.p_tb}) {
    if (t) {
      sum += *t;
      ++present;
    }
  }
  terms.p_redundancy = present == 0 ? 0.0 : sum / present;
  return terms;
}

double redundancy_penalty(const FocusTrace& trace, const RewardConfig& cfg) {
  return redundancy_terms(trace, cfg).p_redundancy;
}

double efficiency_reward(double p_redundancy, double alpha) {
  return std::exp(-alpha * p_redundancy);
}

RewardBreakdown score_trace(const FocusTrace& trace, const AnswerSpec& spec,
                            const RewardConfig& cfg) {
  RewardBreakdown r;
  r.format = trace.format;
  r.cues = count_cues(trace);
  r.r_relaxed_acc = relaxed_accuracy(trace.answer, spec);
  r.r_format = format_reward(trace.format);
  const auto terms = redundancy_terms(trace, cfg);
  r.p_tt = terms.p_tt;
  r.p_bb = terms.p_bb;
  r.p_tb = terms.p_tb;
  r.p_redundancy = terms.p_redundancy;
  r.r_efficiency = efficiency_reward(r.p_redundancy, cfg.alpha);
  r.total = r.r_relaxed_acc + cfg.w1 * r.r_format + cfg.w2 * r.r_efficiency;
  return r;
}

RewardBreakdown score_response(std::string_view response,
                               const AnswerSpec& spec, const RewardConfig& cfg) {
  return score_trace(parse_response(response), spec, cfg);
}

}  // namespace focusrl
