#pragma once

// Parsing of tagged reasoning responses.
//
// Grammar (whitespace around tags is insignificant):
//
//   response := "<think>" body "</think>" answer+
//   answer   := "<answer>" text "</answer>"          (the last block wins)
//   body     := (text | event)*
//   event    := "<focus>" item+ "</focus>"
//   item     := "<ocr>" text "</ocr>"
//             | "<box>" "[" num "," num "," num "," num "]" label? "</box>"
//
// A response with at least one event is FocusCoT, one without events is
// PlainCoT, and anything that does not match is Malformed. Malformed traces
// keep a best-effort answer (the last <answer> block anywhere) and no events.

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace focusrl {

struct Box {
  double x1 = 0, y1 = 0, x2 = 0, y2 = 0;
  std::optional<std::string> label;

  /// Swaps coordinates so that x1 <= x2 and y1 <= y2.
  Box normalized() const;
  double area() const { return (x2 - x1) * (y2 - y1); }

  friend bool operator==(const Box&, const Box&) = default;
};

struct FocusEvent {
  std::vector<std::string> ocr_texts;
  std::vector<Box> boxes;

  bool well_formed() const { return !ocr_texts.empty() || !boxes.empty(); }
  friend bool operator==(const FocusEvent&, const FocusEvent&) = default;
};

enum class FormatClass { FocusCoT, PlainCoT, Malformed };

std::string_view to_string(FormatClass fc);

struct FocusTrace {
  std::string think_body;  ///< raw body between <think> and </think>, trimmed
  std::vector<FocusEvent> events;
  std::string answer;
  FormatClass format = FormatClass::Malformed;

  friend bool operator==(const FocusTrace&, const FocusTrace&) = default;
};

struct CueCounts {
  std::size_t n_ocr = 0;
  std::size_t n_box = 0;
  double n_info = 0.0;  ///< (n_ocr + n_box) / 2

  friend bool operator==(const CueCounts&, const CueCounts&) = default;
};

/// Total: never throws on any input.
FocusTrace parse_response(std::string_view text);

FormatClass classify_format(std::string_view text);

CueCounts count_cues(const FocusTrace& trace);

/// All OCR texts / boxes of a trace, in document order, pooled across events.
std::vector<std::string> pooled_ocr_texts(const FocusTrace& trace);
std::vector<Box> pooled_boxes(const FocusTrace& trace);

// Canonical rendering, the inverse of parse_response for well-formed traces.
std::string render_box(const Box& box);
std::string render_event(const FocusEvent& event);
std::string render_response(const FocusTrace& trace);

}  // namespace focusrl
