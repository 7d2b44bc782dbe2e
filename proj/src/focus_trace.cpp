#include "focusrl/focus_trace.hpp"

#include <array>
#include <charconv>
#include <cmath>
#include <utility>

#include "text_util.hpp"

namespace focusrl {
namespace {

constexpr std::string_view kThinkOpen = "<think>";
constexpr std::string_view kThinkClose = "</think>";
constexpr std::string_view kAnswerOpen = "<answer>";
constexpr std::string_view kAnswerClose = "</answer>";
constexpr std::string_view kFocusOpen = "<focus>";
constexpr std::string_view kFocusClose = "</focus>";
constexpr std::string_view kOcrOpen = "<ocr>";
constexpr std::string_view kOcrClose = "</ocr>";
constexpr std::string_view kBoxOpen = "<box>";
constexpr std::string_view kBoxClose = "</box>";

constexpr std::array<std::string_view, 10> kAllTags = {
    kThinkOpen, kThinkClose, kAnswerOpen, kAnswerClose, kFocusOpen,
    kFocusClose, kOcrOpen,   kOcrClose,   kBoxOpen,     kBoxClose};

bool contains_any_tag(std::string_view s) {
  for (auto tag : kAllTags) {
    if (s.find(tag) != std::string_view::npos) return true;
  }
  return false;
}

std::optional<double> parse_coordinate(std::string_view s) {
  s = text::trim(s);
  if (s.empty()) return std::nullopt;
  double v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size() || !std::isfinite(v)) {
    return std::nullopt;
  }
  return v;
}

std::optional<Box> parse_box_content(std::string_view content) {
  content = text::trim(content);
  if (content.empty() || content.front() != '[') return std::nullopt;
  const auto close = content.find(']');
  if (close == std::string_view::npos) return std::nullopt;
  std::string_view coords = content.substr(1, close - 1);

  std::array<double, 4> v{};
  for (std::size_t k = 0; k < 4; ++k) {
    const auto comma = coords.find(',');
    const bool last = k == 3;
    if (last != (comma == std::string_view::npos)) return std::nullopt;
    const auto parsed = parse_coordinate(last ? coords : coords.substr(0, comma));
    if (!parsed) return std::nullopt;
    v[k] = *parsed;
    if (!last) coords.remove_prefix(comma + 1);
  }

  Box box{v[0], v[1], v[2], v[3], std::nullopt};
  const auto label = text::trim(content.substr(close + 1));
  if (!label.empty()) box.label = std::string(label);
  return box.normalized();
}

// Parses the think body; nullopt when any focus construct is malformed.
std::optional<std::vector<FocusEvent>> parse_body(std::string_view body) {
  std::vector<FocusEvent> events;
  std::size_t pos = 0;
  while (true) {
    std::size_t tag_at = std::string_view::npos;
    std::string_view tag;
    for (auto t : {kFocusOpen, kFocusClose, kOcrOpen, kOcrClose, kBoxOpen,
                   kBoxClose}) {
      const auto at = body.find(t, pos);
      if (at < tag_at) {
        tag_at = at;
        tag = t;
      }
    }
    if (tag_at == std::string_view::npos) break;
    if (tag != kFocusOpen) return std::nullopt;

    std::string_view rest = body.substr(tag_at + kFocusOpen.size());
    FocusEvent event;
    bool closed = false;
    while (!closed) {
      rest = text::ltrim(rest);
      if (rest.starts_with(kFocusClose)) {
        rest.remove_prefix(kFocusClose.size());
        closed = true;
      } else if (rest.starts_with(kOcrOpen)) {
        rest.remove_prefix(kOcrOpen.size());
        const auto end = rest.find(kOcrClose);
        if (end == std::string_view::npos) return std::nullopt;
        const auto content = rest.substr(0, end);
        if (contains_any_tag(content)) return std::nullopt;
        event.ocr_texts.emplace_back(text::trim(content));
        rest.remove_prefix(end + kOcrClose.size());
      } else if (rest.starts_with(kBoxOpen)) {
        rest.remove_prefix(kBoxOpen.size());
        const auto end = rest.find(kBoxClose);
        if (end == std::string_view::npos) return std::nullopt;
        const auto content = rest.substr(0, end);
        if (contains_any_tag(content)) return std::nullopt;
        auto box = parse_box_content(content);
        if (!box) return std::nullopt;
        event.boxes.push_back(std::move(*box));
        rest.remove_prefix(end + kBoxClose.size());
      } else {
        return std::nullopt;
      }
    }
    if (!event.well_formed()) return std::nullopt;
    events.push_back(std::move(event));
    pos = body.size() - rest.size();
  }
  return events;
}

std::optional<FocusTrace> parse_strict(std::string_view text) {
  std::string_view s = text::trim(text);
  if (!s.starts_with(kThinkOpen)) return std::nullopt;
  s.remove_prefix(kThinkOpen.size());
  const auto close = s.find(kThinkClose);
  if (close == std::string_view::npos) return std::nullopt;
  const std::string_view body = s.substr(0, close);
  for (auto t : {kThinkOpen, kAnswerOpen, kAnswerClose}) {
    if (body.find(t) != std::string_view::npos) return std::nullopt;
  }
  auto events = parse_body(body);
  if (!events) return std::nullopt;

  std::string_view rest = text::ltrim(s.substr(close + kThinkClose.size()));
  if (rest.empty()) return std::nullopt;
  std::string_view answer;
  while (!rest.empty()) {
    if (!rest.starts_with(kAnswerOpen)) return std::nullopt;
    rest.remove_prefix(kAnswerOpen.size());
    const auto end = rest.find(kAnswerClose);
    if (end == std::string_view::npos) return std::nullopt;
    const auto content = rest.substr(0, end);
    if (contains_any_tag(content)) return std::nullopt;
    answer = text::trim(content);
    rest = text::ltrim(rest.substr(end + kAnswerClose.size()));
  }
  if (answer.empty()) return std::nullopt;

  FocusTrace trace;
  trace.think_body = std::string(text::trim(body));
  trace.format = events->empty() ? FormatClass::PlainCoT : FormatClass::FocusCoT;
  trace.events = std::move(*events);
  trace.answer = std::string(answer);
  return trace;
}

FocusTrace parse_best_effort(std::string_view text) {
  FocusTrace trace;
  trace.format = FormatClass::Malformed;

  const auto open = text.find(kThinkOpen);
  if (open != std::string_view::npos) {
    const auto from = open + kThinkOpen.size();
    const auto close = text.find(kThinkClose, from);
    if (close != std::string_view::npos) {
      trace.think_body = std::string(text::trim(text.substr(from, close - from)));
    }
  }

  // Last complete <answer>...</answer> block.
  std::size_t search = text.size();
  while (search != 0) {
    const auto a = text.rfind(kAnswerOpen, search - 1);
    if (a == std::string_view::npos) break;
    const auto from = a + kAnswerOpen.size();
    const auto end = text.find(kAnswerClose, from);
    if (end != std::string_view::npos) {
      trace.answer = std::string(text::trim(text.substr(from, end - from)));
      break;
    }
    search = a;
  }
  return trace;
}

void append_number(std::string& out, double v) {
  std::array<char, 32> buf{};
  const auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  out.append(buf.data(), ptr);
}

}  // namespace

Box Box::normalized() const {
  Box b = *this;
  if (b.x1 > b.x2) std::swap(b.x1, b.x2);
  if (b.y1 > b.y2) std::swap(b.y1, b.y2);
  return b;
}

std::string_view to_string(FormatClass fc) {
  switch (fc) {
    case FormatClass::FocusCoT:
      return "focus_cot";
    case FormatClass::PlainCoT:
      return "plain_cot";
    case FormatClass::Malformed:
      return "malformed";
  }
  return "malformed";
}

FocusTrace parse_response(std::string_view text) {
  if (auto strict = parse_strict(text)) return std::move(*strict);
  return parse_best_effort(text);
}

FormatClass classify_format(std::string_view text) {
  const auto strict = parse_strict(text);
  return strict ? strict->format : FormatClass::Malformed;
}

CueCounts count_cues(const FocusTrace& trace) {
  CueCounts c;
  for (const auto& e : trace.events) {
    c.n_ocr += e.ocr_texts.size();
    c.n_box += e.boxes.size();
  }
  c.n_info = static_cast<double>(c.n_ocr + c.n_box) / 2.0;
  return c;
}

std::vector<std::string> pooled_ocr_texts(const FocusTrace& trace) {
  std::vector<std::string> out;
  for (const auto& e : trace.events) {
    out.insert(out.end(), e.ocr_texts.begin(), e.ocr_texts.end());
  }
  return out;
}

std::vector<Box> pooled_boxes(const FocusTrace& trace) {
  std::vector<Box> out;
  for (const auto& e : trace.events) {
    out.insert(out.end(), e.boxes.begin(), e.boxes.end());
  }
  return out;
}

std::string render_box(const Box& box) {
  std::string out(kBoxOpen);
  out += '[';
  append_number(out, box.x1);
  out += ',';
  append_number(out, box.y1);
  out += ',';
  append_number(out, box.x2);
  out += ',';
  append_number(out, box.y2);
  out += ']';
  if (box.label) {
    out += ' ';
    out += *box.label;
  }
  out += kBoxClose;
  return out;
}

std::string render_event(const FocusEvent& event) {
  std::string out(kFocusOpen);
  for (const auto& t : event.ocr_texts) {
    out += kOcrOpen;
    out += t;
    out += kOcrClose;
  }
  for (const auto& b : event.boxes) out += render_box(b);
  out += kFocusClose;
  return out;
}

std::string render_response(const FocusTrace& trace) {
  std::string out(kThinkOpen);
  out += trace.think_body;
  out += kThinkClose;
  out += kAnswerOpen;
  out += trace.answer;
  out += kAnswerClose;
  return out;
}

}  // namespace focusrl
