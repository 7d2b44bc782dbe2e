#include <doctest.h>

#include "focusrl/focus_trace.hpp"
#include "test_util.hpp"

using namespace focusrl;

TEST_CASE("parse: focus event with ocr and labelled box") {
  const auto t = parse_response(
      "<think>A is 5 <focus><ocr>peak=5</ocr><box>[10,20,50,60] legend</box></focus> so "
      "5</think><answer>5</answer>");
  CHECK(t.format == FormatClass::FocusCoT);
  REQUIRE(t.events.size() == 1);
  REQUIRE(t.events[0].ocr_texts.size() == 1);
  CHECK(t.events[0].ocr_texts[0] == "peak=5");
  REQUIRE(t.events[0].boxes.size() == 1);
  const Box& b = t.events[0].boxes[0];
  CHECK(b.x1 == 10);
  CHECK(b.y1 == 20);
  CHECK(b.x2 == 50);
  CHECK(b.y2 == 60);
  REQUIRE(b.label);
  CHECK(*b.label == "legend");
  CHECK(t.answer == "5");
}

TEST_CASE("parse: plain and malformed") {
  const auto plain = parse_response("<think>reasoning</think><answer>yes</answer>");
  CHECK(plain.format == FormatClass::PlainCoT);
  CHECK(plain.events.empty());
  CHECK(plain.answer == "yes");

  const auto junk = parse_response("just text no tags");
  CHECK(junk.format == FormatClass::Malformed);
  CHECK(junk.answer.empty());

  CHECK(classify_format("<think>unclosed") == FormatClass::Malformed);
  CHECK(classify_format("") == FormatClass::Malformed);
}

TEST_CASE("parse: strict grammar edge cases") {
  // Empty focus, stray tags, bad boxes and trailing text are all malformed.
  for (const char* s : {
           "<think><focus></focus></think><answer>1</answer>",
           "<think><focus><ocr>a</ocr></think><answer>1</answer>",
           "<think><ocr>a</ocr></think><answer>1</answer>",
           "<think><focus><box>[1,2,3]</box></focus></think><answer>1</answer>",
           "<think><focus><box>[1,2,3,x]</box></focus></think><answer>1</answer>",
           "<think><focus><box>1,2,3,4</box></focus></think><answer>1</answer>",
           "<think><focus>text<ocr>a</ocr></focus></think><answer>1</answer>",
           "<think>x</think><answer>1</answer> trailing",
           "<think>x</think><answer></answer>",
           "<think>x</think>",
           "<think><answer>1</answer></think><answer>1</answer>",
           "<think><focus><ocr>a<box>[0,0,1,1]</box></ocr></focus></think><answer>1</answer>",
       }) {
    INFO(s);
    const auto t = parse_response(s);
    CHECK(t.format == FormatClass::Malformed);
    CHECK(t.events.empty());
  }
}

TEST_CASE("parse: whitespace, multiple answers, box normalization") {
  const auto t = parse_response(
      "  <think> a <focus> <ocr> x </ocr>\n <box> [ 5 , 6 , 1 , 2 ] </box> </focus> "
      "</think>\n<answer> first </answer> <answer> last </answer>  ");
  CHECK(t.format == FormatClass::FocusCoT);
  CHECK(t.answer == "last");
  REQUIRE(t.events.size() == 1);
  CHECK(t.events[0].ocr_texts[0] == "x");
  const Box& b = t.events[0].boxes[0];
  CHECK(b == Box{1, 2, 5, 6, std::nullopt});
}

TEST_CASE("parse: malformed keeps best-effort answer") {
  const auto t = parse_response("<think>x <focus></focus></think><answer>42</answer>");
  CHECK(t.format == FormatClass::Malformed);
  CHECK(t.answer == "42");
  CHECK(t.think_body == "x <focus></focus>");
}

TEST_CASE("count_cues") {
  CHECK(count_cues(parse_response("<think>a</think><answer>1</answer>")) == CueCounts{0, 0, 0.0});
  const auto t = parse_response(
      "<think><focus><ocr>a</ocr><ocr>b</ocr><box>[0,0,1,1]</box></focus> then "
      "<focus><ocr>c</ocr><ocr>d</ocr><box>[1,1,2,2] k</box></focus></think><answer>1</answer>");
  CHECK(count_cues(t) == CueCounts{4, 2, 3.0});
  const auto one = parse_response("<think><focus><ocr>a</ocr></focus></think><answer>1</answer>");
  CHECK(count_cues(one) == CueCounts{1, 0, 0.5});
}

namespace {

const std::string_view kPieces[] = {
    "<think>", "</think>", "<answer>", "</answer>", "<focus>", "</focus>", "<ocr>", "</ocr>",
    "<box>",   "</box>",   "[1,2,3,4]", " ",        "a",        "42",        "\xff",   "é", ",",
};

std::string fuzz_text(testutil::Rng& rng) {
  std::string s;
  const std::size_t n = rng.below(24);
  for (std::size_t i = 0; i < n; ++i) s += kPieces[rng.below(std::size(kPieces))];
  return s;
}

FocusTrace random_trace(testutil::Rng& rng) {
  FocusTrace t;
  t.format = FormatClass::PlainCoT;
  std::string body = rng.text("abc xyz", 6);
  const std::size_t events = rng.below(4);
  for (std::size_t e = 0; e < events; ++e) {
    FocusEvent ev;
    const std::size_t items = 1 + rng.below(4);
    for (std::size_t k = 0; k < items; ++k) {
      if (rng.coin()) {
        std::string s = rng.text("ab=1 .é", 8);
        ev.ocr_texts.push_back(std::string(
            s.find_first_not_of(' ') == std::string::npos ? "x" : s));
      } else {
        Box b{static_cast<double>(rng.between(0, 500)), rng.range(0, 500), rng.range(0, 500),
              static_cast<double>(rng.between(0, 500)), std::nullopt};
        if (rng.coin()) b.label = "lbl" + std::to_string(rng.below(5));
        ev.boxes.push_back(b.normalized());
      }
    }
    body += ' ';
    body += render_event(ev);
    body += ' ';
    body += rng.text("abc", 4);
    t.events.push_back(std::move(ev));
  }
  t.format = t.events.empty() ? FormatClass::PlainCoT : FormatClass::FocusCoT;
  t.answer = "ans" + std::to_string(rng.below(100));
  t.think_body = body;
  return t;
}

// Parsing trims OCR text; normalize so the expected trace matches.
FocusTrace canonical(FocusTrace t) {
  for (auto& e : t.events) {
    for (auto& s : e.ocr_texts) {
      const auto a = s.find_first_not_of(' ');
      const auto b = s.find_last_not_of(' ');
      s = s.substr(a, b - a + 1);
    }
    // Items render OCR first, then boxes.
  }
  const auto a = t.think_body.find_first_not_of(' ');
  const auto b = t.think_body.find_last_not_of(' ');
  t.think_body = a == std::string::npos ? "" : t.think_body.substr(a, b - a + 1);
  return t;
}

}  // namespace

TEST_CASE("property: parse is total and agrees with classify_format") {
  testutil::Rng rng(7);
  for (int i = 0; i < 20000; ++i) {
    const std::string s = fuzz_text(rng);
    const auto t = parse_response(s);
    CHECK(classify_format(s) == t.format);
    if (t.format == FormatClass::Malformed) CHECK(t.events.empty());
    if (t.format == FormatClass::FocusCoT) CHECK(!t.events.empty());
    if (t.format == FormatClass::PlainCoT) CHECK(t.events.empty());
  }
}

TEST_CASE("property: render/parse round trip") {
  testutil::Rng rng(11);
  for (int i = 0; i < 5000; ++i) {
    const FocusTrace t = canonical(random_trace(rng));
    const std::string text = render_response(t);
    const FocusTrace back = parse_response(text);
    INFO(text);
    CHECK(back == t);
    CHECK(render_response(back) == text);
  }
}

TEST_CASE("property: appending one ocr item adds exactly one to n_ocr") {
  testutil::Rng rng(13);
  for (int i = 0; i < 2000; ++i) {
    FocusTrace t = canonical(random_trace(rng));
    if (t.events.empty()) continue;
    const auto before = count_cues(parse_response(render_response(t)));
    const std::size_t e = rng.below(t.events.size());
    t.events[e].ocr_texts.push_back("extra" + std::to_string(i));
    // Rebuild the body from events so the new item is in the text.
    std::string body;
    for (const auto& ev : t.events) body += render_event(ev) + " ";
    t.think_body = body;
    const auto after = count_cues(parse_response(render_response(t)));
    CHECK(after.n_ocr == before.n_ocr + 1);
    CHECK(after.n_box == before.n_box);
    CHECK(after.n_info == before.n_info + 0.5);
  }
}
