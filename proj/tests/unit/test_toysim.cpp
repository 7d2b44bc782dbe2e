#include <doctest.h>

#include <cmath>
#include <set>
#include <vector>

#include "focusrl/toysim.hpp"

using namespace focusrl;
using namespace focusrl::toysim;

TEST_CASE("tasks are deterministic and well formed") {
  const auto a = make_task(5);
  const auto b = make_task(5);
  CHECK(a.question() == b.question());
  CHECK(a.ground_truth() == b.ground_truth());
  REQUIRE(a.rows.size() == 4);
  std::set<int> values;
  for (const auto& r : a.rows) {
    CHECK(r.value >= 10);
    CHECK(r.value <= 99);
    values.insert(r.value);
  }
  CHECK(values.size() == 4);
  CHECK(a.query_row < 4);
  CHECK(a.ground_truth() == std::to_string(a.rows[a.query_row].value));
  CHECK(a.answer_spec().answer_type == AnswerType::Numeric);
}

TEST_CASE("rendered focus tokens score through the real stack") {
  const auto task = make_task(9);
  const std::vector<Token> seq{Token::ThinkOpen,  Token::FocusOpen,  Token::OcrQuery,
                               Token::BoxQuery,   Token::FocusClose, Token::ThinkClose,
                               Token::AnswerOpen, Token::AnsFocused, Token::AnswerClose,
                               Token::Eos};
  const auto text = render_tokens(seq, task);
  const auto r = score_response(text, task.answer_spec(), RewardConfig{});
  INFO(text);
  CHECK(r.format == FormatClass::FocusCoT);
  CHECK(r.r_relaxed_acc == 1.0);
  CHECK(r.cues == CueCounts{1, 1, 1.0});

  std::vector<Token> dup = seq;
  dup.insert(dup.begin() + 3, Token::OcrQuery);
  const auto rd = score_response(render_tokens(dup, task), task.answer_spec(), RewardConfig{});
  CHECK(rd.p_tt == 1.0);
  CHECK(rd.total < r.total);
}

TEST_CASE("policy rows are normalized") {
  const auto p = ToyPolicy::cold_start(6);
  std::vector<double> probs(kVocabSize);
  for (std::size_t pos = 0; pos < 6; ++pos) {
    for (std::size_t c = 0; c < kNumStateClasses; ++c) {
      p.probs(pos, static_cast<TokenClass>(c), probs);
      double s = 0;
      for (double v : probs) {
        CHECK(std::isfinite(v));
        s += v;
      }
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
  CHECK_THROWS_AS(ToyPolicy(0), std::invalid_argument);
}

TEST_CASE("sampling is deterministic and respects max_len") {
  for (std::size_t max_len : {1u, 3u, 12u, 32u}) {
    const auto p = ToyPolicy::cold_start(max_len);
    const ToyPolicy uniform(max_len);
    for (std::uint64_t seed = 0; seed < 200; ++seed) {
      const auto s = sample_sequence(p, seed);
      CHECK(s == sample_sequence(p, seed));
      CHECK(s.size() <= max_len);
      CHECK(!s.empty());
      CHECK(sample_sequence(uniform, seed).size() <= max_len);
      for (std::size_t k = 0; k + 1 < s.size(); ++k) CHECK(s[k] != Token::Eos);
    }
  }
}

TEST_CASE("one-hot policy yields identical sequences") {
  ToyPolicy p(10);
  for (std::size_t pos = 0; pos < 10; ++pos) {
    for (std::size_t c = 0; c < kNumStateClasses; ++c) {
      const auto tok = static_cast<Token>(static_cast<int>(Token::Filler0) + pos % 8);
      p.logits()[p.index(pos, static_cast<TokenClass>(c), tok)] = 1000.0;
    }
  }
  const auto task = make_task(1);
  const auto g = sample_rollouts(p, p, task, 8, 42, RewardConfig{});
  REQUIRE(g.responses.size() == 8);
  for (const auto& r : g.responses) {
    CHECK(r.tokens == g.responses[0].tokens);
    CHECK(r.tokens.size() == 10);
    for (double lp : r.logp_old) CHECK(lp == 0.0);
  }
}

TEST_CASE("group sampling produces finite log-probs") {
  const auto p = ToyPolicy::cold_start(16);
  const auto g = sample_rollouts(p, p, make_task(3), 8, 7, RewardConfig{});
  REQUIRE(g.responses.size() == 8);
  for (const auto& r : g.responses) {
    CHECK(r.logp_old.size() == r.tokens.size());
    CHECK(r.logp_ref == r.logp_old);
    for (double v : r.logp_old) CHECK(std::isfinite(v));
  }
  CHECK_THROWS_AS(sample_rollouts(p, p, make_task(3), 1, 7, RewardConfig{}), DegenerateGroup);
}

namespace {

std::vector<SampledGroup> sample_groups(const ToyPolicy& p, std::uint64_t seed) {
  std::vector<SampledGroup> gs;
  for (std::uint64_t k = 0; k < 3; ++k) {
    gs.push_back(sample_rollouts(p, p, make_task(seed + k), 8, seed * 31 + k, RewardConfig{}));
  }
  return gs;
}

double max_abs(const std::vector<double>& v) {
  double m = 0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

}  // namespace

TEST_CASE("zero gradient when theta = old = ref and advantages vanish") {
  const auto p = ToyPolicy::cold_start(12);
  auto gs = sample_groups(p, 5);
  for (auto& g : gs) {
    for (auto& r : g.responses) r.reward.total = 0.5;
  }
  CHECK(max_abs(analytic_gradient(p, gs, ObjectiveConfig{})) == 0.0);
}

TEST_CASE("clip-saturated responses contribute no policy gradient") {
  const auto p = ToyPolicy::cold_start(12);
  auto gs = sample_groups(p, 8);
  const ObjectiveConfig cfg;
  // Control: on-policy, the gradient is not zero.
  CHECK(max_abs(analytic_gradient(p, gs, cfg)) > 1e-3);

  // Push every ratio outside [1 - eps, 1 + eps] on the side where the clipped
  // branch is the minimum; ref = theta keeps the KL gradient at zero too.
  for (auto& g : gs) {
    std::vector<double> rewards;
    for (const auto& r : g.responses) rewards.push_back(r.reward.total);
    const auto adv = group_advantages(rewards);
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      auto& r = g.responses[i];
      const double shift = adv[i] > 0 ? 2.0 : -2.0;
      r.logp_old[0] -= shift;  // ratio = exp(shift)
    }
  }
  CHECK(max_abs(analytic_gradient(p, gs, cfg)) == 0.0);
}

TEST_CASE("analytic gradient rejects sequences that do not fit") {
  const auto p = ToyPolicy::cold_start(12);
  const auto gs = sample_groups(p, 2);
  const ToyPolicy small = ToyPolicy::cold_start(1);
  bool any_long = false;
  for (const auto& g : gs) {
    for (const auto& r : g.responses) any_long = any_long || r.tokens.size() > 1;
  }
  REQUIRE(any_long);
  CHECK_THROWS_AS(analytic_gradient(small, gs, ObjectiveConfig{}), std::invalid_argument);
}

TEST_CASE("standing gradient check") {
  for (std::uint64_t seed : {1u, 2u, 3u, 4u}) {
    GradCheckConfig cfg;
    cfg.seed = seed;
    const auto res = run_gradcheck(cfg);
    INFO("seed " << seed << " err " << res.max_relative_error);
    CHECK(res.passed);
    CHECK(res.max_relative_error < 1e-4);
    CHECK(res.checked > 0);
  }
  GradCheckConfig fixed;
  fixed.objective.adaptive_kl = false;
  CHECK(run_gradcheck(fixed).passed);

  GradCheckConfig flipped;
  flipped.flip_analytic_sign = true;
  const auto bad = run_gradcheck(flipped);
  CHECK_FALSE(bad.passed);
  CHECK(bad.max_relative_error > 1.0);
}

TEST_CASE("training is bit-reproducible") {
  TrainConfig cfg;
  cfg.iterations = 15;
  cfg.seed = 4;
  const auto a = train(cfg);
  const auto b = train(cfg);
  REQUIRE(a.size() == 15);
  REQUIRE(b.size() == 15);
  for (std::size_t k = 0; k < a.size(); ++k) {
    CHECK(a[k].mean_reward == b[k].mean_reward);
    CHECK(a[k].mean_p_redundancy == b[k].mean_p_redundancy);
    CHECK(a[k].mean_beta == b[k].mean_beta);
    CHECK(a[k].objective == b[k].objective);
  }
  cfg.seed = 5;
  const auto c = train(cfg);
  bool differs = false;
  for (std::size_t k = 0; k < a.size(); ++k) differs = differs || a[k].mean_reward != c[k].mean_reward;
  CHECK(differs);
}

TEST_CASE("training metrics are consistent") {
  TrainConfig cfg;
  cfg.iterations = 10;
  std::size_t calls = 0;
  const auto m = train(cfg, [&](const IterationMetrics& it) { CHECK(it.iteration == calls++); });
  CHECK(calls == 10);
  for (const auto& it : m) {
    CHECK(it.mean_beta <= cfg.objective.beta);
    if (it.mean_n_info > 0) CHECK(it.mean_beta < cfg.objective.beta);
    CHECK(it.focus_rate >= 0.0);
    CHECK(it.focus_rate <= 1.0);
  }
  cfg.adaptive_kl = false;
  for (const auto& it : train(cfg)) {
    CHECK(it.mean_beta == doctest::Approx(cfg.objective.beta).epsilon(1e-14));
  }
  CHECK(window_mean(m, 0, 10, &IterationMetrics::mean_reward) > 0.0);
  CHECK(window_mean(m, 5, 5, &IterationMetrics::mean_reward) == 0.0);
}

TEST_CASE("train config validation") {
  TrainConfig cfg;
  cfg.group_size = 1;
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  cfg = {};
  cfg.max_len = 65;
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
  cfg = {};
  cfg.learning_rate = 0;
  CHECK_THROWS_AS(train(cfg), std::invalid_argument);
}

TEST_CASE("divergence is reported with partial metrics") {
  TrainConfig cfg;
  cfg.iterations = 50;
  cfg.learning_rate = 1e6;
  try {
    train(cfg);
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(e.partial().size() == e.iteration());
    for (const auto& it : e.partial()) CHECK(std::isfinite(it.objective));
  }
}
