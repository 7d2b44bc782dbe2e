// Acceptance suite: one PASS/FAIL line per primary criterion. Exit status is
// the number of failed criteria (0 when all pass).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <set>
#include <string>
#include <vector>

#include "focusrl/objective.hpp"
#include "focusrl/pipeline.hpp"
#include "focusrl/rewards.hpp"
#include "focusrl/similarity.hpp"
#include "focusrl/toysim.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace focusrl;

namespace {

// Pinned tolerances.
constexpr double kExampleTol = 1e-9;
constexpr double kDirectTol = 1e-12;
constexpr double kRedundancyTol = 1e-12;
constexpr double kAdvMeanTol = 1e-12;
constexpr double kAdvStdTol = 1e-9;
constexpr double kAdvInvarianceTol = 1e-9;
constexpr double kGradTol = 1e-4;
constexpr double kGradStep = 1e-5;
constexpr double kGradSeconds = 60.0;
constexpr double kRunSeconds = 300.0;
constexpr std::size_t kWindow = 20;

struct Check {
  bool ok = true;
  std::string detail;

  void expect(bool cond, const std::string& what) {
    if (!cond && ok) detail = what;
    ok = ok && cond;
  }
  void near(double got, double want, double tol, const std::string& what) {
    expect(std::abs(got - want) <= tol,
           what + ": got " + std::to_string(got) + ", want " + std::to_string(want));
  }
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Check formula_conformance() {
  Check c;
  const AnswerSpec hundred{"100", AnswerType::Numeric, 1e-6};
  c.near(relaxed_accuracy("104", hundred), 1.0, kExampleTol, "acc 104/100");
  c.near(relaxed_accuracy("106", hundred), 0.0, kExampleTol, "acc 106/100");
  c.near(relaxed_accuracy("Paris", {"Paris", AnswerType::Exact, 1e-6}), 1.0, kExampleTol, "acc Paris");
  c.near(relaxed_accuracy("0", {"0", AnswerType::Numeric, 1e-6}), 1.0, kExampleTol, "acc 0/0");
  c.near(format_reward(FormatClass::FocusCoT), 1.0, kExampleTol, "format focus");
  c.near(format_reward(FormatClass::PlainCoT), 0.667, kExampleTol, "format plain");
  c.near(format_reward(FormatClass::Malformed), 0.0, kExampleTol, "format malformed");
  c.near(efficiency_reward(0.0, 2.0), 1.0, kDirectTol, "eff p=0");
  c.near(efficiency_reward(1.0, 2.0), std::exp(-2.0), kDirectTol, "eff p=1");
  c.near(efficiency_reward(0.5, 2.0), std::exp(-1.0), kDirectTol, "eff p=0.5");
  c.near(adaptive_beta(0.01, 0.0), 0.01, kDirectTol, "beta' n=0");
  c.near(adaptive_beta(0.01, 3.0), 0.01 / (1.0 + std::log(4.0)), kDirectTol, "beta' n=3");
  c.near(kl_k3(0.0), 0.0, kDirectTol, "k3 0");
  c.near(kl_k3(std::log(2.0)), 2.0 - std::log(2.0) - 1.0, kDirectTol, "k3 ln2");
  c.near(kl_k3(-std::log(2.0)), 0.5 + std::log(2.0) - 1.0, kDirectTol, "k3 -ln2");
  c.near(pipeline::chart_id({5, 5, 5, 5}), 5.0, kExampleTol, "chart_id max");
  c.near(pipeline::chart_id({1, 1, 1, 1}), 1.0, kExampleTol, "chart_id min");
  c.near(pipeline::chart_id({4, 3, 4, 3}), 2.0 + 0.6 + 0.8 + 0.3, kDirectTol, "chart_id 4,3,4,3");

  const RewardConfig r;
  const ObjectiveConfig o;
  c.expect(r.alpha == 2.0 && r.tau == 0.9 && r.w1 == 0.1 && r.w2 == 0.1, "reward defaults");
  c.expect(o.beta == 1e-2, "beta default");
  c.expect(toysim::TrainConfig{}.group_size == 8, "G default");
  if (c.ok) c.detail = "examples within 1e-9 / 1e-12, defaults alpha=2 tau=0.9 beta=1e-2 w1=w2=0.1";
  return c;
}

Check similarity_oracle() {
  Check c;
  testutil::Rng rng(20251);
  const std::string_view alphabets[] = {"ab", "abc", "abcd ", "abcdefghijklmnop", "0123456789.,="};
  int n = 0;
  for (; n < 10000 && c.ok; ++n) {
    const auto alpha = alphabets[rng.below(std::size(alphabets))];
    const std::string sa = rng.text(alpha, 64);
    std::string sb = rng.coin() ? rng.text(alpha, 64) : sa;
    if (sb == sa && !sb.empty()) sb[rng.below(sb.size())] = alpha[rng.below(alpha.size())];
    const auto a = oracle::widen(sa), b = oracle::widen(sb);
    c.expect(gestalt_ratio(a, b) == oracle::ratio(a, b), "ratio mismatch on '" + sa + "' / '" + sb + "'");
  }
  if (c.ok) c.detail = std::to_string(n) + " random pairs (len <= 64), exact equality";
  return c;
}

void redundancy_case(Check& c, const FocusTrace& t) {
  const RewardConfig cfg;
  const double got = redundancy_penalty(t, cfg);
  const double want = oracle::redundancy(pooled_ocr_texts(t), pooled_boxes(t), cfg.tau).p;
  c.expect(std::abs(got - want) <= kRedundancyTol, "p_redundancy " + std::to_string(got) +
                                                       " vs oracle " + std::to_string(want));
}

Check redundancy_oracle() {
  Check c;
  struct Cue {
    std::optional<std::string> text;
    std::optional<Box> box;
  };
  const std::vector<Cue> pool = {
      {"abcdefghijk", {}},
      {"abcdefghijX", {}},
      {"legend", {}},
      {"peak=5", {}},
      {{}, Box{0, 0, 2, 2, "legend "}},
      {{}, Box{1, 1, 3, 3, {}}},
      {{}, Box{0, 0, 2, 2, "peak=6"}},
      {{}, Box{10, 10, 12, 12, "abcdefghijk"}},
  };
  std::size_t exhaustive = 0;
  std::vector<std::size_t> idx;
  std::function<void()> visit = [&] {
    FocusTrace t;
    if (!idx.empty()) {
      FocusEvent ev;
      for (std::size_t k : idx) {
        if (pool[k].text) ev.ocr_texts.push_back(*pool[k].text);
        if (pool[k].box) ev.boxes.push_back(*pool[k].box);
      }
      t.events.push_back(ev);
      t.format = FormatClass::FocusCoT;
    }
    redundancy_case(c, t);
    ++exhaustive;
    if (idx.size() == 6) return;
    for (std::size_t k = 0; k < pool.size(); ++k) {
      idx.push_back(k);
      visit();
      idx.pop_back();
    }
  };
  visit();

  testutil::Rng rng(1000);
  const char* texts[] = {"peak=5", "peak=6", "legend", "abcdefghij", "abcdefghiX", "a", ""};
  const char* labels[] = {"legend", "peak=5", "abcdefghij", "zzz"};
  for (int i = 0; i < 1000; ++i) {
    FocusTrace t;
    const std::size_t cues = 1 + rng.below(6);
    FocusEvent ev;
    for (std::size_t k = 0; k < cues; ++k) {
      if (rng.coin()) {
        ev.ocr_texts.push_back(rng.coin(0.7) ? texts[rng.below(std::size(texts))] : rng.text("ab=", 8));
      } else {
        Box b = rng.box(10.0);
        if (rng.coin()) b.label = labels[rng.below(std::size(labels))];
        ev.boxes.push_back(b);
      }
    }
    t.events.push_back(ev);
    t.format = FormatClass::FocusCoT;
    redundancy_case(c, t);
  }
  if (c.ok) {
    c.detail = std::to_string(exhaustive) + " exhaustive + 1000 random traces (<= 6 cues), tol 1e-12";
  }
  return c;
}

Check advantage_properties() {
  Check c;
  testutil::Rng rng(11);
  auto pop_std = [](const std::vector<double>& v) {
    double m = 0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size()));
  };
  int groups = 0;
  for (int i = 0; i < 10000 && c.ok; ++i) {
    std::vector<double> r(rng.between(2, 16));
    for (auto& x : r) x = rng.coin(0.3) ? static_cast<double>(rng.between(0, 1)) : rng.range(0, 1.2);
    if (pop_std(r) < 1e-6) continue;
    ++groups;
    const auto a = group_advantages(r);
    double mean = 0;
    for (double x : a) mean += x;
    mean /= static_cast<double>(a.size());
    c.expect(std::abs(mean) < kAdvMeanTol, "mean " + std::to_string(mean));
    c.expect(std::abs(pop_std(a) - 1.0) <= kAdvStdTol, "std " + std::to_string(pop_std(a)));
    const double shift = rng.range(-5, 5), scale = std::exp(rng.range(-4, 4));
    std::vector<double> rs = r, rk = r;
    for (auto& x : rs) x += shift;
    for (auto& x : rk) x *= scale;
    const auto as = group_advantages(rs), ak = group_advantages(rk);
    for (std::size_t k = 0; k < r.size(); ++k) {
      c.expect(std::abs(as[k] - a[k]) <= kAdvInvarianceTol, "shift invariance");
      c.expect(std::abs(ak[k] - a[k]) <= kAdvInvarianceTol, "scale invariance");
      for (std::size_t j = 0; j < r.size(); ++j) {
        if (r[k] < r[j]) c.expect(a[k] < a[j], "rank order");
      }
    }
  }
  if (c.ok) c.detail = std::to_string(groups) + " groups: |mean|<1e-12, std 1+-1e-9, shift/scale, ranks";
  return c;
}

Check gradient_check() {
  Check c;
  const auto t0 = std::chrono::steady_clock::now();
  double worst = 0;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    toysim::GradCheckConfig cfg;
    cfg.seed = seed;
    cfg.h = kGradStep;
    cfg.tolerance = kGradTol;
    const auto res = toysim::run_gradcheck(cfg);
    worst = std::max(worst, res.max_relative_error);
    c.expect(res.max_relative_error < kGradTol,
             "seed " + std::to_string(seed) + " rel err " + std::to_string(res.max_relative_error));
  }
  const double secs = seconds_since(t0);
  c.expect(secs < kGradSeconds, "runtime " + std::to_string(secs) + " s");
  if (c.ok) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "seeds 1-3, h=1e-5, max rel err %.3g < 1e-4, %.2f s", worst, secs);
    c.detail = buf;
  }
  return c;
}

struct RlRuns {
  std::vector<toysim::TrainMetrics> on, off;
  std::vector<double> on_secs, off_secs;
};

RlRuns run_rl() {
  RlRuns runs;
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    toysim::TrainConfig cfg;
    cfg.seed = seed;
    auto t0 = std::chrono::steady_clock::now();
    runs.on.push_back(toysim::train(cfg));
    runs.on_secs.push_back(seconds_since(t0));
    cfg.efficiency_reward = false;
    t0 = std::chrono::steady_clock::now();
    runs.off.push_back(toysim::train(cfg));
    runs.off_secs.push_back(seconds_since(t0));
  }
  return runs;
}

Check desk_rl(const RlRuns& runs) {
  Check c;
  std::string summary;
  for (std::size_t s = 0; s < runs.on.size(); ++s) {
    const auto& on = runs.on[s];
    const auto& off = runs.off[s];
    const std::size_t n = on.size();
    const double p_on = toysim::window_mean(on, n - kWindow, n, &toysim::IterationMetrics::mean_p_redundancy);
    const double p_off = toysim::window_mean(off, n - kWindow, n, &toysim::IterationMetrics::mean_p_redundancy);
    const double r_first = toysim::window_mean(on, 0, kWindow, &toysim::IterationMetrics::mean_reward);
    const double r_last = toysim::window_mean(on, n - kWindow, n, &toysim::IterationMetrics::mean_reward);
    const std::string tag = "seed " + std::to_string(s + 1);
    c.expect(p_on < p_off, tag + ": p_red ON " + std::to_string(p_on) + " !< OFF " + std::to_string(p_off));
    c.expect(r_last > r_first, tag + ": reward " + std::to_string(r_first) + " -> " + std::to_string(r_last));
    c.expect(runs.on_secs[s] < kRunSeconds && runs.off_secs[s] < kRunSeconds, tag + ": over 5 min");
    char buf[128];
    std::snprintf(buf, sizeof buf, "%sseed %zu p_red %.3f<%.3f", s ? "; " : "", s + 1, p_on, p_off);
    summary += buf;
  }
  if (c.ok) c.detail = summary + "; reward rises first->last window; each run < 5 min";
  return c;
}

Check adaptive_kl(const RlRuns& runs) {
  Check c;
  const double beta = 1e-2;
  c.expect(adaptive_beta(beta, 0.0) == beta, "beta'(0) != beta");
  double prev = adaptive_beta(beta, 0.0);
  for (int k = 1; k <= 4000; ++k) {
    const double b = adaptive_beta(beta, 0.05 * k);
    c.expect(b < prev, "not strictly decreasing at n_info=" + std::to_string(0.05 * k));
    prev = b;
  }
  std::size_t checked = 0;
  for (const auto& run : runs.on) {
    for (const auto& m : run) {
      if (m.mean_n_info > 0) {
        c.expect(m.mean_beta < beta, "iteration " + std::to_string(m.iteration) + " mean beta' >= beta");
        ++checked;
      }
    }
  }
  c.expect(checked > 0, "no iteration with n_info > 0");
  if (c.ok) c.detail = "strictly decreasing, beta'(0)=beta, mean beta'<beta on " + std::to_string(checked) + " iterations";
  return c;
}

Check chart_id_range() {
  Check c;
  int n = 0;
  for (int a = 1; a <= 5; ++a)
    for (int b = 1; b <= 5; ++b)
      for (int s = 1; s <= 5; ++s)
        for (int d = 1; d <= 5; ++d) {
          const double v = pipeline::chart_id({a, b, s, d});
          c.expect(v >= 1.0 && v <= 5.0, "out of range");
          const bool ones = a == 1 && b == 1 && s == 1 && d == 1;
          const bool fives = a == 5 && b == 5 && s == 5 && d == 5;
          c.expect((v == 1.0) == ones, "minimum not exactly at all-ones");
          c.expect((v == 5.0) == fives, "maximum not exactly at all-fives");
          ++n;
        }
  if (c.ok) c.detail = std::to_string(n) + " tuples in [1,5], extremes exact";
  return c;
}

Check pipeline_determinism() {
  Check c;
  using namespace pipeline;
  std::vector<SampleRecord> recs;
  for (int k = 0; k < 300; ++k) {
    SampleRecord r;
    r.id = "s" + std::to_string(k);
    r.question = "q";
    r.ground_truth = "1";
    r.pass_count = k % 3 == 0 ? 8 : (k % 3 == 1 ? 4 : 0);
    r.bucket = bucket_for(*r.pass_count, BucketThresholds{});
    recs.push_back(r);
  }
  const auto a = sample_rl_set(recs, 100, 42);
  const auto b = sample_rl_set(recs, 100, 42);
  c.expect(a.counts == std::array<std::size_t, 3>{10, 70, 20}, "counts not 10/70/20");
  c.expect(a.rl_ids == b.rl_ids, "same seed, different selection");

  testutil::TempDir dir;
  std::string input;
  for (int k = 0; k < 100; ++k) {
    input += R"({"id":"r)" + std::to_string(k) + R"(","question":"q","ground_truth":"5"})" + "\n";
  }
  testutil::write_text(dir / "in.jsonl", input);
  StageConfig cfg;
  cfg.stage = Stage::Generate;
  cfg.input = dir / "in.jsonl";
  cfg.output = dir / "out.jsonl";
  cfg.prompt_dir = FOCUSRL_PROMPT_DIR;
  cfg.paths_per_sample = 2;
  cfg.jobs = 4;
  StubProvider flaky({}, "<think>5</think><answer>5</answer>");
  flaky.fail_when([](std::string_view id) {
    return id.starts_with("r3/") || id.starts_with("r50/") || id.starts_with("r77/");
  });
  const auto first = run_stage(cfg, &flaky);
  c.expect(first.processed == 97 && first.failed() == 3, "fault injection not 97/3");
  cfg.resume = true;
  StubProvider stub({}, "<think>5</think><answer>5</answer>");
  const auto second = run_stage(cfg, &stub);
  const auto third = run_stage(cfg, &stub);
  c.expect(second.processed == 3 && third.processed == 0, "resume redid work");
  const auto out = jsonl::read_file(cfg.output);
  std::set<std::string> ids;
  for (const auto& r : out.records) ids.insert(r["id"].get<std::string>());
  c.expect(out.records.size() == 100 && ids.size() == 100, "duplicate ids after resume");
  if (c.ok) c.detail = "total_n=100 -> 10/70/20, seeded repeat identical, resume: 97+3+0, 0 duplicate ids";
  return c;
}

}  // namespace

int main() {
  int failed = 0;
  auto report = [&](const char* name, const Check& c) {
    std::printf("%s %s: %s\n", c.ok ? "PASS" : "FAIL", name, c.detail.c_str());
    std::fflush(stdout);
    if (!c.ok) ++failed;
  };
  report("formula-conformance", formula_conformance());
  report("similarity-oracle", similarity_oracle());
  report("redundancy-oracle", redundancy_oracle());
  report("advantage-properties", advantage_properties());
  report("gradient-check", gradient_check());
  const RlRuns runs = run_rl();
  report("desk-scale-rl", desk_rl(runs));
  report("adaptive-kl", adaptive_kl(runs));
  report("chart-id-range", chart_id_range());
  report("pipeline-determinism", pipeline_determinism());
  return failed;
}
