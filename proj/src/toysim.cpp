#include "focusrl/toysim.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <random>
#include <utility>

#include "focusrl/kernels.hpp"
#include "rng.hpp"

namespace focusrl::toysim {
namespace {

constexpr std::array<std::string_view, 8> kFillerWords = {
    "the", "chart", "shows", "value", "compare", "so", "then", "hence"};

constexpr std::array<std::string_view, 10> kKeys = {
    "Revenue", "Costs", "Profit", "Users", "Sales",
    "Growth",  "Churn", "Margin", "Visits", "Orders"};

constexpr std::array<std::string_view, 4> kTitles = {
    "Quarterly results", "Regional overview", "Annual summary",
    "Product metrics"};

using rng::bounded;
using rng::mix;
using rng::splitmix64;
using rng::uniform01;

bool is_filler(Token t) { return t >= Token::Filler0 && t <= Token::Filler7; }
bool is_digit(Token t) { return t >= Token::Digit0 && t <= Token::Digit9; }

std::size_t tok_index(Token t) { return static_cast<std::size_t>(t); }
std::size_t cls_index(TokenClass c) { return static_cast<std::size_t>(c); }

void log_softmax(std::span<const double> row, std::span<double> out) {
  const double mx = *std::max_element(row.begin(), row.end());
  double s = 0.0;
  for (double v : row) s += std::exp(v - mx);
  const double lse = mx + std::log(s);
  for (std::size_t k = 0; k < row.size(); ++k) out[k] = row[k] - lse;
}

std::string format_box(const Box& b, const std::string& label) {
  Box copy = b;
  copy.label = label;
  return render_box(copy);
}

const ChartRow* row_for(Token t, const SyntheticTask& task) {
  const std::size_t n = task.rows.size();
  switch (t) {
    case Token::OcrQuery:
    case Token::BoxQuery:
      return &task.rows[task.query_row];
    case Token::OcrRowA:
    case Token::BoxRowA:
      return &task.rows[(task.query_row + 1) % n];
    case Token::OcrRowB:
    case Token::BoxRowB:
      return &task.rows[(task.query_row + 2) % n];
    default:
      return nullptr;
  }
}

// Logit preferences of the cold-start prior, by previous token class.
struct Pref {
  Token token;
  double logit;
};

std::vector<Pref> prior_for(TokenClass prev) {
  std::vector<Pref> p;
  auto fillers = [&](double v) {
    for (int k = 0; k < 8; ++k) {
      p.push_back({static_cast<Token>(tok_index(Token::Filler0) + k), v});
    }
  };
  auto items = [&](double query_ocr) {
    p.push_back({Token::OcrQuery, query_ocr});
    p.push_back({Token::OcrRowA, 0.0});
    p.push_back({Token::OcrRowB, 0.0});
    p.push_back({Token::OcrTitle, 0.0});
    p.push_back({Token::BoxQuery, 0.5});
    p.push_back({Token::BoxRowA, -0.5});
    p.push_back({Token::BoxRowB, -0.5});
    p.push_back({Token::BoxLegend, -0.5});
  };
  switch (prev) {
    case TokenClass::Start:
      p.push_back({Token::ThinkOpen, 5.0});
      break;
    case TokenClass::ThinkOpen:
      fillers(0.0);
      p.push_back({Token::FocusOpen, 1.5});
      p.push_back({Token::ThinkClose, -1.0});
      break;
    case TokenClass::Filler:
      fillers(-0.5);
      p.push_back({Token::FocusOpen, 1.0});
      p.push_back({Token::ThinkClose, 1.0});
      break;
    case TokenClass::FocusOpen:
      items(1.0);
      break;
    case TokenClass::Ocr:
    case TokenClass::Box:
      // Habitual re-reading of the queried cue is the redundancy to unlearn.
      items(1.5);
      p.push_back({Token::FocusClose, 1.5});
      break;
    case TokenClass::FocusClose:
      fillers(0.0);
      p.push_back({Token::FocusOpen, -0.5});
      p.push_back({Token::ThinkClose, 1.5});
      break;
    case TokenClass::ThinkClose:
      p.push_back({Token::AnswerOpen, 5.0});
      break;
    case TokenClass::AnswerOpen:
      p.push_back({Token::AnsFocused, 1.5});
      for (int d = 0; d < 10; ++d) {
        p.push_back({static_cast<Token>(tok_index(Token::Digit0) + d), -1.0});
      }
      break;
    case TokenClass::AnswerValue:
      p.push_back({Token::AnswerClose, 3.0});
      break;
    case TokenClass::AnswerClose:
      p.push_back({Token::Eos, 5.0});
      break;
    case TokenClass::End:
      break;
  }
  return p;
}

constexpr double kPriorDefault = -4.0;

}  // namespace

TokenClass token_class(Token t) {
  switch (t) {
    case Token::Eos:
      return TokenClass::End;
    case Token::ThinkOpen:
      return TokenClass::ThinkOpen;
    case Token::ThinkClose:
      return TokenClass::ThinkClose;
    case Token::FocusOpen:
      return TokenClass::FocusOpen;
    case Token::FocusClose:
      return TokenClass::FocusClose;
    case Token::AnswerOpen:
      return TokenClass::AnswerOpen;
    case Token::AnswerClose:
      return TokenClass::AnswerClose;
    case Token::OcrQuery:
    case Token::OcrRowA:
    case Token::OcrRowB:
    case Token::OcrTitle:
      return TokenClass::Ocr;
    case Token::BoxQuery:
    case Token::BoxRowA:
    case Token::BoxRowB:
    case Token::BoxLegend:
      return TokenClass::Box;
    default:
      break;
  }
  if (is_filler(t)) return TokenClass::Filler;
  return TokenClass::AnswerValue;
}

std::string_view token_name(Token t) {
  static constexpr std::array<std::string_view, kVocabSize> kNames = {
      "EOS",      "THINK",    "/THINK",   "FOCUS",    "/FOCUS",   "ANSWER",
      "/ANSWER",  "OCR_Q",    "OCR_A",    "OCR_B",    "OCR_TITLE", "BOX_Q",
      "BOX_A",    "BOX_B",    "BOX_LEGEND", "W_the",  "W_chart",  "W_shows",
      "W_value",  "W_compare", "W_so",    "W_then",   "W_hence",  "ANS_FOCUSED",
      "ANS_MAX",  "D0",       "D1",       "D2",       "D3",       "D4",
      "D5",       "D6",       "D7",       "D8",       "D9"};
  return kNames[tok_index(t)];
}

std::string SyntheticTask::question() const {
  return "What is the value of " + rows[query_row].key + " in the chart '" +
         title + "'?";
}

std::string SyntheticTask::ground_truth() const {
  return std::to_string(rows[query_row].value);
}

AnswerSpec SyntheticTask::answer_spec() const {
  return AnswerSpec{ground_truth(), AnswerType::Numeric, 1e-6};
}

SyntheticTask make_task(std::uint64_t seed) {
  std::mt19937_64 rng(splitmix64(seed));
  SyntheticTask task;
  task.id = "task-" + std::to_string(seed);
  task.title = std::string(kTitles[bounded(rng, kTitles.size())]);

  std::vector<std::size_t> keys(kKeys.size());
  for (std::size_t k = 0; k < keys.size(); ++k) keys[k] = k;
  std::vector<int> values;
  for (int v = 10; v <= 99; ++v) values.push_back(v);
  constexpr std::size_t kRows = 4;
  for (std::size_t r = 0; r < kRows; ++r) {
    std::swap(keys[r], keys[r + bounded(rng, keys.size() - r)]);
    std::swap(values[r], values[r + bounded(rng, values.size() - r)]);
    ChartRow row;
    row.key = std::string(kKeys[keys[r]]);
    row.value = values[r];
    const double x = 40.0 + 60.0 * static_cast<double>(r);
    row.bar = Box{x, 300.0 - 2.5 * row.value, x + 40.0, 300.0, std::nullopt};
    task.rows.push_back(std::move(row));
  }
  task.query_row = bounded(rng, kRows);
  task.legend = Box{400.0, 20.0, 560.0, 60.0, std::nullopt};
  return task;
}

std::string render_tokens(std::span<const Token> tokens, const SyntheticTask& task) {
  std::string out;
  std::string first_read;
  for (Token t : tokens) {
    if (is_filler(t)) {
      out += kFillerWords[tok_index(t) - tok_index(Token::Filler0)];
      out += ' ';
      continue;
    }
    if (is_digit(t)) {
      out += static_cast<char>('0' + (tok_index(t) - tok_index(Token::Digit0)));
      continue;
    }
    switch (t) {
      case Token::Eos:
        break;
      case Token::ThinkOpen:
        out += "<think>";
        break;
      case Token::ThinkClose:
        out += "</think>";
        break;
      case Token::FocusOpen:
        out += "<focus>";
        break;
      case Token::FocusClose:
        out += "</focus>";
        break;
      case Token::AnswerOpen:
        out += "<answer>";
        break;
      case Token::AnswerClose:
        out += "</answer>";
        break;
      case Token::OcrQuery:
      case Token::OcrRowA:
      case Token::OcrRowB: {
        const ChartRow* row = row_for(t, task);
        out += "<ocr>" + row->key + ": " + std::to_string(row->value) + "</ocr>";
        if (first_read.empty()) first_read = std::to_string(row->value);
        break;
      }
      case Token::OcrTitle:
        out += "<ocr>" + task.title + "</ocr>";
        if (first_read.empty()) first_read = task.title;
        break;
      case Token::BoxQuery:
      case Token::BoxRowA:
      case Token::BoxRowB: {
        const ChartRow* row = row_for(t, task);
        out += format_box(row->bar, row->key);
        break;
      }
      case Token::BoxLegend:
        out += format_box(task.legend, task.title);
        break;
      case Token::AnsFocused:
        out += first_read.empty() ? "none" : first_read;
        break;
      case Token::AnsMax: {
        int mx = task.rows.front().value;
        for (const auto& r : task.rows) mx = std::max(mx, r.value);
        out += std::to_string(mx);
        break;
      }
      default:
        break;
    }
  }
  return out;
}

ToyPolicy::ToyPolicy(std::size_t max_len)
    : max_len_(max_len), logits_(max_len * kNumStateClasses * kVocabSize, 0.0) {
  if (max_len == 0) throw std::invalid_argument("toy policy: max_len must be > 0");
}

ToyPolicy ToyPolicy::cold_start(std::size_t max_len) {
  ToyPolicy p(max_len);
  for (std::size_t c = 0; c < kNumStateClasses; ++c) {
    const auto prefs = prior_for(static_cast<TokenClass>(c));
    std::array<double, kVocabSize> row;
    row.fill(kPriorDefault);
    for (const auto& pref : prefs) row[tok_index(pref.token)] = pref.logit;
    for (std::size_t pos = 0; pos < max_len; ++pos) {
      std::copy(row.begin(), row.end(),
                p.logits_.begin() + p.index(pos, static_cast<TokenClass>(c), Token::Eos));
    }
  }
  return p;
}

std::size_t ToyPolicy::index(std::size_t pos, TokenClass prev, Token tok) const {
  return (pos * kNumStateClasses + cls_index(prev)) * kVocabSize + tok_index(tok);
}

std::span<const double> ToyPolicy::row(std::size_t pos, TokenClass prev) const {
  return std::span<const double>(logits_).subspan(index(pos, prev, Token::Eos),
                                                  kVocabSize);
}

void ToyPolicy::probs(std::size_t pos, TokenClass prev, std::span<double> out) const {
  log_softmax(row(pos, prev), out);
  for (double& v : out) v = std::exp(v);
}

double ToyPolicy::log_prob(std::size_t pos, TokenClass prev, Token tok) const {
  std::array<double, kVocabSize> lp;
  log_softmax(row(pos, prev), lp);
  return lp[tok_index(tok)];
}

std::vector<double> ToyPolicy::sequence_logprobs(std::span<const Token> tokens) const {
  if (tokens.size() > max_len_) {
    throw std::invalid_argument("toy policy: sequence longer than max_len");
  }
  std::vector<double> out;
  out.reserve(tokens.size());
  TokenClass prev = TokenClass::Start;
  for (std::size_t t = 0; t < tokens.size(); ++t) {
    if (prev == TokenClass::End) {
      throw std::invalid_argument("toy policy: token after EOS");
    }
    out.push_back(log_prob(t, prev, tokens[t]));
    prev = token_class(tokens[t]);
  }
  return out;
}

std::vector<Token> sample_sequence(const ToyPolicy& policy, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Token> seq;
  std::array<double, kVocabSize> p;
  TokenClass prev = TokenClass::Start;
  for (std::size_t t = 0; t < policy.max_len(); ++t) {
    policy.probs(t, prev, p);
    const double u = uniform01(rng);
    double cum = 0.0;
    std::size_t pick = kVocabSize;
    for (std::size_t k = 0; k < kVocabSize; ++k) {
      cum += p[k];
      if (p[k] > 0.0) pick = k;  // last reachable symbol absorbs rounding
      if (u < cum && p[k] > 0.0) break;
    }
    const auto tok = static_cast<Token>(pick);
    seq.push_back(tok);
    if (tok == Token::Eos) break;
    prev = token_class(tok);
  }
  return seq;
}

SampledGroup sample_rollouts(const ToyPolicy& old_policy,
                             const ToyPolicy& ref_policy,
                             const SyntheticTask& task, std::size_t group_size,
                             std::uint64_t seed, const RewardConfig& reward_cfg) {
  if (group_size < 2) throw DegenerateGroup();
  SampledGroup g;
  g.task = task;
  const AnswerSpec spec = task.answer_spec();
  for (std::size_t i = 0; i < group_size; ++i) {
    SampledResponse r;
    r.tokens = sample_sequence(old_policy, mix(seed, i));
    r.text = render_tokens(r.tokens, task);
    r.reward = score_response(r.text, spec, reward_cfg);
    r.logp_old = old_policy.sequence_logprobs(r.tokens);
    r.logp_ref = ref_policy.sequence_logprobs(r.tokens);
    g.responses.push_back(std::move(r));
  }
  return g;
}

RolloutGroup to_rollout_group(const SampledGroup& group, const ToyPolicy& theta) {
  RolloutGroup out;
  out.question_id = group.task.id;
  for (const auto& r : group.responses) {
    Rollout ro;
    ro.reward = r.reward.total;
    ro.logp_theta = theta.sequence_logprobs(r.tokens);
    ro.logp_old = r.logp_old;
    ro.logp_ref = r.logp_ref;
    ro.cues = r.reward.cues;
    out.responses.push_back(std::move(ro));
  }
  return out;
}

double batch_objective(const ToyPolicy& theta, std::span<const SampledGroup> groups,
                       const ObjectiveConfig& cfg) {
  if (groups.empty()) return 0.0;
  double total = 0.0;
  for (const auto& g : groups) {
    total += focus_grpo_objective(to_rollout_group(g, theta), cfg);
  }
  return total / static_cast<double>(groups.size());
}

std::vector<double> analytic_gradient(const ToyPolicy& theta,
                                      std::span<const SampledGroup> groups,
                                      const ObjectiveConfig& cfg) {
  std::vector<double> grad(theta.num_params(), 0.0);
  if (groups.empty()) return grad;
  const double group_weight = 1.0 / static_cast<double>(groups.size());
  std::array<double, kVocabSize> p;

  for (const auto& g : groups) {
    const auto terms = objective_terms(to_rollout_group(g, theta), cfg);
    const double w = group_weight / static_cast<double>(g.responses.size());
    for (std::size_t i = 0; i < g.responses.size(); ++i) {
      const double ratio = terms.ratios[i];
      const double adv = terms.advantages[i];
      const double clipped = std::clamp(ratio, 1.0 - cfg.epsilon, 1.0 + cfg.epsilon);
      // d/dL of min(ratio*A, clip(ratio)*A): ratio*A on the unclipped branch,
      // 0 where the clipped (constant) branch is selected.
      double coeff = ratio * adv <= clipped * adv ? ratio * adv : 0.0;
      // d/dL of -beta' * k3(L_ref - L): beta' * (exp(L_ref - L) - 1).
      coeff += terms.betas[i] * std::expm1(terms.logratios[i]);
      coeff *= w;
      if (coeff == 0.0) continue;

      const auto& tokens = g.responses[i].tokens;
      TokenClass prev = TokenClass::Start;
      for (std::size_t t = 0; t < tokens.size(); ++t) {
        theta.probs(t, prev, p);
        const std::size_t base = theta.index(t, prev, Token::Eos);
        for (std::size_t k = 0; k < kVocabSize; ++k) grad[base + k] -= coeff * p[k];
        grad[base + tok_index(tokens[t])] += coeff;
        prev = token_class(tokens[t]);
      }
    }
  }
  return grad;
}

std::vector<double> finite_difference_gradient(const ToyPolicy& theta,
                                               std::span<const SampledGroup> groups,
                                               const ObjectiveConfig& cfg, double h,
                                               std::span<const std::size_t> indices) {
  std::vector<double> grad(theta.num_params(), 0.0);
  ToyPolicy probe = theta;
  auto eval = [&](std::size_t k) {
    const double orig = probe.logits()[k];
    probe.logits()[k] = orig + h;
    const double up = batch_objective(probe, groups, cfg);
    probe.logits()[k] = orig - h;
    const double down = batch_objective(probe, groups, cfg);
    probe.logits()[k] = orig;
    grad[k] = (up - down) / (2.0 * h);
  };
  if (indices.empty()) {
    for (std::size_t k = 0; k < theta.num_params(); ++k) eval(k);
  } else {
    for (std::size_t k : indices) eval(k);
  }
  return grad;
}

GradCheckResult run_gradcheck(const GradCheckConfig& cfg) {
  const auto start = std::chrono::steady_clock::now();
  std::mt19937_64 rng(splitmix64(cfg.seed));
  auto noise = [](std::mt19937_64& g) { return 2.0 * uniform01(g) - 1.0; };

  const ToyPolicy ref = ToyPolicy::cold_start(cfg.max_len);
  ToyPolicy old_policy = ref;
  for (double& v : old_policy.logits()) v += cfg.perturbation * noise(rng);
  ToyPolicy theta = old_policy;
  for (double& v : theta.logits()) v += 0.1 * cfg.perturbation * noise(rng);

  std::vector<SampledGroup> groups;
  for (std::size_t k = 0; k < cfg.num_tasks; ++k) {
    const auto task = make_task(mix(cfg.seed, 2 * k));
    groups.push_back(sample_rollouts(old_policy, ref, task, cfg.group_size,
                                     mix(cfg.seed, 2 * k + 1), RewardConfig{}));
  }

  auto analytic = analytic_gradient(theta, groups, cfg.objective);
  if (cfg.flip_analytic_sign) {
    for (double& v : analytic) v = -v;
  }

  // Parameters of every state row visited by some sequence.
  std::vector<std::size_t> indices;
  std::vector<bool> seen(theta.num_params(), false);
  for (const auto& g : groups) {
    for (const auto& r : g.responses) {
      TokenClass prev = TokenClass::Start;
      for (std::size_t t = 0; t < r.tokens.size(); ++t) {
        const std::size_t base = theta.index(t, prev, Token::Eos);
        if (!seen[base]) {
          for (std::size_t k = 0; k < kVocabSize; ++k) {
            seen[base + k] = true;
            indices.push_back(base + k);
          }
        }
        prev = token_class(r.tokens[t]);
      }
    }
  }
  const auto numeric =
      finite_difference_gradient(theta, groups, cfg.objective, cfg.h, indices);

  GradCheckResult res;
  res.checked = indices.size();
  for (std::size_t k : indices) {
    const double a = analytic[k];
    const double f = numeric[k];
    const double denom =
        std::max({std::abs(a), std::abs(f), cfg.denominator_floor});
    const double rel = std::abs(a - f) / denom;
    if (rel > res.max_relative_error || !std::isfinite(rel)) {
      res.max_relative_error = rel;
      res.worst_index = k;
    }
  }
  res.passed = std::isfinite(res.max_relative_error) &&
               res.max_relative_error < cfg.tolerance;
  res.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start)
                    .count();
  return res;
}

void TrainConfig::validate() const {
  if (iterations == 0) throw std::invalid_argument("train: iterations must be > 0");
  if (group_size < 2) throw std::invalid_argument("train: group size must be >= 2");
  if (tasks_per_iteration == 0) {
    throw std::invalid_argument("train: tasks per iteration must be > 0");
  }
  if (max_len == 0 || max_len > 64) {
    throw std::invalid_argument("train: max_len must lie in [1, 64]");
  }
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw std::invalid_argument("train: learning rate must be > 0");
  }
  reward.validate();
  objective.validate();
}

DivergenceError::DivergenceError(std::size_t iteration, TrainMetrics partial)
    : std::runtime_error("training diverged at iteration " + std::to_string(iteration)),
      iteration_(iteration),
      partial_(std::move(partial)) {}

TrainMetrics train(const TrainConfig& cfg, const IterationCallback& on_iteration) {
  cfg.validate();
  RewardConfig reward_cfg = cfg.reward;
  if (!cfg.efficiency_reward) reward_cfg.w2 = 0.0;
  ObjectiveConfig obj_cfg = cfg.objective;
  obj_cfg.adaptive_kl = cfg.adaptive_kl;

  const ToyPolicy ref = ToyPolicy::cold_start(cfg.max_len);
  ToyPolicy policy = ref;
  TrainMetrics metrics;
  metrics.reserve(cfg.iterations);

  for (std::size_t it = 0; it < cfg.iterations; ++it) {
    const ToyPolicy old_policy = policy;
    const std::uint64_t iter_seed = mix(cfg.seed, it);
    std::vector<SampledGroup> groups;
    groups.reserve(cfg.tasks_per_iteration);
    for (std::size_t k = 0; k < cfg.tasks_per_iteration; ++k) {
      const auto task = make_task(mix(iter_seed, 2 * k));
      groups.push_back(sample_rollouts(old_policy, ref, task, cfg.group_size,
                                       mix(iter_seed, 2 * k + 1), reward_cfg));
    }

    IterationMetrics m;
    m.iteration = it;
    try {
      for (std::size_t u = 0; u < cfg.updates_per_iteration; ++u) {
        const auto grad = analytic_gradient(policy, groups, obj_cfg);
        kernels::axpy(cfg.learning_rate, grad, policy.logits());
      }
      m.objective = batch_objective(policy, groups, obj_cfg);
    } catch (const std::domain_error&) {
      // kl_k3 rejects the overflowed log-ratio.
      throw DivergenceError(it, std::move(metrics));
    }
    std::size_t n = 0;
    for (const auto& g : groups) {
      for (const auto& r : g.responses) {
        m.mean_reward += r.reward.total;
        m.mean_accuracy += r.reward.r_relaxed_acc;
        m.mean_p_redundancy += r.reward.p_redundancy;
        m.mean_n_info += r.reward.cues.n_info;
        m.mean_beta += obj_cfg.adaptive_kl
                           ? adaptive_beta(obj_cfg.beta, r.reward.cues.n_info)
                           : obj_cfg.beta;
        m.focus_rate += r.reward.format == FormatClass::FocusCoT ? 1.0 : 0.0;
        ++n;
      }
    }
    const double inv = 1.0 / static_cast<double>(n);
    m.mean_reward *= inv;
    m.mean_accuracy *= inv;
    m.mean_p_redundancy *= inv;
    m.mean_n_info *= inv;
    m.mean_beta *= inv;
    m.focus_rate *= inv;

    const bool finite_params =
        std::all_of(policy.logits().begin(), policy.logits().end(),
                    [](double v) { return std::isfinite(v); });
    if (!std::isfinite(m.objective) || !finite_params) {
      throw DivergenceError(it, std::move(metrics));
    }
    metrics.push_back(m);
    if (on_iteration) on_iteration(m);
  }
  return metrics;
}

double window_mean(const TrainMetrics& m, std::size_t begin, std::size_t end,
                   double IterationMetrics::*field) {
  end = std::min(end, m.size());
  if (begin >= end) return 0.0;
  double s = 0.0;
  for (std::size_t k = begin; k < end; ++k) s += m[k].*field;
  return s / static_cast<double>(end - begin);
}

}  // namespace focusrl::toysim
