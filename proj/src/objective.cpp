#include "focusrl/objective.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace focusrl {
namespace {

double sum(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

void ObjectiveConfig::validate() const {
  if (!(beta > 0.0) || !std::isfinite(beta)) {
    throw std::invalid_argument("objective config: beta must be > 0");
  }
  if (!(epsilon > 0.0) || !std::isfinite(epsilon)) {
    throw std::invalid_argument("objective config: epsilon must be > 0");
  }
  if (!(std_floor >= 0.0) || !std::isfinite(std_floor)) {
    throw std::invalid_argument("objective config: std_floor must be >= 0");
  }
}

std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor) {
  if (rewards.size() < 2) throw DegenerateGroup();
  const auto n = static_cast<double>(rewards.size());
  std::vector<double> out(rewards.size(), 0.0);
  const auto [lo, hi] = std::minmax_element(rewards.begin(), rewards.end());
  if (*lo == *hi) return out;

  const double mean = sum(rewards) / n;
  double var = 0.0;
  for (double r : rewards) var += (r - mean) * (r - mean);
  const double scale = std::max(std::sqrt(var / n), std_floor);
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    out[i] = (rewards[i] - mean) / scale;
  }
  return out;
}

double adaptive_beta(double beta, double n_info) {
  return beta / (1.0 + std::log1p(n_info));
}

double kl_k3(double logratio) {
  if (!std::isfinite(logratio)) {
    throw std::domain_error("kl_k3: log-ratio is not finite");
  }
  return std::expm1(logratio) - logratio;
}

double clipped_term(double ratio, double advantage, double epsilon) {
  const double clipped = std::clamp(ratio, 1.0 - epsilon, 1.0 + epsilon);
  return std::min(ratio * advantage, clipped * advantage);
}

ObjectiveTerms objective_terms(const RolloutGroup& group,
                               const ObjectiveConfig& cfg) {
  std::vector<double> rewards;
  rewards.reserve(group.responses.size());
  for (const auto& r : group.responses) rewards.push_back(r.reward);

  ObjectiveTerms t;
  t.advantages = group_advantages(rewards, cfg.std_floor);
  const auto g = static_cast<double>(group.responses.size());
  for (std::size_t i = 0; i < group.responses.size(); ++i) {
    const auto& r = group.responses[i];
    if (r.logp_theta.size() != r.logp_old.size() ||
        r.logp_theta.size() != r.logp_ref.size()) {
      throw std::invalid_argument("rollout " + std::to_string(i) +
                                  ": log-prob sequences are not aligned");
    }
    const double lp_theta = sum(r.logp_theta);
    const double ratio = std::exp(lp_theta - sum(r.logp_old));
    const double logratio = sum(r.logp_ref) - lp_theta;
    const double beta =
        cfg.adaptive_kl ? adaptive_beta(cfg.beta, r.cues.n_info) : cfg.beta;
    const double k3 = kl_k3(logratio);
    t.ratios.push_back(ratio);
    t.logratios.push_back(logratio);
    t.betas.push_back(beta);
    t.k3.push_back(k3);
    t.surrogate += clipped_term(ratio, t.advantages[i], cfg.epsilon);
    t.kl_penalty += beta * k3;
  }
  t.surrogate /= g;
  t.kl_penalty /= g;
  t.objective = t.surrogate - t.kl_penalty;
  return t;
}

double focus_grpo_objective(const RolloutGroup& group,
                            const ObjectiveConfig& cfg) {
  return objective_terms(group, cfg).objective;
}

double cold_start_loss(std::span<const double> token_logprobs) {
  if (token_logprobs.empty()) {
    throw std::invalid_argument("cold_start_loss: empty target sequence");
  }
  double loss = 0.0;
  for (double lp : token_logprobs) {
    if (!std::isfinite(lp)) {
      throw std::invalid_argument("cold_start_loss: non-finite log-probability");
    }
    loss -= lp;
  }
  return loss;
}

double cold_start_batch_loss(std::span<const std::vector<double>> batch) {
  if (batch.empty()) throw std::invalid_argument("cold_start_loss: empty batch");
  double total = 0.0;
  for (const auto& seq : batch) total += cold_start_loss(seq);
  return total / static_cast<double>(batch.size());
}

}  // namespace focusrl
