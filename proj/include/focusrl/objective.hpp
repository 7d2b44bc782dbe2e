#pragma once

// Group-relative advantages, the adaptive KL penalty and the clipped
// surrogate objective, plus the supervised cold-start loss.

#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "focusrl/focus_trace.hpp"

namespace focusrl {

/// Raised for groups with fewer than two responses.
class DegenerateGroup : public std::invalid_argument {
 public:
  DegenerateGroup() : std::invalid_argument("degenerate group") {}
};

struct Rollout {
  double reward = 0.0;
  // Per-token log-probabilities of the sampled response under the current,
  // sampling (old) and reference policies. All three are aligned.
  std::vector<double> logp_theta;
  std::vector<double> logp_old;
  std::vector<double> logp_ref;
  CueCounts cues;
};

struct RolloutGroup {
  std::string question_id;
  std::vector<Rollout> responses;
};

struct ObjectiveConfig {
  double beta = 1e-2;
  double epsilon = 0.2;
  double std_floor = 1e-8;
  bool adaptive_kl = true;  ///< false: every response uses beta unchanged

  void validate() const;
};

/// A'_i = (R_i - mean) / max(std, std_floor) with the population std.
/// A group whose rewards are all equal yields exact zeros.
std::vector<double> group_advantages(std::span<const double> rewards,
                                     double std_floor = 1e-8);

/// beta / (1 + ln(1 + n_info))
double adaptive_beta(double beta, double n_info);

/// exp(x) - x - 1 for x = log(pi_ref / pi_theta); throws on non-finite x.
double kl_k3(double logratio);

/// min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)
double clipped_term(double ratio, double advantage, double epsilon);

/// Per-response quantities entering the objective.
struct ObjectiveTerms {
  std::vector<double> advantages;
  std::vector<double> ratios;     ///< pi_theta / pi_old at sequence level
  std::vector<double> logratios;  ///< log(pi_ref / pi_theta), sequence level
  std::vector<double> betas;      ///< effective KL coefficient per response
  std::vector<double> k3;
  double surrogate = 0.0;   ///< mean clipped term
  double kl_penalty = 0.0;  ///< mean beta' * k3
  double objective = 0.0;   ///< surrogate - kl_penalty
};

ObjectiveTerms objective_terms(const RolloutGroup& group,
                               const ObjectiveConfig& cfg);
double focus_grpo_objective(const RolloutGroup& group,
                            const ObjectiveConfig& cfg);

/// -sum(token log-probs) of one target sequence. Throws on empty/non-finite.
double cold_start_loss(std::span<const double> token_logprobs);
/// Mean of cold_start_loss over samples. Throws on an empty batch.
double cold_start_batch_loss(std::span<const std::vector<double>> batch);

}  // namespace focusrl
