#pragma once

#include "tqpo/constraint.hpp"
#include "tqpo/core.hpp"
#include "tqpo/envs.hpp"
#include "tqpo/policy.hpp"
#include "tqpo/quantile.hpp"
#include "tqpo/rng.hpp"

#include <functional>
#include <vector>

namespace tqpo {

struct TrainerState {
  PolicyParams policy;
  ValueParams value;
  QuantileTracker tracker;
  bool tracker_initialized = false;
  TiltedMultiplier multiplier;
  int epoch = 0;
  CounterRng rng;        ///< rollouts
  CounterRng stats_rng;  ///< bootstrap resampling

  friend bool operator==(const TrainerState& a, const TrainerState& b) {
    return a.policy.arch == b.policy.arch && a.policy.head == b.policy.head &&
           a.policy.theta == b.policy.theta && a.value.arch == b.value.arch &&
           a.value.phi == b.value.phi && a.tracker == b.tracker &&
           a.tracker_initialized == b.tracker_initialized && a.multiplier == b.multiplier &&
           a.epoch == b.epoch && a.rng == b.rng && a.stats_rng == b.stats_rng;
  }
};

TiltMode tilt_mode_for(Variant v);

/// Fresh state: orthogonal initialization from split(0) / split(1) of the run
/// seed, rollouts on split(2), bootstrap on split(3); lambda = 0.
TrainerState init_trainer(const RunConfig& config, const EnvSpec& env);

/// n_episodes full rollouts under the current policy. Each episode's env seed
/// is the next draw of state.rng.
Batch collect_batch(TrainerState& state, Environment& env, int n_episodes, double gamma,
                    double gamma_cost);

struct AdvantageOptions {
  double gamma = 0.99;
  double gamma_cost = 0.99;
  PenaltyForm penalty_form = PenaltyForm::violation;
  IndicatorScope indicator_scope = IndicatorScope::episode;
  bool normalize = true;
};

/// Per-transition advantages in batch order plus the per-episode indicator
/// I(C_i <= q_k).
struct AdvantageRecord {
  Vector advantages;
  std::vector<int> episode_indicator;
};

/// A = r + gamma V(s') - V(s) - lambda * penalty, with V(s') = 0 on the last
/// step. penalty is I(C > q_k) (violation form) or I(C <= q_k) (literal form);
/// C is the episode cost or, per_state, the tail cost from the step.
/// Normalization (when on) is applied after the penalty.
AdvantageRecord compute_advantages(const Batch& batch, const ValueParams& value, double lambda,
                                   double q_k, const AdvantageOptions& options);

/// Expectation-constrained variant: A = TD - lambda * (discounted cost-to-go).
AdvantageRecord compute_lagrangian_advantages(const Batch& batch, const ValueParams& value,
                                              double lambda, const AdvantageOptions& options);

/// Gradient of the clipped surrogate mean_j min(r_j A_j, clip(r_j) A_j) with
/// respect to theta, where r_j = exp(log pi(a_j|s_j) - old_log_probs(j)).
GradientVector clipped_surrogate_grad(const PolicyParams& policy, const BatchView& view,
                                      const Vector& advantages, double clip_ratio,
                                      double* surrogate = nullptr);

/// n_passes full-batch ascent steps of size beta_k on the clipped surrogate
/// (equivalently descent on L_theta). Throws NumericError on a non-finite
/// loss; the input params are left untouched.
PolicyParams ppo_update(const PolicyParams& policy, const BatchView& view,
                        const Vector& advantages, double clip_ratio, double beta_k, int n_passes);

/// Fits V_phi to return-to-go targets with `iterations` Adam steps.
ValueParams value_update(const ValueParams& value, const BatchView& view, double learning_rate,
                         int iterations);

struct EpochResult {
  TrainerState state;
  EpochMetrics metrics;
};

/// One iteration: rollouts, value fit, quantile tracking (alpha_k), F_q(d)
/// bootstrap, advantages with the pre-update q_k, clipped policy step
/// (beta_k), then the multiplier step with the same q_k (eta_k).
EpochResult train_epoch(TrainerState state, Environment& env, const RunConfig& config);

struct EvalSummary {
  double avg_return = 0.0;
  double avg_cost = 0.0;
  double cost_quantile = 0.0;
  double safety_probability = 0.0;
};

/// Rollouts of a fixed policy on a generator independent of training.
EvalSummary evaluate_policy(const PolicyParams& policy, Environment& env, int episodes,
                            std::uint64_t seed, const RunConfig& config);

}  // namespace tqpo
