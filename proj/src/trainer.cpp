#include "tqpo/trainer.hpp"

#include <cmath>
#include <numeric>

namespace tqpo {

TiltMode tilt_mode_for(Variant v) {
  switch (v) {
    case Variant::TQPO: return TiltMode::tilted;
    case Variant::TQPO_FIXED_TILT: return TiltMode::fixed;
    default: return TiltMode::plain;
  }
}

TrainerState init_trainer(const RunConfig& config, const EnvSpec& env) {
  const CounterRng root(config.seed);
  CounterRng policy_rng = root.split(0);
  CounterRng value_rng = root.split(1);

  MlpArchitecture parch;
  parch.input_dim = env.state_dim;
  parch.hidden = config.policy_hidden;
  parch.bias = config.policy_bias;
  const bool discrete = env.action_space.discrete;
  parch.output_dim = discrete ? env.action_space.n : env.action_space.dim;

  MlpArchitecture varch;
  varch.input_dim = env.state_dim;
  varch.hidden = config.value_hidden;
  varch.output_dim = 1;

  TrainerState s;
  s.policy = make_policy<double>(parch, discrete ? HeadKind::categorical : HeadKind::gaussian,
                                 policy_rng, config.policy_init_log_std);
  s.value = make_value<double>(varch, value_rng);
  s.tracker.level = config.level();
  s.multiplier.lambda = 0.0;
  s.multiplier.delta = config.delta_smooth;
  s.multiplier.mode = tilt_mode_for(config.algorithm_variant);
  const auto [up, down] = config.fixed_rates();
  s.multiplier.fixed_eta_plus = up;
  s.multiplier.fixed_eta_minus = down;
  s.rng = root.split(2);
  s.stats_rng = root.split(3);
  return s;
}

Batch collect_batch(TrainerState& state, Environment& env, int n_episodes, double gamma,
                    double gamma_cost) {
  if (n_episodes < 1) throw std::invalid_argument("collect_batch: n_episodes must be >= 1");
  std::vector<Episode> episodes;
  episodes.reserve(static_cast<std::size_t>(n_episodes));
  const int horizon = env.spec().horizon;
  for (int i = 0; i < n_episodes; ++i) {
    Episode e;
    e.seed = state.rng.next_u64();
    e.transitions.reserve(static_cast<std::size_t>(horizon));
    Vector s = env.reset(e.seed);
    for (int t = 0; t < horizon; ++t) {
      auto [action, log_prob] = sample_action(state.policy, s, state.rng);
      StepResult r = env.step(action);
      Transition tr;
      tr.state = std::move(s);
      tr.action = std::move(action);
      tr.reward = r.reward;
      tr.cost = r.cost;
      tr.log_prob = log_prob;
      tr.done = r.done;
      e.transitions.push_back(std::move(tr));
      s = std::move(r.next_state);
      if (e.transitions.back().done) break;
    }
    e.transitions.back().done = true;
    episodes.push_back(std::move(e));
  }
  return make_batch(std::move(episodes), gamma, gamma_cost);
}

namespace {

Vector td_residuals(const BatchView& v, const ValueParams& value, double gamma) {
  const Vector values = batch_values(value, v.states);
  const Vector next = batch_values(value, v.next_states);
  Vector td(values.size());
  for (Eigen::Index j = 0; j < td.size(); ++j) {
    const double bootstrap = v.terminal[static_cast<std::size_t>(j)] ? 0.0 : gamma * next(j);
    td(j) = v.rewards(j) + bootstrap - values(j);
  }
  return td;
}

void normalize_in_place(Vector& a) {
  const double mean = a.mean();
  const double var = (a.array() - mean).square().mean();
  a = ((a.array() - mean) / (std::sqrt(var) + 1e-8)).matrix();
}

}  // namespace

AdvantageRecord compute_advantages(const Batch& batch, const ValueParams& value, double lambda,
                                   double q_k, const AdvantageOptions& options) {
  if (batch.size() == 0) throw ShapeError("compute_advantages: empty batch");
  const BatchView v = flatten(batch, options.gamma);
  AdvantageRecord rec;
  rec.advantages = td_residuals(v, value, options.gamma);

  rec.episode_indicator.resize(batch.size());
  for (std::size_t i = 0; i < batch.size(); ++i) {
    rec.episode_indicator[i] = batch.cumulative_costs[i] <= q_k ? 1 : 0;
  }

  if (lambda != 0.0) {
    std::vector<std::vector<double>> tails;
    if (options.indicator_scope == IndicatorScope::per_state) {
      for (const auto& e : batch.episodes) tails.push_back(cost_to_go(e, options.gamma_cost));
    }
    for (Eigen::Index j = 0; j < rec.advantages.size(); ++j) {
      const auto i = static_cast<std::size_t>(v.episode_of[static_cast<std::size_t>(j)]);
      bool safe = rec.episode_indicator[i] == 1;
      if (options.indicator_scope == IndicatorScope::per_state) {
        safe = tails[i][static_cast<std::size_t>(v.step_of[static_cast<std::size_t>(j)])] <= q_k;
      }
      const bool charged = options.penalty_form == PenaltyForm::violation ? !safe : safe;
      if (charged) rec.advantages(j) -= lambda;
    }
  }
  if (options.normalize) normalize_in_place(rec.advantages);
  return rec;
}

AdvantageRecord compute_lagrangian_advantages(const Batch& batch, const ValueParams& value,
                                              double lambda, const AdvantageOptions& options) {
  if (batch.size() == 0) throw ShapeError("compute_lagrangian_advantages: empty batch");
  const BatchView v = flatten(batch, options.gamma);
  AdvantageRecord rec;
  rec.advantages = td_residuals(v, value, options.gamma);
  rec.episode_indicator.assign(batch.size(), 0);
  if (lambda != 0.0) {
    Eigen::Index j = 0;
    for (const auto& e : batch.episodes) {
      for (double tail : cost_to_go(e, options.gamma_cost)) rec.advantages(j++) -= lambda * tail;
    }
  }
  if (options.normalize) normalize_in_place(rec.advantages);
  return rec;
}

GradientVector clipped_surrogate_grad(const PolicyParams& policy, const BatchView& view,
                                      const Vector& advantages, double clip_ratio,
                                      double* surrogate) {
  const Eigen::Index M = view.states.cols();
  if (advantages.size() != M) throw ShapeError("advantages not aligned with batch transitions");
  const Vector log_probs = batch_log_probs(policy, view.states, view.actions);
  const Vector ratio = (log_probs - view.old_log_probs).array().exp().matrix();

  Vector coeff(M);
  double total = 0.0;
  for (Eigen::Index j = 0; j < M; ++j) {
    const double r = ratio(j);
    const double a = advantages(j);
    const double clipped = std::clamp(r, 1.0 - clip_ratio, 1.0 + clip_ratio);
    const double unclipped_term = r * a;
    const double clipped_term = clipped * a;
    total += std::min(unclipped_term, clipped_term);
    // The min selects the unclipped branch (nonzero gradient) unless the ratio
    // has left the trust interval in the direction favoured by the advantage.
    const bool flat = (a > 0.0 && r > 1.0 + clip_ratio) || (a < 0.0 && r < 1.0 - clip_ratio);
    coeff(j) = flat ? 0.0 : r * a / static_cast<double>(M);
  }
  if (surrogate) *surrogate = total / static_cast<double>(M);
  if (!std::isfinite(total)) throw NumericError("non-finite clipped surrogate");
  return weighted_score(policy, view.states, view.actions, coeff);
}

PolicyParams ppo_update(const PolicyParams& policy, const BatchView& view,
                        const Vector& advantages, double clip_ratio, double beta_k, int n_passes) {
  PolicyParams updated = policy;
  for (int pass = 0; pass < n_passes; ++pass) {
    const GradientVector g = clipped_surrogate_grad(updated, view, advantages, clip_ratio);
    updated.theta += beta_k * g;
    if (!updated.theta.allFinite()) throw NumericError("policy parameters became non-finite");
  }
  return updated;
}

ValueParams value_update(const ValueParams& value, const BatchView& view, double learning_rate,
                         int iterations) {
  constexpr double b1 = 0.9;
  constexpr double b2 = 0.999;
  constexpr double eps = 1e-8;
  ValueParams v = value;
  Vector m = Vector::Zero(v.phi.size());
  Vector s = Vector::Zero(v.phi.size());
  double b1t = 1.0;
  double b2t = 1.0;
  for (int it = 0; it < iterations; ++it) {
    const LossGrad lg = value_loss_and_grad(v, view.states, view.return_to_go);
    b1t *= b1;
    b2t *= b2;
    m = b1 * m + (1.0 - b1) * lg.grad;
    s = b2 * s + (1.0 - b2) * lg.grad.cwiseAbs2();
    const Vector m_hat = m / (1.0 - b1t);
    const Vector s_hat = s / (1.0 - b2t);
    v.phi -= learning_rate * (m_hat.array() / (s_hat.array().sqrt() + eps)).matrix();
  }
  return v;
}

EpochResult train_epoch(TrainerState state, Environment& env, const RunConfig& config) {
  const auto k = static_cast<std::uint64_t>(state.epoch);
  const double gamma = config.gamma;
  const double gamma_cost = config.cost_gamma();
  const double level = config.level();
  const double d = config.threshold_d;

  Batch batch = collect_batch(state, env, config.batch_episodes, gamma, gamma_cost);
  const BatchView view = flatten(batch, gamma);

  state.value = value_update(state.value, view, config.value_learning_rate,
                             config.value_iterations);

  const std::span<const double> costs(batch.cumulative_costs);
  const double q_hat = empirical_quantile<double>(costs, level);
  if (!state.tracker_initialized) {
    state.tracker.q_current = q_hat;
    state.tracker_initialized = true;
  }
  const double q_k = state.tracker.q_current;
  state.tracker = tracker_update(state.tracker, q_hat, config.schedule_alpha.rate(k));

  const auto fq = bootstrap_Fq(costs, level, d, config.bootstrap_replicates, state.stats_rng);

  AdvantageOptions opts;
  opts.gamma = gamma;
  opts.gamma_cost = gamma_cost;
  opts.penalty_form = config.penalty_form;
  opts.indicator_scope = config.indicator_scope;
  opts.normalize = config.normalize_advantages;

  const double lambda = state.multiplier.lambda;
  const double avg_cost =
      std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(costs.size());
  AdvantageRecord adv;
  switch (config.algorithm_variant) {
    case Variant::PPO_LAG:
      adv = compute_lagrangian_advantages(batch, state.value, lambda, opts);
      break;
    case Variant::PPO:
      adv = compute_advantages(batch, state.value, 0.0, q_k, opts);
      break;
    default:
      adv = compute_advantages(batch, state.value, lambda, q_k, opts);
      break;
  }

  double beta = config.schedule_beta.rate(k);
  for (int attempt = 0;; ++attempt) {
    try {
      state.policy = ppo_update(state.policy, view, adv.advantages, config.clip_ratio, beta,
                                config.minibatch_passes);
      break;
    } catch (const NumericError&) {
      if (attempt >= config.max_numeric_retries) throw;
      beta *= 0.5;
    }
  }

  const double eta_k = config.schedule_eta.rate(k);
  switch (config.algorithm_variant) {
    case Variant::PPO_LAG:
      state.multiplier = expectation_multiplier_update(state.multiplier, avg_cost, d, eta_k);
      break;
    case Variant::PPO:
      state.multiplier.last_eta = 0.0;
      break;
    default:
      state.multiplier = multiplier_update(state.multiplier, q_k, d, eta_k, fq.F_q_at_d);
      break;
  }

  EpochMetrics m;
  m.epoch = state.epoch;
  m.avg_return = std::accumulate(batch.cumulative_returns.begin(), batch.cumulative_returns.end(),
                                 0.0) /
                 static_cast<double>(batch.size());
  m.avg_cost = avg_cost;
  m.cost_quantile = q_hat;
  m.safety_probability = empirical_cdf<double>(costs, d);
  m.lambda = state.multiplier.lambda;
  m.q_tracker = state.tracker.q_current;
  m.eta_used = state.multiplier.last_eta;
  m.F_q_at_d = fq.F_q_at_d;

  ++state.epoch;
  return {std::move(state), m};
}

EvalSummary evaluate_policy(const PolicyParams& policy, Environment& env, int episodes,
                            std::uint64_t seed, const RunConfig& config) {
  TrainerState probe;
  probe.policy = policy;
  probe.rng = CounterRng(seed).split(0xE7A1);
  const Batch batch = collect_batch(probe, env, episodes, config.gamma, config.cost_gamma());
  const std::span<const double> costs(batch.cumulative_costs);
  EvalSummary s;
  s.avg_return = std::accumulate(batch.cumulative_returns.begin(),
                                 batch.cumulative_returns.end(), 0.0) /
                 static_cast<double>(episodes);
  s.avg_cost = std::accumulate(costs.begin(), costs.end(), 0.0) / static_cast<double>(episodes);
  s.cost_quantile = empirical_quantile<double>(costs, config.level());
  s.safety_probability = empirical_cdf<double>(costs, config.threshold_d);
  return s;
}

}  // namespace tqpo
