#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tqpo {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// Error taxonomy shared by all modules.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct SizeError : std::length_error {
  using std::length_error::length_error;
};

/// One environment step. Discrete actions are stored as a 1-vector holding
/// the action index.
struct Transition {
  Vector state;
  Vector action;
  double reward = 0.0;
  double cost = 0.0;
  double log_prob = 0.0;
  bool done = false;

  int discrete_action() const { return static_cast<int>(action(0)); }
};

struct Episode {
  std::vector<Transition> transitions;
  std::uint64_t seed = 0;

  std::size_t length() const { return transitions.size(); }
};

/// Sum of gamma^(t - from) * cost_t over t in [from, length).
double discounted_cost(const Episode& episode, double gamma, std::size_t from_index);
/// Same as discounted_cost over rewards.
double discounted_return(const Episode& episode, double gamma, std::size_t from_index);

/// Tail sums for every index at once: out[t] = discounted_cost(episode, gamma, t).
std::vector<double> cost_to_go(const Episode& episode, double gamma);
std::vector<double> return_to_go(const Episode& episode, double gamma);

struct Batch {
  std::vector<Episode> episodes;
  std::vector<double> cumulative_costs;
  std::vector<double> cumulative_returns;

  std::size_t size() const { return episodes.size(); }
  std::size_t transition_count() const;
};

/// Builds a batch with C_i = discounted_cost(e_i, gamma_cost, 0) and
/// R_i = discounted_return(e_i, gamma, 0).
Batch make_batch(std::vector<Episode> episodes, double gamma, double gamma_cost);

/// Power-law rate: base / (1 + k)^decay_exponent, clipped below at floor.
struct ScheduleSpec {
  double base = 0.1;
  double decay_exponent = 0.6;
  double floor = 0.0;

  double rate(std::uint64_t k) const;
};

enum class Variant { TQPO, TQPO_NO_TILT, TQPO_FIXED_TILT, PPO_LAG, PPO };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& name);

/// Which trajectories the quantile penalty charges in the advantage.
enum class PenaltyForm {
  violation,  ///< A -= lambda * I(C > q_k)
  literal,    ///< A -= lambda * I(C <= q_k), the printed form
};

std::string to_string(PenaltyForm f);
PenaltyForm penalty_form_from_string(const std::string& name);

/// How C enters the indicator: one per episode, or the tail cost from each step.
enum class IndicatorScope { episode, per_state };

std::string to_string(IndicatorScope s);
IndicatorScope indicator_scope_from_string(const std::string& name);

struct EnvSource {
  std::string preset;  ///< chain_default, simple, dynamic, gremlin
  std::string file;    ///< path to an environment definition file
};

struct RunConfig {
  double epsilon = 0.1;
  double threshold_d = 15.0;
  double gamma = 0.99;
  std::optional<double> gamma_cost;  ///< defaults to gamma; may be 1
  double clip_ratio = 0.2;
  double delta_smooth = 0.1;
  int horizon = 200;
  int batch_episodes = 32;
  int epochs = 100;
  ScheduleSpec schedule_alpha{0.5, 0.6, 0.0};
  ScheduleSpec schedule_beta{0.5, 0.8, 0.0};
  ScheduleSpec schedule_eta{0.1, 1.0, 0.0};
  std::uint64_t seed = 1;
  Variant algorithm_variant = Variant::TQPO;
  std::optional<std::pair<double, double>> fixed_tilt_rates;

  int minibatch_passes = 4;
  bool normalize_advantages = true;
  int bootstrap_replicates = 200;
  PenaltyForm penalty_form = PenaltyForm::violation;
  IndicatorScope indicator_scope = IndicatorScope::episode;
  int checkpoint_every = 0;
  int max_numeric_retries = 3;

  std::vector<int> policy_hidden{32, 32};
  bool policy_bias = true;
  double policy_init_log_std = -0.5;
  std::vector<int> value_hidden{32, 32};
  double value_learning_rate = 1e-2;
  int value_iterations = 20;

  EnvSource env;

  double level() const { return 1.0 - epsilon; }
  double cost_gamma() const { return gamma_cost.value_or(gamma); }
  std::pair<double, double> fixed_rates() const {
    return fixed_tilt_rates.value_or(std::pair{0.2, 0.8});
  }
};

struct ValidationResult {
  std::vector<std::string> errors;
  std::vector<std::string> warnings;

  bool ok() const { return errors.empty(); }
  std::string describe() const;
};

/// Accepts iff every base is positive, every exponent lies in (0.5, 1], and
/// exponent(eta) > exponent(beta) > exponent(alpha). A positive floor is a
/// warning because it breaks square-summability.
ValidationResult validate_schedules(const RunConfig& config);

/// Schedule checks plus the scalar ranges of RunConfig.
ValidationResult validate_config(const RunConfig& config);

/// Throws ConfigError listing every violated clause.
void require_valid(const RunConfig& config);

struct EpochMetrics {
  int epoch = 0;
  double avg_return = 0.0;
  double avg_cost = 0.0;
  double cost_quantile = 0.0;
  double safety_probability = 0.0;
  double lambda = 0.0;
  double q_tracker = 0.0;
  double eta_used = 0.0;
  double F_q_at_d = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

}  // namespace tqpo
