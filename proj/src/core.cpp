#include "tqpo/core.hpp"

#include <cmath>
#include <sstream>

namespace tqpo {

namespace {

template <typename Field>
double tail_sum(const Episode& episode, double gamma, std::size_t from_index, Field field) {
  if (from_index >= episode.length()) {
    throw std::out_of_range("from_index " + std::to_string(from_index) +
                            " out of range for episode of length " +
                            std::to_string(episode.length()));
  }
  // Backward accumulation so the result equals the Bellman recursion exactly.
  double acc = 0.0;
  for (std::size_t t = episode.length(); t-- > from_index;) {
    acc = field(episode.transitions[t]) + gamma * acc;
  }
  return acc;
}

template <typename Field>
std::vector<double> all_tails(const Episode& episode, double gamma, Field field) {
  std::vector<double> out(episode.length());
  double acc = 0.0;
  for (std::size_t t = episode.length(); t-- > 0;) {
    acc = field(episode.transitions[t]) + gamma * acc;
    out[t] = acc;
  }
  return out;
}

constexpr auto cost_of = [](const Transition& tr) { return tr.cost; };
constexpr auto reward_of = [](const Transition& tr) { return tr.reward; };

}  // namespace

double discounted_cost(const Episode& episode, double gamma, std::size_t from_index) {
  return tail_sum(episode, gamma, from_index, cost_of);
}

double discounted_return(const Episode& episode, double gamma, std::size_t from_index) {
  return tail_sum(episode, gamma, from_index, reward_of);
}

std::vector<double> cost_to_go(const Episode& episode, double gamma) {
  return all_tails(episode, gamma, cost_of);
}

std::vector<double> return_to_go(const Episode& episode, double gamma) {
  return all_tails(episode, gamma, reward_of);
}

std::size_t Batch::transition_count() const {
  std::size_t n = 0;
  for (const auto& e : episodes) n += e.length();
  return n;
}

Batch make_batch(std::vector<Episode> episodes, double gamma, double gamma_cost) {
  Batch batch;
  batch.cumulative_costs.reserve(episodes.size());
  batch.cumulative_returns.reserve(episodes.size());
  for (const auto& e : episodes) {
    batch.cumulative_costs.push_back(discounted_cost(e, gamma_cost, 0));
    batch.cumulative_returns.push_back(discounted_return(e, gamma, 0));
  }
  batch.episodes = std::move(episodes);
  return batch;
}

double ScheduleSpec::rate(std::uint64_t k) const {
  const double r = base / std::pow(1.0 + static_cast<double>(k), decay_exponent);
  return std::max(r, floor);
}

std::string to_string(Variant v) {
  switch (v) {
    case Variant::TQPO: return "TQPO";
    case Variant::TQPO_NO_TILT: return "TQPO_NO_TILT";
    case Variant::TQPO_FIXED_TILT: return "TQPO_FIXED_TILT";
    case Variant::PPO_LAG: return "PPO_LAG";
    case Variant::PPO: return "PPO";
  }
  return "?";
}

Variant variant_from_string(const std::string& name) {
  for (auto v : {Variant::TQPO, Variant::TQPO_NO_TILT, Variant::TQPO_FIXED_TILT,
                 Variant::PPO_LAG, Variant::PPO}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown algorithm variant '" + name + "'");
}

std::string to_string(PenaltyForm f) {
  return f == PenaltyForm::violation ? "violation" : "literal";
}

PenaltyForm penalty_form_from_string(const std::string& name) {
  if (name == "violation") return PenaltyForm::violation;
  if (name == "literal") return PenaltyForm::literal;
  throw ConfigError("unknown penalty form '" + name + "'");
}

std::string to_string(IndicatorScope s) {
  return s == IndicatorScope::episode ? "episode" : "per_state";
}

IndicatorScope indicator_scope_from_string(const std::string& name) {
  if (name == "episode") return IndicatorScope::episode;
  if (name == "per_state") return IndicatorScope::per_state;
  throw ConfigError("unknown indicator scope '" + name + "'");
}

std::string ValidationResult::describe() const {
  std::ostringstream os;
  for (const auto& e : errors) os << "error: " << e << '\n';
  for (const auto& w : warnings) os << "warning: " << w << '\n';
  return os.str();
}

ValidationResult validate_schedules(const RunConfig& config) {
  ValidationResult result;
  const std::pair<const char*, const ScheduleSpec*> schedules[] = {
      {"alpha", &config.schedule_alpha},
      {"beta", &config.schedule_beta},
      {"eta", &config.schedule_eta}};

  for (const auto& [name, s] : schedules) {
    const std::string n(name);
    if (!(s->base > 0.0)) result.errors.push_back("schedule." + n + ".base must be > 0");
    if (!(s->decay_exponent > 0.5)) {
      result.errors.push_back("schedule." + n +
                              ".decay_exponent must exceed 0.5 (square-summable)");
    }
    if (!(s->decay_exponent <= 1.0)) {
      result.errors.push_back("schedule." + n + ".decay_exponent must be <= 1 (nonsummable)");
    }
    if (s->floor < 0.0) result.errors.push_back("schedule." + n + ".floor must be >= 0");
    if (s->floor > 0.0) {
      result.warnings.push_back("schedule." + n +
                                ".floor > 0 breaks square-summability of the rates");
    }
  }
  if (config.schedule_alpha.base > 1.0) {
    result.errors.push_back("schedule.alpha.base must be <= 1 (tracker rate lies in (0,1])");
  }

  const double ea = config.schedule_alpha.decay_exponent;
  const double eb = config.schedule_beta.decay_exponent;
  const double ee = config.schedule_eta.decay_exponent;
  if (!(eb > ea)) {
    result.errors.push_back("beta_k = o(alpha_k) requires decay_exponent(beta) > decay_exponent(alpha)");
  }
  if (!(ee > eb)) {
    result.errors.push_back("eta_k = o(beta_k) requires decay_exponent(eta) > decay_exponent(beta)");
  }
  return result;
}

ValidationResult validate_config(const RunConfig& c) {
  ValidationResult r = validate_schedules(c);
  auto require = [&r](bool ok, const char* msg) {
    if (!ok) r.errors.emplace_back(msg);
  };
  require(c.epsilon > 0.0 && c.epsilon < 1.0, "epsilon must lie in (0,1)");
  require(c.threshold_d >= 0.0, "threshold_d must be >= 0");
  require(c.gamma > 0.0 && c.gamma < 1.0, "gamma must lie in (0,1)");
  require(!c.gamma_cost || (*c.gamma_cost > 0.0 && *c.gamma_cost <= 1.0),
          "gamma_cost must lie in (0,1]");
  require(c.clip_ratio > 0.0, "clip_ratio must be > 0");
  require(c.delta_smooth > 0.0 && c.delta_smooth < 1.0, "delta_smooth must lie in (0,1)");
  require(c.horizon >= 1, "horizon must be >= 1");
  require(c.batch_episodes >= 1, "batch_episodes must be >= 1");
  require(c.epochs >= 1, "epochs must be >= 1");
  require(c.minibatch_passes >= 1, "minibatch_passes must be >= 1");
  require(c.bootstrap_replicates >= 1, "bootstrap_replicates must be >= 1");
  require(c.value_iterations >= 0, "value.iterations must be >= 0");
  require(c.value_learning_rate > 0.0, "value.learning_rate must be > 0");
  require(c.checkpoint_every >= 0, "checkpoint_every must be >= 0");
  require(c.max_numeric_retries >= 0, "max_numeric_retries must be >= 0");
  if (c.fixed_tilt_rates) {
    const auto [up, down] = *c.fixed_tilt_rates;
    require(up > 0.0 && up <= 1.0 && down > 0.0 && down <= 1.0,
            "fixed tilt rates must lie in (0,1]");
  }
  for (int w : c.policy_hidden) require(w >= 1, "policy.hidden widths must be >= 1");
  for (int w : c.value_hidden) require(w >= 1, "value.hidden widths must be >= 1");
  require(c.env.preset.empty() != c.env.file.empty(),
          "exactly one of env.preset or env.file must be set");
  return r;
}

void require_valid(const RunConfig& config) {
  const auto result = validate_config(config);
  if (!result.ok()) throw ConfigError(result.describe());
}

}  // namespace tqpo
