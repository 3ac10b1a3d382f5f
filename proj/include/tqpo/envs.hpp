#pragma once

#include "tqpo/core.hpp"
#include "tqpo/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace tqpo {

struct ActionSpace {
  bool discrete = true;
  int n = 2;        ///< discrete: number of actions
  int dim = 1;      ///< continuous: action dimension
  double low = -1;  ///< continuous: per-coordinate bounds
  double high = 1;
};

struct EnvSpec {
  std::string name;
  int state_dim = 1;
  ActionSpace action_space;
  int horizon = 1;
};

struct StepResult {
  Vector next_state;
  double reward = 0.0;
  double cost = 0.0;
  bool done = false;
};

/// Single-threaded, seeded environment state machine.
class Environment {
 public:
  virtual ~Environment() = default;

  virtual const EnvSpec& spec() const = 0;
  virtual Vector reset(std::uint64_t seed) = 0;
  virtual StepResult step(const Vector& action) = 0;
  virtual std::unique_ptr<Environment> clone() const = 0;
};

/// Tabular MDP with state-action rewards and costs.
class ChainCostMDP final : public Environment {
 public:
  struct Tables {
    int n_states = 5;
    int n_actions = 2;
    /// transition[s * n_actions + a](s') = P(s' | s, a)
    std::vector<Vector> transition;
    Matrix reward;  ///< n_states x n_actions
    Matrix cost;    ///< n_states x n_actions
    int initial_state = 0;
  };

  ChainCostMDP(Tables tables, int horizon, bool time_feature = false,
               std::string name = "chain");

  /// Five-state chain: action 1 advances with probability 0.8 and pays reward
  /// and cost, action 0 stays put for free.
  static ChainCostMDP default_chain(int horizon = 6);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<ChainCostMDP>(*this);
  }

  const Tables& tables() const { return tables_; }
  int horizon() const { return spec_.horizon; }
  bool time_feature() const { return time_feature_; }
  int current_state() const { return state_; }
  int current_step() const { return t_; }

  const Vector& transition_row(int s, int a) const {
    return tables_.transition[static_cast<std::size_t>(s * tables_.n_actions + a)];
  }

  /// Observation for tabular state s at step t: one-hot, optionally followed
  /// by t / horizon.
  Vector observe(int s, int t) const;

  /// Largest number of successor states with nonzero probability.
  int max_branching() const;

 private:
  Tables tables_;
  EnvSpec spec_;
  bool time_feature_;
  CounterRng rng_;
  int state_ = 0;
  int t_ = 0;
};

struct Hazard {
  Eigen::Vector2d center{0.0, 0.0};
  double radius = 0.3;
  Eigen::Vector2d velocity{0.0, 0.0};
};

enum class GoalMode { fixed_swap, random };
enum class HazardMode { fixed, moving };

/// Point robot in a square arena [-w, w]^2 with circular hazards.
///
/// Observation: robot position, goal minus robot, then hazard center minus
/// robot for every hazard, all divided by the arena half width.
class HazardNav2D final : public Environment {
 public:
  struct Layout {
    double arena_half_width = 2.0;
    Eigen::Vector2d robot_start{0.0, 0.0};
    /// fixed_swap alternates between the two sites; random ignores them.
    Eigen::Vector2d goal_site_a{1.5, 1.5};
    Eigen::Vector2d goal_site_b{-1.5, -1.5};
    double goal_radius = 0.3;
    std::vector<Hazard> hazards;
    GoalMode goal_mode = GoalMode::fixed_swap;
    HazardMode hazard_mode = HazardMode::fixed;
    double step_size = 0.1;
  };

  HazardNav2D(Layout layout, int horizon, std::string name = "hazard");

  /// "simple", "dynamic" or "gremlin".
  static HazardNav2D preset(const std::string& name, int horizon = 200);

  const EnvSpec& spec() const override { return spec_; }
  Vector reset(std::uint64_t seed) override;
  StepResult step(const Vector& action) override;
  std::unique_ptr<Environment> clone() const override {
    return std::make_unique<HazardNav2D>(*this);
  }

  const Layout& layout() const { return layout_; }
  const Eigen::Vector2d& robot() const { return robot_; }
  const Eigen::Vector2d& goal() const { return goal_; }
  const std::vector<Hazard>& hazards() const { return hazards_; }

  /// Test hook: place robot, goal and hazards directly.
  void set_configuration(const Eigen::Vector2d& robot, const Eigen::Vector2d& goal,
                         std::vector<Hazard> hazards);

  bool in_hazard(const Eigen::Vector2d& p) const;

 private:
  Vector observe() const;
  Eigen::Vector2d random_point();

  Layout layout_;
  EnvSpec spec_;
  CounterRng rng_;
  Eigen::Vector2d robot_;
  Eigen::Vector2d goal_;
  std::vector<Hazard> hazards_;
  bool at_site_a_ = true;
  int t_ = 0;
};

struct EnumeratedTrajectory {
  std::vector<int> states;   ///< s_0 .. s_{H-1}
  std::vector<int> actions;  ///< a_0 .. a_{H-1}
  double probability = 0.0;
  double cumulative_cost = 0.0;
  double cumulative_return = 0.0;
};

inline constexpr std::size_t kDefaultEnumerationCap = 1'000'000;

/// Exact joint distribution over all horizon-length trajectories of a chain
/// MDP under a stationary tabular policy (rows: states, columns: action
/// probabilities). Zero-probability branches are pruned.
std::vector<EnumeratedTrajectory> enumerate_trajectories(
    const ChainCostMDP& env, const Matrix& policy_table, double gamma, double gamma_cost,
    std::size_t cap = kDefaultEnumerationCap);

}  // namespace tqpo
