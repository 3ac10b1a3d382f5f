#include "tqpo/envs.hpp"

#include <algorithm>
#include <cmath>
#include <functional>

namespace tqpo {

// ---------------------------------------------------------------------------
// ChainCostMDP

ChainCostMDP::ChainCostMDP(Tables tables, int horizon, bool time_feature, std::string name)
    : tables_(std::move(tables)), time_feature_(time_feature) {
  const int S = tables_.n_states;
  const int A = tables_.n_actions;
  if (S < 1 || A < 2) throw ConfigError("chain MDP needs n_states >= 1 and n_actions >= 2");
  if (horizon < 1) throw ConfigError("chain MDP horizon must be >= 1");
  if (tables_.transition.size() != static_cast<std::size_t>(S * A)) {
    throw ShapeError("transition table must have n_states * n_actions rows");
  }
  for (std::size_t i = 0; i < tables_.transition.size(); ++i) {
    const Vector& row = tables_.transition[i];
    if (row.size() != S) throw ShapeError("transition row has wrong length");
    if ((row.array() < 0.0).any()) throw ConfigError("transition probabilities must be >= 0");
    if (std::abs(row.sum() - 1.0) > 1e-12) {
      throw ConfigError("transition row " + std::to_string(i) + " does not sum to 1");
    }
  }
  if (tables_.reward.rows() != S || tables_.reward.cols() != A ||
      tables_.cost.rows() != S || tables_.cost.cols() != A) {
    throw ShapeError("reward and cost tables must be n_states x n_actions");
  }
  if ((tables_.cost.array() < 0.0).any()) throw ConfigError("costs must be nonnegative");
  if (tables_.initial_state < 0 || tables_.initial_state >= S) {
    throw ConfigError("initial_state out of range");
  }
  spec_.name = std::move(name);
  spec_.state_dim = S + (time_feature_ ? 1 : 0);
  spec_.action_space = ActionSpace{true, A, 1, 0.0, 0.0};
  spec_.horizon = horizon;
}

ChainCostMDP ChainCostMDP::default_chain(int horizon) {
  Tables t;
  t.n_states = 5;
  t.n_actions = 2;
  t.reward = Matrix::Zero(5, 2);
  t.cost = Matrix::Zero(5, 2);
  for (int s = 0; s < 5; ++s) {
    Vector stay = Vector::Zero(5);
    stay(s) = 1.0;
    Vector advance = Vector::Zero(5);
    advance(std::min(s + 1, 4)) += 0.8;
    advance(s) += 0.2;
    t.transition.push_back(stay);
    t.transition.push_back(advance);
    t.reward(s, 1) = 1.0 + 0.5 * s;
    t.cost(s, 1) = (s % 2 == 0) ? 1.0 : 2.0;
  }
  return ChainCostMDP(std::move(t), horizon, false, "chain_default");
}

Vector ChainCostMDP::observe(int s, int t) const {
  Vector obs = Vector::Zero(spec_.state_dim);
  obs(s) = 1.0;
  if (time_feature_) obs(tables_.n_states) = static_cast<double>(t) / spec_.horizon;
  return obs;
}

Vector ChainCostMDP::reset(std::uint64_t seed) {
  rng_ = CounterRng(seed);
  state_ = tables_.initial_state;
  t_ = 0;
  return observe(state_, t_);
}

StepResult ChainCostMDP::step(const Vector& action) {
  if (action.size() != 1) throw ShapeError("chain MDP expects a single action index");
  const double raw = action(0);
  const int a = static_cast<int>(raw);
  if (raw != static_cast<double>(a) || a < 0 || a >= tables_.n_actions) {
    throw std::out_of_range("action index out of range for chain MDP");
  }
  if (t_ >= spec_.horizon) throw std::logic_error("step after episode end");

  StepResult out;
  out.reward = tables_.reward(state_, a);
  out.cost = tables_.cost(state_, a);

  const Vector& row = transition_row(state_, a);
  const double u = rng_.uniform();
  double acc = 0.0;
  int next = -1;
  for (int s = 0; s < row.size(); ++s) {
    if (row(s) <= 0.0) continue;
    acc += row(s);
    next = s;
    if (u < acc) break;
  }
  state_ = next;
  ++t_;
  out.done = t_ >= spec_.horizon;
  out.next_state = observe(state_, t_);
  return out;
}

int ChainCostMDP::max_branching() const {
  int b = 1;
  for (const auto& row : tables_.transition) {
    b = std::max(b, static_cast<int>((row.array() > 0.0).count()));
  }
  return b;
}

std::vector<EnumeratedTrajectory> enumerate_trajectories(const ChainCostMDP& env,
                                                         const Matrix& policy_table,
                                                         double gamma, double gamma_cost,
                                                         std::size_t cap) {
  const auto& tb = env.tables();
  if (policy_table.rows() != tb.n_states || policy_table.cols() != tb.n_actions) {
    throw ShapeError("policy table must be n_states x n_actions");
  }
  const int H = env.horizon();
  const double per_step = static_cast<double>(tb.n_actions) * env.max_branching();
  if (std::pow(per_step, H) > static_cast<double>(cap)) {
    throw SizeError("trajectory count bound " + std::to_string(std::pow(per_step, H)) +
                    " exceeds enumeration cap " + std::to_string(cap));
  }

  std::vector<EnumeratedTrajectory> out;
  EnumeratedTrajectory cur;
  cur.states.reserve(static_cast<std::size_t>(H));
  cur.actions.reserve(static_cast<std::size_t>(H));

  // Depth-first in lexicographic (action, successor) order; costs and returns
  // are accumulated as sum_t gamma^t x_t, matching discounted_cost.
  std::function<void(int, int, double, double, double, double, double)> visit =
      [&](int t, int s, double prob, double cost, double ret, double gc, double gr) {
        if (t == H) {
          cur.probability = prob;
          cur.cumulative_cost = cost;
          cur.cumulative_return = ret;
          out.push_back(cur);
          return;
        }
        for (int a = 0; a < tb.n_actions; ++a) {
          const double pa = policy_table(s, a);
          if (pa <= 0.0) continue;
          const Vector& row = env.transition_row(s, a);
          const double c = cost + gc * tb.cost(s, a);
          const double r = ret + gr * tb.reward(s, a);
          cur.states.push_back(s);
          cur.actions.push_back(a);
          if (t + 1 == H) {
            // The successor of the last step is never observed.
            visit(t + 1, s, prob * pa, c, r, gc * gamma_cost, gr * gamma);
          } else {
            for (int sn = 0; sn < row.size(); ++sn) {
              if (row(sn) <= 0.0) continue;
              visit(t + 1, sn, prob * pa * row(sn), c, r, gc * gamma_cost, gr * gamma);
            }
          }
          cur.states.pop_back();
          cur.actions.pop_back();
        }
      };
  visit(0, tb.initial_state, 1.0, 0.0, 0.0, 1.0, 1.0);
  return out;
}

// ---------------------------------------------------------------------------
// HazardNav2D

HazardNav2D::HazardNav2D(Layout layout, int horizon, std::string name)
    : layout_(std::move(layout)) {
  if (layout_.arena_half_width <= 0.0) throw ConfigError("arena_half_width must be > 0");
  if (layout_.step_size <= 0.0) throw ConfigError("step_size must be > 0");
  if (horizon < 1) throw ConfigError("hazard horizon must be >= 1");
  for (const auto& h : layout_.hazards) {
    if (h.radius <= 0.0) throw ConfigError("hazard radius must be > 0");
  }
  spec_.name = std::move(name);
  spec_.state_dim = 4 + 2 * static_cast<int>(layout_.hazards.size());
  spec_.action_space = ActionSpace{false, 0, 2, -1.0, 1.0};
  spec_.horizon = horizon;
  robot_ = layout_.robot_start;
  goal_ = layout_.goal_site_a;
  hazards_ = layout_.hazards;
}

HazardNav2D HazardNav2D::preset(const std::string& name, int horizon) {
  Layout l;
  l.hazards = {
      Hazard{{0.8, 0.8}, 0.4, {0.0, 0.0}},
      Hazard{{-0.8, 0.8}, 0.4, {0.0, 0.0}},
      Hazard{{0.8, -0.8}, 0.4, {0.0, 0.0}},
      Hazard{{-0.8, -0.8}, 0.4, {0.0, 0.0}},
  };
  if (name == "simple") {
    l.goal_mode = GoalMode::fixed_swap;
    l.hazard_mode = HazardMode::fixed;
  } else if (name == "dynamic") {
    l.goal_mode = GoalMode::random;
    l.hazard_mode = HazardMode::fixed;
  } else if (name == "gremlin") {
    l.goal_mode = GoalMode::random;
    l.hazard_mode = HazardMode::moving;
    l.hazards[0].velocity = {0.03, -0.02};
    l.hazards[1].velocity = {0.02, 0.03};
    l.hazards[2].velocity = {-0.03, 0.02};
    l.hazards[3].velocity = {-0.02, -0.03};
  } else {
    throw ConfigError("unknown hazard preset '" + name + "'");
  }
  return HazardNav2D(std::move(l), horizon, name);
}

Eigen::Vector2d HazardNav2D::random_point() {
  const double w = layout_.arena_half_width - layout_.goal_radius;
  const double x = (2.0 * rng_.uniform() - 1.0) * w;
  const double y = (2.0 * rng_.uniform() - 1.0) * w;
  return {x, y};
}

Vector HazardNav2D::reset(std::uint64_t seed) {
  rng_ = CounterRng(seed);
  t_ = 0;
  robot_ = layout_.robot_start;
  hazards_ = layout_.hazards;
  at_site_a_ = true;
  goal_ = layout_.goal_mode == GoalMode::fixed_swap ? layout_.goal_site_a : random_point();
  return observe();
}

void HazardNav2D::set_configuration(const Eigen::Vector2d& robot, const Eigen::Vector2d& goal,
                                    std::vector<Hazard> hazards) {
  robot_ = robot;
  goal_ = goal;
  hazards_ = std::move(hazards);
  t_ = 0;
}

bool HazardNav2D::in_hazard(const Eigen::Vector2d& p) const {
  return std::any_of(hazards_.begin(), hazards_.end(), [&p](const Hazard& h) {
    return (p - h.center).norm() < h.radius;
  });
}

Vector HazardNav2D::observe() const {
  const double w = layout_.arena_half_width;
  Vector obs(spec_.state_dim);
  obs.segment<2>(0) = robot_ / w;
  obs.segment<2>(2) = (goal_ - robot_) / w;
  for (std::size_t i = 0; i < hazards_.size(); ++i) {
    obs.segment<2>(4 + 2 * static_cast<Eigen::Index>(i)) = (hazards_[i].center - robot_) / w;
  }
  return obs;
}

StepResult HazardNav2D::step(const Vector& action) {
  if (action.size() != 2) throw ShapeError("hazard navigation expects a 2-d action");
  if (t_ >= spec_.horizon) throw std::logic_error("step after episode end");
  const double w = layout_.arena_half_width;

  Eigen::Vector2d a = action.cwiseMax(-1.0).cwiseMin(1.0);
  if (!a.allFinite()) a.setZero();
  const double n = a.norm();
  if (n > 1.0) a /= n;

  const double before = (goal_ - robot_).norm();
  robot_ = (robot_ + layout_.step_size * a).cwiseMax(-w).cwiseMin(w);

  if (layout_.hazard_mode == HazardMode::moving) {
    for (auto& h : hazards_) {
      h.center += h.velocity;
      for (int k = 0; k < 2; ++k) {
        if (h.center(k) > w) {
          h.center(k) = 2.0 * w - h.center(k);
          h.velocity(k) = -h.velocity(k);
        } else if (h.center(k) < -w) {
          h.center(k) = -2.0 * w - h.center(k);
          h.velocity(k) = -h.velocity(k);
        }
      }
    }
  }

  StepResult out;
  const double after = (goal_ - robot_).norm();
  out.reward = before - after;
  if (after < layout_.goal_radius) {
    out.reward += 1.0;
    if (layout_.goal_mode == GoalMode::fixed_swap) {
      at_site_a_ = !at_site_a_;
      goal_ = at_site_a_ ? layout_.goal_site_a : layout_.goal_site_b;
    } else {
      goal_ = random_point();
    }
  }
  out.cost = in_hazard(robot_) ? 1.0 : 0.0;
  ++t_;
  out.done = t_ >= spec_.horizon;
  out.next_state = observe();
  return out;
}

}  // namespace tqpo
