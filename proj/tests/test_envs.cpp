#include <doctest.h>

#include "tqpo/config.hpp"
#include "tqpo/envs.hpp"
#include "tqpo/oracle.hpp"

#include <numeric>

using namespace tqpo;

namespace {

Vector act(double a) { return Vector::Constant(1, a); }

ChainCostMDP two_state_deterministic(int horizon) {
  ChainCostMDP::Tables t;
  t.n_states = 2;
  t.n_actions = 2;
  t.transition = {Vector::Unit(2, 0), Vector::Unit(2, 1), Vector::Unit(2, 0), Vector::Unit(2, 1)};
  t.reward = Matrix::Zero(2, 2);
  t.cost = (Matrix(2, 2) << 0, 1, 0, 1).finished();
  return ChainCostMDP(t, horizon);
}

}  // namespace

TEST_CASE("chain reset is deterministic") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const Vector a = env.reset(7);
  const Vector b = env.reset(7);
  CHECK(a == b);
  CHECK(a == env.observe(0, 0));
}

TEST_CASE("chain rejects bad tables and actions") {
  ChainCostMDP::Tables t;
  t.n_states = 1;
  t.n_actions = 2;
  t.transition = {Vector::Constant(1, 1.0), Vector::Constant(1, 0.9)};
  t.reward = Matrix::Zero(1, 2);
  t.cost = Matrix::Zero(1, 2);
  CHECK_THROWS_AS(ChainCostMDP(t, 3), ConfigError);

  t.transition[1](0) = 1.0;
  t.cost(0, 0) = -1.0;
  CHECK_THROWS_AS(ChainCostMDP(t, 3), ConfigError);

  ChainCostMDP env = ChainCostMDP::default_chain(3);
  env.reset(1);
  CHECK_THROWS_AS(env.step(act(2)), std::out_of_range);
}

TEST_CASE("deterministic transition rows are followed exactly") {
  ChainCostMDP env = two_state_deterministic(5);
  env.reset(3);
  for (int i = 0; i < 4; ++i) {
    const auto r = env.step(act(1));
    CHECK(env.current_state() == 1);
    CHECK(r.next_state == env.observe(1, i + 1));
  }
  const auto last = env.step(act(0));
  CHECK(last.done);
  CHECK(env.current_state() == 0);
}

TEST_CASE("chain episode ends at the horizon with the time feature in range") {
  ChainCostMDP::Tables t = ChainCostMDP::default_chain().tables();
  ChainCostMDP env(t, 4, true);
  CHECK(env.spec().state_dim == 6);
  Vector obs = env.reset(1);
  for (int i = 0; i < 4; ++i) {
    CHECK(obs(5) == doctest::Approx(i / 4.0));
    const auto r = env.step(act(1));
    CHECK(r.done == (i == 3));
    obs = r.next_state;
  }
}

TEST_CASE("chain environment file matches the built-in chain") {
  auto loaded = load_environment(std::string(TQPO_DATA_DIR) + "/envs/chain_default.ini", 6);
  auto* chain = dynamic_cast<ChainCostMDP*>(loaded.get());
  REQUIRE(chain != nullptr);
  const auto& a = chain->tables();
  const ChainCostMDP builtin = ChainCostMDP::default_chain(6);
  const auto& b = builtin.tables();
  CHECK(chain->spec().name == "chain_default");
  CHECK(a.n_states == b.n_states);
  CHECK(a.n_actions == b.n_actions);
  CHECK(a.reward == b.reward);
  CHECK(a.cost == b.cost);
  for (std::size_t i = 0; i < a.transition.size(); ++i) CHECK(a.transition[i] == b.transition[i]);
}

TEST_CASE("one-step enumeration of a deterministic two-state chain") {
  ChainCostMDP env = two_state_deterministic(1);
  const Matrix uniform = Matrix::Constant(2, 2, 0.5);
  const auto trajectories = enumerate_trajectories(env, uniform, 1.0, 1.0);
  REQUIRE(trajectories.size() == 2);
  for (const auto& t : trajectories) CHECK(t.probability == 0.5);
}

TEST_CASE("enumerated probabilities sum to one and respect the size cap") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const Matrix uniform = Matrix::Constant(5, 2, 0.5);
  const auto trajectories = enumerate_trajectories(env, uniform, 0.99, 1.0);
  const double mass = std::accumulate(trajectories.begin(), trajectories.end(), 0.0,
                                      [](double acc, const auto& t) { return acc + t.probability; });
  CHECK(mass == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(enumerate_trajectories(env, uniform, 0.99, 1.0, 100), SizeError);
}

TEST_CASE("enumerated CDF matches Monte Carlo frequency") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const Matrix table = Matrix::Constant(5, 2, 0.5);
  const auto dist = oracle::exact_cost_distribution(env, table, 1.0);
  const double q = 4.5;
  const double exact = dist.cdf(q);

  CounterRng rng(99);
  const int n = 100000;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    env.reset(rng.next_u64());
    double cost = 0.0;
    for (;;) {
      const auto r = env.step(act(static_cast<double>(rng.below(2))));
      cost += r.cost;
      if (r.done) break;
    }
    hits += cost <= q ? 1 : 0;
  }
  const double freq = static_cast<double>(hits) / n;
  const double se = std::sqrt(exact * (1 - exact) / n);
  CHECK(std::abs(freq - exact) <= 3 * se);
}

TEST_CASE("hazard navigation: fixed goal, overlap cost, distance reward") {
  HazardNav2D env = HazardNav2D::preset("simple", 50);
  env.reset(1);
  CHECK(env.goal() == env.layout().goal_site_a);
  CHECK(env.spec().state_dim == 12);
  CHECK_FALSE(env.spec().action_space.discrete);

  // Robot 0.2 from the center of a radius-0.3 hazard.
  env.set_configuration({0.0, 0.0}, {1.0, 0.0}, {Hazard{{0.0, 0.2}, 0.3, {0.0, 0.0}}});
  CHECK(env.in_hazard(env.robot()));

  // Straight step toward a far goal, away from any hazard: reward 0.1.
  env.set_configuration({0.0, 0.0}, {1.0, 0.0}, {Hazard{{-1.5, -1.5}, 0.3, {0.0, 0.0}}});
  const auto r = env.step((Vector(2) << 1.0, 0.0).finished());
  CHECK(r.reward == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(r.cost == 0.0);

  env.set_configuration({0.0, 0.0}, {1.0, 0.0}, {Hazard{{0.05, 0.0}, 0.3, {0.0, 0.0}}});
  CHECK(env.step((Vector(2) << 1.0, 0.0).finished()).cost == 1.0);
}

TEST_CASE("hazard navigation: goal swap, clamping and arena bounds") {
  HazardNav2D env = HazardNav2D::preset("simple", 100);
  env.reset(1);
  env.set_configuration({1.5, 1.3}, {1.5, 1.5}, {});
  const auto r = env.step((Vector(2) << 0.0, 1.0).finished());
  CHECK(r.reward == doctest::Approx(1.1).epsilon(1e-12));
  CHECK(env.goal() == env.layout().goal_site_b);

  env.set_configuration({1.95, 0.0}, {-1.0, 0.0}, {});
  env.step((Vector(2) << 50.0, 0.0).finished());
  CHECK(env.robot().x() == 2.0);
}

TEST_CASE("hazard navigation: random goals differ across seeds") {
  HazardNav2D env = HazardNav2D::preset("dynamic", 10);
  int same = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    env.reset(2 * s + 1);
    const Eigen::Vector2d g1 = env.goal();
    env.reset(2 * s + 2);
    same += (g1 == env.goal()) ? 1 : 0;
  }
  CHECK(same == 0);
}

TEST_CASE("moving hazards stay inside the arena") {
  HazardNav2D env = HazardNav2D::preset("gremlin", 400);
  env.reset(5);
  const Vector still = Vector::Zero(2);
  for (int i = 0; i < 400; ++i) {
    env.step(still);
    for (const auto& h : env.hazards()) {
      CHECK(std::abs(h.center.x()) <= 2.0);
      CHECK(std::abs(h.center.y()) <= 2.0);
    }
  }
  CHECK(env.hazards()[0].center != env.layout().hazards[0].center);
}
