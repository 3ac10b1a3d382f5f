#include <doctest.h>

#include "tqpo/core.hpp"
#include "tqpo/rng.hpp"

#include <functional>
#include <set>

using namespace tqpo;

namespace {

Episode episode_with(const std::vector<double>& rewards, const std::vector<double>& costs) {
  Episode e;
  for (std::size_t i = 0; i < std::max(rewards.size(), costs.size()); ++i) {
    Transition t;
    t.state = Vector::Zero(1);
    t.action = Vector::Zero(1);
    t.reward = i < rewards.size() ? rewards[i] : 0.0;
    t.cost = i < costs.size() ? costs[i] : 0.0;
    e.transitions.push_back(t);
  }
  if (!e.transitions.empty()) e.transitions.back().done = true;
  return e;
}

RunConfig with_exponents(double a, double b, double e) {
  RunConfig c;
  c.env.preset = "chain_default";
  c.schedule_alpha.decay_exponent = a;
  c.schedule_beta.decay_exponent = b;
  c.schedule_eta.decay_exponent = e;
  return c;
}

}  // namespace

TEST_CASE("discounted cost tails") {
  CHECK(discounted_cost(episode_with({}, {1, 0, 1}), 0.99, 0) == doctest::Approx(1.9801).epsilon(1e-15));
  CHECK(discounted_cost(episode_with({}, {0, 0, 0}), 0.7, 0) == 0.0);
  CHECK(discounted_cost(episode_with({}, {1, 1}), 0.99, 1) == 1.0);
  CHECK_THROWS_AS(discounted_cost(episode_with({}, {1}), 0.9, 2), std::out_of_range);
}

TEST_CASE("discounted return tails") {
  CHECK(discounted_return(episode_with({1, 1}, {}), 0.5, 0) == 1.5);
  CHECK(discounted_return(episode_with({2}, {}), 0.9, 0) == 2.0);
  CHECK_THROWS(discounted_return(Episode{}, 0.9, 0));
}

TEST_CASE("cost-to-go is the backward recursion of the tail sums") {
  const Episode e = episode_with({1, 2, 3, 4}, {0.5, 1.5, 0.0, 2.0});
  const auto ctg = cost_to_go(e, 0.9);
  const auto rtg = return_to_go(e, 0.9);
  REQUIRE(ctg.size() == 4);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(ctg[i] == doctest::Approx(discounted_cost(e, 0.9, i)).epsilon(1e-14));
    CHECK(rtg[i] == doctest::Approx(discounted_return(e, 0.9, i)).epsilon(1e-14));
  }
}

TEST_CASE("make_batch caches cumulative sums") {
  std::vector<Episode> eps{episode_with({1, 1}, {2, 0}), episode_with({3}, {1})};
  const Batch b = make_batch(eps, 0.5, 1.0);
  REQUIRE(b.size() == 2);
  CHECK(b.cumulative_returns[0] == 1.5);
  CHECK(b.cumulative_costs[0] == 2.0);
  CHECK(b.cumulative_costs[1] == 1.0);
}

TEST_CASE("schedule validation") {
  CHECK(validate_schedules(with_exponents(0.6, 0.8, 1.0)).ok());

  const auto equal = validate_schedules(with_exponents(0.8, 0.8, 1.0));
  CHECK_FALSE(equal.ok());
  CHECK(equal.describe().find("beta") != std::string::npos);

  CHECK_FALSE(validate_schedules(with_exponents(0.4, 0.8, 1.0)).ok());
  CHECK_FALSE(validate_schedules(with_exponents(0.6, 0.4, 1.0)).ok());
  CHECK_FALSE(validate_schedules(with_exponents(0.6, 0.8, 0.4)).ok());
  CHECK_FALSE(validate_schedules(with_exponents(0.6, 0.8, 1.1)).ok());

  RunConfig floored = with_exponents(0.6, 0.8, 1.0);
  floored.schedule_eta.floor = 1e-3;
  const auto r = validate_schedules(floored);
  CHECK(r.ok());
  CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("schedule rates decay as base / (1 + k)^p with a floor") {
  const ScheduleSpec s{0.5, 1.0, 0.0};
  CHECK(s.rate(0) == 0.5);
  CHECK(s.rate(1) == 0.25);
  const ScheduleSpec f{1.0, 1.0, 0.1};
  CHECK(f.rate(100) == 0.1);
}

TEST_CASE("config validation covers scalar ranges") {
  RunConfig c;
  c.env.preset = "chain_default";
  CHECK(validate_config(c).ok());
  for (auto mutate : std::vector<std::function<void(RunConfig&)>>{
           [](RunConfig& x) { x.epsilon = 0.0; },
           [](RunConfig& x) { x.epsilon = 1.0; },
           [](RunConfig& x) { x.threshold_d = -1.0; },
           [](RunConfig& x) { x.gamma = 1.0; },
           [](RunConfig& x) { x.clip_ratio = 0.0; },
           [](RunConfig& x) { x.delta_smooth = 1.0; },
           [](RunConfig& x) { x.horizon = 0; },
           [](RunConfig& x) { x.batch_episodes = 0; },
           [](RunConfig& x) { x.env.preset.clear(); },
           [](RunConfig& x) { x.env.file = "a.ini"; },
           [](RunConfig& x) { x.schedule_alpha.base = 1.5; },
       }) {
    RunConfig bad = c;
    mutate(bad);
    CHECK_FALSE(validate_config(bad).ok());
  }
  RunConfig bad = c;
  bad.epsilon = 2.0;
  CHECK_THROWS_AS(require_valid(bad), ConfigError);
}

TEST_CASE("enum names round-trip") {
  for (Variant v : {Variant::TQPO, Variant::TQPO_NO_TILT, Variant::TQPO_FIXED_TILT, Variant::PPO_LAG,
                    Variant::PPO}) {
    CHECK(variant_from_string(to_string(v)) == v);
  }
  CHECK(penalty_form_from_string("literal") == PenaltyForm::literal);
  CHECK(indicator_scope_from_string("per_state") == IndicatorScope::per_state);
  CHECK_THROWS_AS(variant_from_string("CPO"), ConfigError);
}

TEST_CASE("counter rng is reproducible and splits into distinct streams") {
  CounterRng a(42);
  CounterRng b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());

  CounterRng resumed = CounterRng::from_state(a.key(), a.counter());
  CHECK(resumed.next_u64() == a.next_u64());

  std::set<std::uint64_t> firsts;
  CounterRng root(7);
  for (std::uint64_t i = 0; i < 64; ++i) firsts.insert(root.split(i).next_u64());
  CHECK(firsts.size() == 64);

  CounterRng u(3);
  double sum = 0.0;
  double sq = 0.0;
  const int n = 100000;
  for (int i = 0; i < n; ++i) {
    const double z = u.normal();
    sum += z;
    sq += z * z;
  }
  CHECK(std::abs(sum / n) < 0.02);
  CHECK(std::abs(sq / n - 1.0) < 0.02);

  for (int i = 0; i < 1000; ++i) CHECK(u.below(7) < 7);
}
