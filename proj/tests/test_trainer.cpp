#include <doctest.h>

#include "tqpo/config.hpp"
#include "tqpo/io.hpp"
#include "tqpo/runner.hpp"
#include "tqpo/trainer.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <numeric>
#include <sstream>

using namespace tqpo;

namespace {

/// One-dimensional states; rewards and costs given per step.
Batch hand_batch(const std::vector<std::vector<double>>& rewards,
                 const std::vector<std::vector<double>>& costs, double gamma, double gamma_cost) {
  std::vector<Episode> eps;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Episode e;
    for (std::size_t t = 0; t < rewards[i].size(); ++t) {
      Transition tr;
      tr.state = Vector::Constant(1, static_cast<double>(t));
      tr.action = Vector::Zero(1);
      tr.reward = rewards[i][t];
      tr.cost = costs[i][t];
      tr.log_prob = std::log(0.5);
      e.transitions.push_back(tr);
    }
    e.transitions.back().done = true;
    eps.push_back(std::move(e));
  }
  return make_batch(std::move(eps), gamma, gamma_cost);
}

ValueParams zero_value() {
  ValueParams v;
  v.arch = {1, {}, 1, true};
  v.phi = Vector::Zero(2);
  return v;
}

AdvantageOptions raw(PenaltyForm form) {
  AdvantageOptions o;
  o.gamma = 0.99;
  o.gamma_cost = 1.0;
  o.penalty_form = form;
  o.normalize = false;
  return o;
}

RunConfig chain_config() {
  RunConfig c;
  c.env.preset = "chain_default";
  c.horizon = 6;
  c.threshold_d = 6.0;
  c.batch_episodes = 16;
  c.epochs = 6;
  c.gamma_cost = 1.0;
  c.policy_hidden = {8};
  c.value_hidden = {8};
  c.value_iterations = 5;
  c.bootstrap_replicates = 50;
  return c;
}

ChainCostMDP costless_chain() {
  ChainCostMDP::Tables t = ChainCostMDP::default_chain().tables();
  t.cost.setZero();
  return ChainCostMDP(t, 6);
}

}  // namespace

TEST_CASE("advantage penalty: literal form charges safe episodes") {
  const Batch b = hand_batch({{1, 1, 1}}, {{0, 0, 0}}, 0.99, 1.0);
  const auto rec = compute_advantages(b, zero_value(), 2.0, 5.0, raw(PenaltyForm::literal));
  CHECK(rec.episode_indicator == std::vector<int>{1});
  CHECK(rec.advantages.isApprox(Vector::Constant(3, -1.0)));

  const auto off = compute_advantages(b, zero_value(), 0.0, 5.0, raw(PenaltyForm::literal));
  CHECK(off.advantages.isApprox(Vector::Constant(3, 1.0)));

  const Batch violating = hand_batch({{1, 1}, {2, 0}}, {{6, 0}, {3, 4}}, 0.99, 1.0);
  const auto unchanged = compute_advantages(violating, zero_value(), 1.0, 5.0, raw(PenaltyForm::literal));
  CHECK(unchanged.advantages == (Vector(4) << 1, 1, 2, 0).finished());
}

TEST_CASE("advantage penalty: violation form charges episodes above q_k") {
  const Batch b = hand_batch({{1, 1}, {1, 1}}, {{0, 0}, {4, 4}}, 0.99, 1.0);
  const auto rec = compute_advantages(b, zero_value(), 3.0, 5.0, raw(PenaltyForm::violation));
  CHECK(rec.episode_indicator == std::vector<int>{1, 0});
  CHECK(rec.advantages == (Vector(4) << 1, 1, -2, -2).finished());
}

TEST_CASE("advantage penalty: per-state scope uses the tail cost") {
  const Batch b = hand_batch({{0, 0, 0}}, {{4, 1, 1}}, 0.99, 1.0);
  AdvantageOptions o = raw(PenaltyForm::violation);
  o.indicator_scope = IndicatorScope::per_state;
  const auto rec = compute_advantages(b, zero_value(), 1.0, 3.0, o);
  CHECK(rec.advantages == (Vector(3) << -1, 0, 0).finished());
}

TEST_CASE("advantages with a nonzero critic are TD residuals") {
  ValueParams v;
  v.arch = {1, {}, 1, true};
  v.phi = (Vector(2) << 0.5, 1.0).finished();  // V(s) = 0.5 s + 1
  const Batch b = hand_batch({{1, 2, 3}}, {{0, 0, 0}}, 0.9, 1.0);
  AdvantageOptions o = raw(PenaltyForm::violation);
  o.gamma = 0.9;
  const auto rec = compute_advantages(b, v, 0.0, 0.0, o);
  CHECK(rec.advantages(0) == doctest::Approx(1 + 0.9 * 1.5 - 1.0));
  CHECK(rec.advantages(1) == doctest::Approx(2 + 0.9 * 2.0 - 1.5));
  CHECK(rec.advantages(2) == doctest::Approx(3 - 2.0));

  o.normalize = true;
  const auto n = compute_advantages(b, v, 0.0, 0.0, o);
  CHECK(std::abs(n.advantages.mean()) < 1e-12);
  CHECK((n.advantages.array() - n.advantages.mean()).square().mean() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("expectation penalty subtracts lambda times the cost-to-go") {
  const Batch b = hand_batch({{0, 0, 0}}, {{1, 2, 3}}, 0.99, 0.5);
  AdvantageOptions o = raw(PenaltyForm::violation);
  o.gamma_cost = 0.5;
  const auto rec = compute_lagrangian_advantages(b, zero_value(), 2.0, o);
  CHECK(rec.advantages(0) == doctest::Approx(-2.0 * (1 + 0.5 * 2 + 0.25 * 3)));
  CHECK(rec.advantages(2) == doctest::Approx(-6.0));
}

TEST_CASE("clipped surrogate gradient") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  RunConfig c = chain_config();
  TrainerState st = init_trainer(c, env.spec());
  const Batch batch = collect_batch(st, env, 8, 0.99, 1.0);
  const BatchView view = flatten(batch, 0.99);
  const Eigen::Index M = view.states.cols();
  Vector adv(M);
  CounterRng rng(4);
  for (Eigen::Index j = 0; j < M; ++j) adv(j) = rng.normal();

  // Ratio 1 on the first pass: plain policy gradient with weights A / M.
  const Vector g = clipped_surrogate_grad(st.policy, view, adv, 0.2);
  CHECK(g.isApprox(weighted_score(st.policy, view.states, view.actions, adv / static_cast<double>(M))));

  // Away from the clip boundary the gradient is the derivative of the surrogate.
  PolicyParams moved = st.policy;
  for (Eigen::Index i = 0; i < moved.theta.size(); ++i) moved.theta(i) += 0.3 * rng.normal();
  const Vector analytic = clipped_surrogate_grad(moved, view, adv, 0.2);
  Vector numeric(moved.theta.size());
  for (Eigen::Index i = 0; i < numeric.size(); ++i) {
    PolicyParams p = moved;
    PolicyParams m = moved;
    p.theta(i) += 1e-6;
    m.theta(i) -= 1e-6;
    double sp = 0.0;
    double sm = 0.0;
    clipped_surrogate_grad(p, view, adv, 0.2, &sp);
    clipped_surrogate_grad(m, view, adv, 0.2, &sm);
    numeric(i) = (sp - sm) / 2e-6;
  }
  CHECK((analytic - numeric).norm() <= 1e-5 * std::max(1.0, numeric.norm()));

  // A > 0 with the ratio above 1 + clip contributes nothing.
  BatchView shifted = view;
  shifted.old_log_probs.array() -= 1.0;  // ratio = e > 1.2
  const Vector positive = Vector::Ones(M);
  CHECK(clipped_surrogate_grad(st.policy, shifted, positive, 0.2).isZero(0.0));
  CHECK_FALSE(clipped_surrogate_grad(st.policy, shifted, -positive, 0.2).isZero(0.0));
}

TEST_CASE("ppo update with zero advantages leaves parameters unchanged") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  TrainerState st = init_trainer(chain_config(), env.spec());
  const Batch batch = collect_batch(st, env, 4, 0.99, 1.0);
  const BatchView view = flatten(batch, 0.99);
  const Vector zero = Vector::Zero(view.states.cols());
  CHECK(ppo_update(st.policy, view, zero, 0.2, 0.5, 4).theta == st.policy.theta);

  Vector bad = zero;
  bad(0) = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(ppo_update(st.policy, view, bad, 0.2, 0.5, 4), NumericError);
}

TEST_CASE("batch collection") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const RunConfig c = chain_config();
  TrainerState a = init_trainer(c, env.spec());
  TrainerState b = init_trainer(c, env.spec());
  const Batch ba = collect_batch(a, env, 5, 0.99, 1.0);
  const Batch bb = collect_batch(b, env, 5, 0.99, 1.0);
  CHECK(ba.cumulative_costs == bb.cumulative_costs);
  CHECK(ba.cumulative_returns == bb.cumulative_returns);
  CHECK(a.rng == b.rng);

  const Batch one = collect_batch(a, env, 1, 0.99, 1.0);
  CHECK(one.episodes[0].length() == 6);
}

TEST_CASE("disjoint seeds give indistinguishable return distributions") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const RunConfig c = chain_config();
  const TrainerState base = init_trainer(c, env.spec());
  int rejections = 0;
  for (int trial = 0; trial < 50; ++trial) {
    TrainerState x = base;
    TrainerState y = base;
    x.rng = CounterRng(1000 + 2 * trial);
    y.rng = CounterRng(1001 + 2 * trial);
    const auto rx = collect_batch(x, env, 400, 0.99, 1.0).cumulative_returns;
    const auto ry = collect_batch(y, env, 400, 0.99, 1.0).cumulative_returns;
    auto moments = [](const std::vector<double>& v) {
      const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
      double s = 0.0;
      for (double z : v) s += (z - m) * (z - m);
      return std::pair{m, s / (v.size() - 1)};
    };
    const auto [mx, vx] = moments(rx);
    const auto [my, vy] = moments(ry);
    const double se2 = vx / rx.size() + vy / ry.size();
    const double t = (mx - my) / std::sqrt(se2);
    const double dof = se2 * se2 / (std::pow(vx / rx.size(), 2) / (rx.size() - 1) +
                                    std::pow(vy / ry.size(), 2) / (ry.size() - 1));
    const boost::math::students_t dist(dof);
    const double p = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t)));
    rejections += p < 0.01 ? 1 : 0;
  }
  // Under the null about 0.5 of 50 tests reject; more than 3 has probability < 0.002.
  CHECK(rejections <= 3);
}

TEST_CASE("training without costs matches unconstrained PPO exactly") {
  ChainCostMDP env = costless_chain();
  RunConfig tq = chain_config();
  tq.epochs = 8;
  RunConfig ppo = tq;
  ppo.algorithm_variant = Variant::PPO;
  TrainerState a = init_trainer(tq, env.spec());
  TrainerState b = init_trainer(ppo, env.spec());
  for (int e = 0; e < tq.epochs; ++e) {
    auto ra = train_epoch(std::move(a), env, tq);
    auto rb = train_epoch(std::move(b), env, ppo);
    CHECK(ra.metrics.lambda == 0.0);
    CHECK(ra.metrics.avg_return == rb.metrics.avg_return);
    CHECK(ra.state.policy.theta == rb.state.policy.theta);
    a = std::move(ra.state);
    b = std::move(rb.state);
  }
}

TEST_CASE("train_epoch is deterministic and bookkeeping is consistent") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const RunConfig c = chain_config();
  auto r1 = train_epoch(init_trainer(c, env.spec()), env, c);
  auto r2 = train_epoch(init_trainer(c, env.spec()), env, c);
  CHECK(r1.metrics == r2.metrics);
  CHECK(r1.state == r2.state);
  CHECK(r1.state.epoch == 1);
  CHECK(r1.state.tracker.update_count == 1);
  CHECK(r1.state.tracker_initialized);
  CHECK(r1.metrics.lambda >= 0.0);
}

TEST_CASE("resuming from a checkpoint reproduces an uninterrupted run") {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const RunConfig c = chain_config();
  TrainerState straight = init_trainer(c, env.spec());
  std::vector<EpochMetrics> m1;
  for (int e = 0; e < 6; ++e) {
    auto r = train_epoch(std::move(straight), env, c);
    m1.push_back(r.metrics);
    straight = std::move(r.state);
  }

  TrainerState part = init_trainer(c, env.spec());
  std::vector<EpochMetrics> m2;
  for (int e = 0; e < 3; ++e) {
    auto r = train_epoch(std::move(part), env, c);
    m2.push_back(r.metrics);
    part = std::move(r.state);
  }
  std::stringstream buf;
  write_checkpoint(buf, part);
  TrainerState resumed = read_checkpoint(buf);
  for (int e = 0; e < 3; ++e) {
    auto r = train_epoch(std::move(resumed), env, c);
    m2.push_back(r.metrics);
    resumed = std::move(r.state);
  }
  CHECK(m1 == m2);
  CHECK(straight == resumed);
}

TEST_CASE("run_training writes one metrics row per epoch") {
  RunConfig c = chain_config();
  c.epochs = 4;
  const RunResult r = run_training(c);
  CHECK(r.metrics.size() == 4);
  CHECK(r.summary.window == 4);
  for (const auto& m : r.metrics) CHECK(m.lambda >= 0.0);
}

TEST_CASE("quantile-constrained training holds the quantile where PPO does not") {
  RunConfig c = load_run_config(std::string(TQPO_DATA_DIR) + "/configs/skewed_acceptance.ini");
  const RunResult tqpo = run_training(c);
  c.algorithm_variant = Variant::PPO;
  const RunResult ppo = run_training(c);
  const double tol = 0.15 * c.threshold_d;
  CHECK(tqpo.summary.final_cost_quantile <= c.threshold_d + tol);
  CHECK(ppo.summary.final_cost_quantile > c.threshold_d + tol);
}
