#include <doctest.h>

#include "tqpo/quantile.hpp"
#include "tqpo/verify.hpp"

#include <algorithm>
#include <numeric>

using namespace tqpo;

TEST_CASE("empirical quantile uses the ceil(level * N) order statistic") {
  std::vector<double> xs(10);
  std::iota(xs.begin(), xs.end(), 1.0);
  std::reverse(xs.begin(), xs.end());
  CHECK(empirical_quantile(xs, 0.9) == 9.0);
  CHECK(empirical_quantile(xs, 0.91) == 10.0);
  CHECK(empirical_quantile(xs, 0.1) == 1.0);
  CHECK(empirical_quantile(std::vector<double>{5, 5, 5}, 0.5) == 5.0);
  CHECK(quantile_rank(10, 0.9) == 9);
  CHECK_THROWS(empirical_quantile(std::vector<double>{}, 0.5));
  CHECK_THROWS(empirical_quantile(xs, 1.5));
}

TEST_CASE("empirical quantile of exponential samples") {
  const auto c = verify::quantile_exponential();
  CHECK_MESSAGE(c.passed, c.detail);
}

TEST_CASE("empirical cdf") {
  const std::vector<double> xs{0, 1, 2, 3};
  CHECK(empirical_cdf<double>(xs, 1.0) == 0.5);
  CHECK(empirical_cdf<double>(xs, -1.0) == 0.0);
}

TEST_CASE("tracker update") {
  const QuantileTracker t{10.0, 0.9, 0};
  const auto u = tracker_update(t, 20.0, 0.1);
  CHECK(u.q_current == doctest::Approx(11.0));
  CHECK(u.update_count == 1);
  CHECK(tracker_update(t, 10.0, 0.3).q_current == 10.0);
  CHECK_THROWS(tracker_update(t, 1.0, 0.0));
  CHECK_THROWS(tracker_update(t, 1.0, 1.5));
}

TEST_CASE("tracker stays in the hull of its start and the observed quantiles") {
  CounterRng rng(3);
  QuantileTracker t{5.0, 0.9, 0};
  double lo = 5.0;
  double hi = 5.0;
  const ScheduleSpec alpha{0.5, 0.6, 0.0};
  for (std::uint64_t k = 0; k < 2000; ++k) {
    const double q_hat = 3.0 + 4.0 * rng.uniform();
    lo = std::min(lo, q_hat);
    hi = std::max(hi, q_hat);
    t = tracker_update(t, q_hat, alpha.rate(k));
    CHECK(t.q_current >= lo);
    CHECK(t.q_current <= hi);
  }
}

TEST_CASE("tracker converges on stationary streams") {
  const auto c = verify::tracker_convergence();
  CHECK_MESSAGE(c.passed, c.detail);
}

TEST_CASE("bootstrap F_q(d) at the extremes") {
  CounterRng rng(5);
  const std::vector<double> zeros(50, 0.0);
  const std::vector<double> hundreds(50, 100.0);
  CHECK(bootstrap_Fq(zeros, 0.9, 15.0, 200, rng).F_q_at_d == 1.0);
  CHECK(bootstrap_Fq(hundreds, 0.9, 15.0, 200, rng).F_q_at_d == 0.0);
  CHECK(bootstrap_Fq(zeros, 0.9, 15.0, 37, rng).bootstrap_samples.size() == 37);
}

TEST_CASE("bootstrap F_q(d) is reproducible") {
  std::vector<double> xs(100);
  CounterRng data(9);
  for (auto& x : xs) x = data.normal();
  CounterRng a(1);
  CounterRng b(1);
  CHECK(bootstrap_Fq(xs, 0.5, 0.0, 200, a).F_q_at_d == bootstrap_Fq(xs, 0.5, 0.0, 200, b).F_q_at_d);
}

TEST_CASE("bootstrap F_q(d) is centred at one half for a symmetric law at its median") {
  // For one sample F is roughly uniform on [0, 1] (it is a smoothed
  // indicator of the sample median falling below d), so the symmetry shows
  // in its average over independent samples.
  CounterRng rng(21);
  const int samples = 200;
  double total = 0.0;
  for (int s = 0; s < samples; ++s) {
    std::vector<double> xs(500);
    for (auto& x : xs) x = 15.0 + rng.normal();
    total += bootstrap_Fq(xs, 0.5, 15.0, 200, rng).F_q_at_d;
  }
  CHECK(std::abs(total / samples - 0.5) < 0.05);
}

TEST_CASE("cdf gradient estimator edge cases") {
  const std::vector<double> costs{1.0, 2.0, 3.0};
  Matrix scores(2, 3);
  scores << 1, 2, 3, -1, 0, 4;
  CHECK(cdf_gradient_estimate(costs, 0.5, scores).isZero(0.0));
  const Vector all = cdf_gradient_estimate(costs, 10.0, scores);
  CHECK(all.isApprox(-scores.rowwise().mean()));
  const Vector some = cdf_gradient_estimate(costs, 2.0, scores);
  CHECK(some(0) == doctest::Approx(-1.0));
  CHECK(some(1) == doctest::Approx(1.0 / 3.0));
  CHECK_THROWS_AS(cdf_gradient_estimate(costs, 1.0, Matrix::Zero(2, 2)), ShapeError);
}

TEST_CASE("cdf gradient estimator matches enumeration on a small chain") {
  const auto c = verify::gradient_oracle(3, 50000);
  CHECK_MESSAGE(c.passed, c.detail);
}
