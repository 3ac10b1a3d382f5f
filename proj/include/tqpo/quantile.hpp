#pragma once

#include "tqpo/core.hpp"
#include "tqpo/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <span>
#include <stdexcept>
#include <vector>

namespace tqpo {

/// 1-based rank of the level quantile among n sorted samples: the smallest k
/// with k / n >= level. The comparison is done on k / n itself so that, e.g.,
/// level 0.9 with n = 10 gives 9 rather than a rounding artifact of 0.9 * 10.
inline std::size_t quantile_rank(std::size_t n, double level) {
  const double nd = static_cast<double>(n);
  auto k = static_cast<std::size_t>(std::ceil(level * nd));
  k = std::clamp<std::size_t>(k, 1, n);
  while (k > 1 && static_cast<double>(k - 1) / nd >= level) --k;
  while (k < n && static_cast<double>(k) / nd < level) ++k;
  return k;
}

/// Smallest sample x with (#samples <= x) / N >= level. Always a sample
/// member; no interpolation.
template <typename Scalar>
Scalar empirical_quantile(std::span<const Scalar> samples, double level) {
  if (samples.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
  if (!(level > 0.0 && level < 1.0)) {
    throw std::invalid_argument("empirical_quantile: level must lie in (0,1)");
  }
  std::vector<Scalar> work(samples.begin(), samples.end());
  const std::size_t k = quantile_rank(work.size(), level);
  auto nth = work.begin() + static_cast<std::ptrdiff_t>(k - 1);
  std::nth_element(work.begin(), nth, work.end());
  return *nth;
}

inline double empirical_quantile(const std::vector<double>& samples, double level) {
  return empirical_quantile<double>(std::span<const double>(samples), level);
}

/// Fraction of samples <= threshold.
template <typename Scalar>
double empirical_cdf(std::span<const Scalar> samples, Scalar threshold) {
  if (samples.empty()) throw std::invalid_argument("empirical_cdf: empty sample");
  const auto n = std::count_if(samples.begin(), samples.end(),
                               [threshold](Scalar x) { return x <= threshold; });
  return static_cast<double>(n) / static_cast<double>(samples.size());
}

/// Smoothed running estimate of the (level)-quantile of cumulative cost.
struct QuantileTracker {
  double q_current = 0.0;
  double level = 0.9;
  std::uint64_t update_count = 0;

  friend bool operator==(const QuantileTracker&, const QuantileTracker&) = default;
};

/// q <- q + alpha * (batch_quantile - q); alpha must lie in (0, 1].
QuantileTracker tracker_update(QuantileTracker tracker, double batch_quantile, double alpha_k);

struct QuantileDistributionEstimate {
  std::vector<double> bootstrap_samples;
  double F_q_at_d = 0.0;
};

/// Bootstrap estimate of Pr(q_hat <= d): `replicates` resamples of size N
/// with replacement, each reduced to its empirical quantile.
QuantileDistributionEstimate bootstrap_Fq(std::span<const double> episode_costs, double level,
                                          double d, int replicates, CounterRng& rng);

/// -(1/N) sum_i I(C_i <= q) * score_sums(:, i).
///
/// Since grad F(q) = E[I(C <= q) * sum_t grad log pi], this is an estimate of
/// -grad F(q; theta), which points along grad q_{1-eps} (the density in the
/// denominator of the inverse-function identity is positive).
Vector cdf_gradient_estimate(std::span<const double> costs, double q, const Matrix& score_sums);
Vector cdf_gradient_estimate(const Batch& batch, double q, const Matrix& score_sums);

/// Per-step form: -(1/N) sum over all visited steps i of
/// I(C(s_i) <= q) * sum_{t >= i} grad log pi(a_t|s_t), with C(s_i) the
/// discounted tail cost from step i and N the number of episodes.
/// `step_scores` holds one column per transition, in batch order.
Vector cdf_gradient_estimate_per_state(const Batch& batch, double q, double gamma_cost,
                                       const Matrix& step_scores);

}  // namespace tqpo
