#include "tqpo/quantile.hpp"

namespace tqpo {

QuantileTracker tracker_update(QuantileTracker tracker, double batch_quantile, double alpha_k) {
  if (!(alpha_k > 0.0 && alpha_k <= 1.0)) {
    throw std::invalid_argument("tracker_update: alpha must lie in (0,1]");
  }
  if (!std::isfinite(batch_quantile)) throw std::invalid_argument("tracker_update: non-finite quantile");
  tracker.q_current += alpha_k * (batch_quantile - tracker.q_current);
  ++tracker.update_count;
  return tracker;
}

QuantileDistributionEstimate bootstrap_Fq(std::span<const double> episode_costs, double level,
                                          double d, int replicates, CounterRng& rng) {
  if (episode_costs.empty()) throw std::invalid_argument("bootstrap_Fq: empty costs");
  if (replicates < 1) throw std::invalid_argument("bootstrap_Fq: replicates must be >= 1");
  const std::size_t n = episode_costs.size();
  const std::size_t k = quantile_rank(n, level);

  QuantileDistributionEstimate est;
  est.bootstrap_samples.reserve(static_cast<std::size_t>(replicates));
  std::vector<double> resample(n);
  int below = 0;
  for (int r = 0; r < replicates; ++r) {
    for (auto& x : resample) x = episode_costs[rng.below(n)];
    auto nth = resample.begin() + static_cast<std::ptrdiff_t>(k - 1);
    std::nth_element(resample.begin(), nth, resample.end());
    est.bootstrap_samples.push_back(*nth);
    if (*nth <= d) ++below;
  }
  est.F_q_at_d = static_cast<double>(below) / static_cast<double>(replicates);
  return est;
}

Vector cdf_gradient_estimate(std::span<const double> costs, double q, const Matrix& score_sums) {
  if (static_cast<Eigen::Index>(costs.size()) != score_sums.cols()) {
    throw ShapeError("cdf_gradient_estimate: one score sum per episode required");
  }
  if (costs.empty()) throw ShapeError("cdf_gradient_estimate: empty batch");
  Vector acc = Vector::Zero(score_sums.rows());
  for (std::size_t i = 0; i < costs.size(); ++i) {
    if (costs[i] <= q) acc += score_sums.col(static_cast<Eigen::Index>(i));
  }
  return -acc / static_cast<double>(costs.size());
}

Vector cdf_gradient_estimate(const Batch& batch, double q, const Matrix& score_sums) {
  return cdf_gradient_estimate(std::span<const double>(batch.cumulative_costs), q, score_sums);
}

Vector cdf_gradient_estimate_per_state(const Batch& batch, double q, double gamma_cost,
                                       const Matrix& step_scores) {
  if (static_cast<Eigen::Index>(batch.transition_count()) != step_scores.cols()) {
    throw ShapeError("cdf_gradient_estimate_per_state: one score column per transition required");
  }
  if (batch.size() == 0) throw ShapeError("cdf_gradient_estimate_per_state: empty batch");
  Vector acc = Vector::Zero(step_scores.rows());
  Eigen::Index offset = 0;
  for (const auto& e : batch.episodes) {
    const auto tails = cost_to_go(e, gamma_cost);
    const auto n = static_cast<Eigen::Index>(e.length());
    // Suffix sums of the score columns give sum_{t >= i}.
    Vector suffix = Vector::Zero(step_scores.rows());
    for (Eigen::Index i = n; i-- > 0;) {
      suffix += step_scores.col(offset + i);
      if (tails[static_cast<std::size_t>(i)] <= q) acc += suffix;
    }
    offset += n;
  }
  return -acc / static_cast<double>(batch.size());
}

}  // namespace tqpo
