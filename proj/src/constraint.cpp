#include "tqpo/constraint.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tqpo {

TiltedRates tilted_rates(double F_q_at_d, double delta) {
  if (!(F_q_at_d >= 0.0 && F_q_at_d <= 1.0)) {
    throw std::invalid_argument("tilted_rates: F_q(d) must lie in [0,1]");
  }
  if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("tilted_rates: delta must lie in (0,1)");
  return {(F_q_at_d + delta) / (1.0 + delta), (1.0 - F_q_at_d + delta) / (1.0 + delta)};
}

TiltedMultiplier multiplier_update(TiltedMultiplier m, double q, double d, double eta_schedule_k,
                                   double F_q_at_d) {
  if (!(eta_schedule_k > 0.0)) throw std::invalid_argument("multiplier_update: eta must be > 0");
  if (!std::isfinite(q)) throw std::invalid_argument("multiplier_update: non-finite quantile");
  const bool up = q >= d;
  double factor = 1.0;
  switch (m.mode) {
    case TiltMode::tilted: {
      const auto r = tilted_rates(F_q_at_d, m.delta);
      factor = up ? r.eta_plus : r.eta_minus;
      break;
    }
    case TiltMode::fixed:
      factor = up ? m.fixed_eta_plus : m.fixed_eta_minus;
      break;
    case TiltMode::plain:
      break;
  }
  m.last_eta = eta_schedule_k * factor;
  m.lambda = std::max(m.lambda + m.last_eta * (q - d), 0.0);
  return m;
}

TiltedMultiplier expectation_multiplier_update(TiltedMultiplier m, double avg_cost, double d,
                                               double eta_schedule_k) {
  if (!(eta_schedule_k > 0.0)) {
    throw std::invalid_argument("expectation_multiplier_update: eta must be > 0");
  }
  m.last_eta = eta_schedule_k;
  m.lambda = std::max(m.lambda + eta_schedule_k * (avg_cost - d), 0.0);
  return m;
}

}  // namespace tqpo
