#pragma once

#include <utility>

namespace tqpo {

enum class TiltMode { tilted, plain, fixed };

/// Lagrange multiplier with asymmetric step factors. lambda stays >= 0.
struct TiltedMultiplier {
  double lambda = 0.0;
  double delta = 0.1;
  TiltMode mode = TiltMode::tilted;
  double fixed_eta_plus = 0.2;
  double fixed_eta_minus = 0.8;
  double last_eta = 0.0;

  friend bool operator==(const TiltedMultiplier&, const TiltedMultiplier&) = default;
};

struct TiltedRates {
  double eta_plus;
  double eta_minus;
};

/// eta_plus = (F + delta) / (1 + delta), eta_minus = (1 - F + delta) / (1 + delta).
/// Their sum is (1 + 2 delta) / (1 + delta) for every F in [0, 1].
TiltedRates tilted_rates(double F_q_at_d, double delta);

/// lambda <- max(lambda + rate * (q - d), 0), where rate is the schedule
/// value times the tilt factor selected by the sign of q - d (eta_plus when
/// q >= d). Plain mode uses factor 1.
TiltedMultiplier multiplier_update(TiltedMultiplier m, double q, double d, double eta_schedule_k,
                                   double F_q_at_d);

/// Expectation-constrained ascent: lambda <- max(lambda + eta * (avg_cost - d), 0).
TiltedMultiplier expectation_multiplier_update(TiltedMultiplier m, double avg_cost, double d,
                                               double eta_schedule_k);

}  // namespace tqpo
