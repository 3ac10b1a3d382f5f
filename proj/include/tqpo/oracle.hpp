#pragma once

#include "tqpo/core.hpp"
#include "tqpo/envs.hpp"

#include <string>
#include <utility>
#include <vector>

namespace tqpo::oracle {

/// Exact law of the cumulative cost: atoms sorted ascending, masses sum to 1.
struct ExactCostDistribution {
  std::vector<std::pair<double, double>> support;

  double cdf(double q) const;
  double total_mass() const;
  /// Midpoints between consecutive atoms, where F(q; theta) is smooth in theta.
  std::vector<double> midpoints() const;
};

/// Row-wise softmax of tabular logits laid out as theta[s * n_actions + a].
Matrix softmax_table(const Vector& theta, int n_states, int n_actions);

/// Atoms closer than this (relative) are merged.
inline constexpr double kAtomTolerance = 1e-12;

ExactCostDistribution exact_cost_distribution(const ChainCostMDP& env, const Matrix& policy_table,
                                              double gamma_cost,
                                              std::size_t cap = kDefaultEnumerationCap);

/// Smallest atom with cumulative probability >= level.
double exact_quantile(const ExactCostDistribution& dist, double level);

/// F(q; theta) for a tabular softmax policy, by enumeration.
double exact_cdf(const ChainCostMDP& env, const Vector& theta, double q, double gamma_cost);

struct FdGradient {
  Vector gradient;
  /// Coordinates where q sits on an atom (within kAtomTolerance), making the
  /// indicator ambiguous; the tests pick q between atoms.
  std::vector<int> flagged;
};

inline constexpr double kDefaultFdStep = 1e-4;
inline constexpr std::size_t kMaxTabularParams = 200;

/// Central differences of exact_cdf in every tabular logit.
FdGradient fd_cdf_gradient(const ChainCostMDP& env, const Vector& theta, double q, double step,
                           double gamma_cost);

/// E[sum_t grad log pi(a_t|s_t)] in tabular coordinates, by enumeration.
/// Zero up to rounding (score-function identity).
Vector exact_score_expectation(const ChainCostMDP& env, const Vector& theta);

/// Versioned structured-text fixture of exact distributions and quantiles.
struct Fixture {
  static constexpr int kFormatVersion = 1;

  struct Case {
    std::string name;
    Vector theta;
    double gamma_cost = 1.0;
    ExactCostDistribution distribution;
    std::vector<std::pair<double, double>> quantiles;  ///< (level, exact quantile)
  };
  std::string env_name;
  int horizon = 0;
  std::vector<Case> cases;
};

/// Deterministic fixture for the default chain: uniform and two fixed-logit
/// policies at levels 0.5, 0.9, 0.95.
Fixture build_fixture(const ChainCostMDP& env);
std::string fixture_to_json(const Fixture& f);
/// Throws ConfigError on a malformed or wrong-version document.
Fixture fixture_from_json(const std::string& text);

struct FixtureCheck {
  bool ok = true;
  std::vector<std::string> failures;
};

/// Recomputes every case against `env` and compares atoms, masses and
/// quantiles within `tol`.
FixtureCheck check_fixture(const Fixture& f, const ChainCostMDP& env, double tol = 1e-9);

}  // namespace tqpo::oracle
