#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace tqpo::verify {

/// Outcome of one oracle or invariant check. `measured` is compared against
/// `tolerance` in the direction stated by `relation` ("<=" or ">=").
struct Check {
  std::string id;
  bool passed = false;
  double measured = 0.0;
  std::string relation = "<=";
  double tolerance = 0.0;
  std::string detail;
};

/// Cosine between the sampled CDF-gradient estimator (sign flipped, so it
/// estimates grad F) and central differences of the enumerated F, minimized
/// over `draws` random tabular policies on the default chain.
Check gradient_oracle(int draws = 10, int episodes = 100000, std::uint64_t seed = 11);

/// |mean of per-episode score sums| in units of its standard error.
Check score_identity(int episodes = 100000, std::uint64_t seed = 12);

/// Empirical vs exact quantiles on atomic laws (count of mismatches).
Check quantile_atomic(int draws = 1000000, std::uint64_t seed = 13);
/// |empirical 95% quantile - ln 20| for n unit exponentials.
Check quantile_exponential(int n = 100000, std::uint64_t seed = 14);
/// Largest |q_k - q*| after `updates` tracker steps on stationary streams.
Check tracker_convergence(int updates = 10000, std::uint64_t seed = 15);

/// Largest deviation of eta_plus + eta_minus from (1 + 2 delta) / (1 + delta)
/// in units of machine epsilon times the target, plus the direction property.
Check tilt_identities(int pairs = 100, std::uint64_t seed = 16);
/// Smallest lambda over random multiplier updates of every kind.
Check multiplier_nonnegative(int updates = 100000, std::uint64_t seed = 17);

/// Largest relative error of analytic gradients against central differences.
Check fd_policy_categorical(int draws = 100, std::uint64_t seed = 18);
Check fd_policy_gaussian(int draws = 100, std::uint64_t seed = 19);
Check fd_value_loss(int draws = 100, std::uint64_t seed = 20);

/// Recomputes a stored oracle fixture against the built-in chain.
Check fixture(const std::filesystem::path& path);

/// Validation accepts the shipped configs and rejects mis-ordered schedules.
Check schedules(const std::filesystem::path& config_dir);

/// Runs every check belonging to `scope` (gradients, quantile, schedules,
/// all). Throws std::invalid_argument on an unknown scope.
std::vector<Check> run_scope(const std::string& scope, const std::filesystem::path& data_dir);

std::string format_table(const std::vector<Check>& checks);

}  // namespace tqpo::verify
