#include "tqpo/verify.hpp"

#include "tqpo/config.hpp"
#include "tqpo/constraint.hpp"
#include "tqpo/oracle.hpp"
#include "tqpo/policy.hpp"
#include "tqpo/quantile.hpp"
#include "tqpo/trainer.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

namespace tqpo::verify {

namespace {

Check finish(std::string id, double measured, std::string relation, double tolerance,
             std::string detail = {}) {
  Check c;
  c.id = std::move(id);
  c.measured = measured;
  c.relation = std::move(relation);
  c.tolerance = tolerance;
  c.passed = c.relation == "<=" ? measured <= tolerance : measured >= tolerance;
  c.detail = std::move(detail);
  return c;
}

PolicyParams tabular_policy(const ChainCostMDP& env, const Vector& theta) {
  const auto& tb = env.tables();
  PolicyParams p;
  p.arch = MlpArchitecture{tb.n_states, {}, tb.n_actions, false};
  p.head = HeadKind::categorical;
  p.theta = theta;
  return p;
}

Batch sample(const PolicyParams& policy, Environment& env, int episodes, std::uint64_t seed) {
  TrainerState probe;
  probe.policy = policy;
  probe.rng = CounterRng(seed);
  return collect_batch(probe, env, episodes, 1.0, 1.0);
}

double relative_error(const Vector& a, const Vector& b) {
  const double scale = std::max({a.norm(), b.norm(), 1e-8});
  return (a - b).norm() / scale;
}

}  // namespace

Check gradient_oracle(int draws, int episodes, std::uint64_t seed) {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const auto& tb = env.tables();
  const Eigen::Index n = static_cast<Eigen::Index>(tb.n_states) * tb.n_actions;
  CounterRng rng(seed);
  double worst = 1.0;
  std::string detail;
  for (int draw = 0; draw < draws; ++draw) {
    Vector theta(n);
    for (Eigen::Index i = 0; i < n; ++i) theta(i) = rng.normal();
    const auto dist =
        oracle::exact_cost_distribution(env, oracle::softmax_table(theta, tb.n_states, tb.n_actions), 1.0);
    // Between atoms F is smooth in theta; take the midpoint nearest the median.
    double q = 0.0;
    double best = std::numeric_limits<double>::infinity();
    for (double m : dist.midpoints()) {
      if (std::abs(dist.cdf(m) - 0.5) < best) {
        best = std::abs(dist.cdf(m) - 0.5);
        q = m;
      }
    }
    const auto fd = oracle::fd_cdf_gradient(env, theta, q, oracle::kDefaultFdStep, 1.0);
    const PolicyParams policy = tabular_policy(env, theta);
    const Batch batch = sample(policy, env, episodes, rng.next_u64());
    const Vector estimate = -cdf_gradient_estimate(batch, q, episode_score_sums(policy, batch));
    const double cosine = estimate.dot(fd.gradient) / (estimate.norm() * fd.gradient.norm());
    if (cosine < worst) {
      worst = cosine;
      detail = fmt::format("worst draw {} at q={}", draw, q);
    }
  }
  return finish("gradient.cdf_estimator_vs_enumeration", worst, ">=", 0.95, detail);
}

Check score_identity(int episodes, std::uint64_t seed) {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  CounterRng rng(seed);
  const PolicyParams policy = make_policy<double>(
      MlpArchitecture{env.spec().state_dim, {8}, env.spec().action_space.n, true}, HeadKind::categorical,
      rng);
  const Batch batch = sample(policy, env, episodes, rng.next_u64());
  const Matrix scores = episode_score_sums(policy, batch);
  const double n = static_cast<double>(scores.cols());
  const Vector mean = scores.rowwise().mean();
  const Vector var = ((scores.colwise() - mean).array().square().rowwise().sum() / (n - 1.0)).matrix();
  const double se = std::sqrt(var.sum() / n);
  return finish("gradient.score_identity", mean.norm() / se, "<=", 3.0,
                fmt::format("|mean|={:.3g}, se={:.3g}", mean.norm(), se));
}

Check quantile_atomic(int draws, std::uint64_t seed) {
  ChainCostMDP env = ChainCostMDP::default_chain(6);
  const auto& tb = env.tables();
  CounterRng rng(seed);
  std::vector<oracle::ExactCostDistribution> laws;
  // A hand-made law with well separated cumulative masses.
  laws.push_back({{{0.0, 0.3}, {1.0, 0.25}, {2.5, 0.2}, {4.0, 0.2}, {7.0, 0.05}}});
  laws.push_back(oracle::exact_cost_distribution(
      env, oracle::softmax_table(Vector::Zero(tb.n_states * tb.n_actions), tb.n_states, tb.n_actions),
      1.0));
  int mismatches = 0;
  int compared = 0;
  std::string detail;
  for (const auto& law : laws) {
    std::vector<double> cdf;
    double acc = 0.0;
    for (const auto& atom : law.support) cdf.push_back(acc += atom.second);
    std::vector<double> samples(static_cast<std::size_t>(draws));
    for (auto& x : samples) {
      const double u = rng.uniform();
      const auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
      const auto idx = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
      x = law.support[idx].first;
    }
    for (double level : {0.1, 0.25, 0.5, 0.75, 0.9, 0.95, 0.99}) {
      // Skip levels within sampling noise of a cumulative mass; there the
      // exact quantile is not identifiable from a finite sample.
      const bool ambiguous = std::any_of(cdf.begin(), cdf.end(), [&](double c) {
        return std::abs(c - level) < 5.0 * std::sqrt(level * (1 - level) / draws) + 1e-12;
      });
      if (ambiguous) continue;
      ++compared;
      const double emp = empirical_quantile(samples, level);
      const double exact = oracle::exact_quantile(law, level);
      if (emp != exact) {
        ++mismatches;
        detail += fmt::format("level {}: {} vs {}; ", level, emp, exact);
      }
    }
  }
  if (detail.empty()) detail = fmt::format("{} levels compared", compared);
  return finish("quantile.atomic_exact", mismatches, "<=", 0.0, detail);
}

Check quantile_exponential(int n, std::uint64_t seed) {
  CounterRng rng(seed);
  std::vector<double> xs(static_cast<std::size_t>(n));
  for (auto& x : xs) x = -std::log(rng.uniform_open());
  const double emp = empirical_quantile(xs, 0.95);
  return finish("quantile.exponential_95", std::abs(emp - std::log(20.0)), "<=", 0.05,
                fmt::format("empirical {:.5f} vs ln 20", emp));
}

Check tracker_convergence(int updates, std::uint64_t seed) {
  CounterRng rng(seed);
  const ScheduleSpec alpha{0.5, 0.6, 0.0};
  const double target = 2.3;
  double worst = 0.0;
  // A constant stream and a stream with zero-mean noise around the target.
  for (double noise : {0.0, 0.01}) {
    QuantileTracker t{50.0, 0.9, 0};
    for (int k = 0; k < updates; ++k) {
      const double q_hat = target + noise * rng.normal();
      t = tracker_update(t, q_hat, alpha.rate(static_cast<std::uint64_t>(k)));
    }
    worst = std::max(worst, std::abs(t.q_current - target));
  }
  return finish("quantile.tracker_convergence", worst, "<=", 1e-3,
                fmt::format("{} updates from q0=50", updates));
}

Check tilt_identities(int pairs, std::uint64_t seed) {
  CounterRng rng(seed);
  double worst_ulps = 0.0;
  int direction_failures = 0;
  for (int i = 0; i < pairs; ++i) {
    const double F = rng.uniform();
    const double delta = rng.uniform_open();
    const auto r = tilted_rates(F, delta);
    const double target = (1.0 + 2.0 * delta) / (1.0 + delta);
    const double ulps =
        std::abs(r.eta_plus + r.eta_minus - target) / (std::numeric_limits<double>::epsilon() * target);
    worst_ulps = std::max(worst_ulps, ulps);
    if (F < 0.5 && !(r.eta_minus > r.eta_plus)) ++direction_failures;
    if (F > 0.5 && !(r.eta_plus > r.eta_minus)) ++direction_failures;
  }
  Check c = finish("constraint.tilt_identity", worst_ulps, "<=", 4.0,
                   fmt::format("direction failures: {}", direction_failures));
  c.passed = c.passed && direction_failures == 0;
  return c;
}

Check multiplier_nonnegative(int updates, std::uint64_t seed) {
  CounterRng rng(seed);
  double smallest = std::numeric_limits<double>::infinity();
  for (TiltMode mode : {TiltMode::tilted, TiltMode::plain, TiltMode::fixed}) {
    TiltedMultiplier m;
    m.mode = mode;
    TiltedMultiplier e;
    for (int i = 0; i < updates; ++i) {
      const double q = 30.0 * rng.uniform();
      const double eta = 10.0 * rng.uniform();
      m = multiplier_update(m, q, 15.0, eta, rng.uniform());
      e = expectation_multiplier_update(e, q, 15.0, eta);
      smallest = std::min({smallest, m.lambda, e.lambda});
    }
  }
  return finish("constraint.lambda_nonnegative", smallest, ">=", 0.0);
}

namespace {

template <typename LossFn>
Vector central_difference(const Vector& x, double h, LossFn&& f) {
  Vector g(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    Vector plus = x;
    Vector minus = x;
    plus(i) += h;
    minus(i) -= h;
    g(i) = (f(plus) - f(minus)) / (2.0 * h);
  }
  return g;
}

Vector random_vector(CounterRng& rng, int n) {
  Vector v(n);
  for (int i = 0; i < n; ++i) v(i) = rng.normal();
  return v;
}

}  // namespace

Check fd_policy_categorical(int draws, std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  for (int draw = 0; draw < draws; ++draw) {
    const MlpArchitecture arch{4, {6, 5}, 3, true};
    PolicyParams p = make_policy<double>(arch, HeadKind::categorical, rng);
    p.theta += 0.5 * random_vector(rng, static_cast<int>(p.theta.size()));
    const Vector s = random_vector(rng, 4);
    Vector a(1);
    a(0) = static_cast<double>(rng.below(3));
    const Vector analytic = log_prob_and_grad(p, s, a).grad;
    const Vector numeric = central_difference(p.theta, 1e-6, [&](const Vector& th) {
      PolicyParams q = p;
      q.theta = th;
      return log_prob_and_grad(q, s, a).log_prob;
    });
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return finish("gradient.fd_policy_categorical", worst, "<=", 1e-4);
}

Check fd_policy_gaussian(int draws, std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  for (int draw = 0; draw < draws; ++draw) {
    const MlpArchitecture arch{5, {7}, 2, true};
    PolicyParams p = make_policy<double>(arch, HeadKind::gaussian, rng, -0.3);
    p.theta += 0.5 * random_vector(rng, static_cast<int>(p.theta.size()));
    // Keep log-std inside the clamp so the density is differentiable there.
    p.theta.tail(2) = p.theta.tail(2).cwiseMax(-4.0).cwiseMin(1.5);
    const Vector s = random_vector(rng, 5);
    const Vector a = random_vector(rng, 2);
    const Vector analytic = log_prob_and_grad(p, s, a).grad;
    const Vector numeric = central_difference(p.theta, 1e-6, [&](const Vector& th) {
      PolicyParams q = p;
      q.theta = th;
      return log_prob_and_grad(q, s, a).log_prob;
    });
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return finish("gradient.fd_policy_gaussian", worst, "<=", 1e-4);
}

Check fd_value_loss(int draws, std::uint64_t seed) {
  CounterRng rng(seed);
  double worst = 0.0;
  for (int draw = 0; draw < draws; ++draw) {
    const MlpArchitecture arch{3, {8, 4}, 1, true};
    ValueParams v = make_value<double>(arch, rng);
    Matrix states(3, 12);
    for (Eigen::Index j = 0; j < states.cols(); ++j) states.col(j) = random_vector(rng, 3);
    const Vector targets = 3.0 * random_vector(rng, 12);
    const Vector analytic = value_loss_and_grad(v, states, targets).grad;
    const Vector numeric = central_difference(v.phi, 1e-6, [&](const Vector& phi) {
      ValueParams w = v;
      w.phi = phi;
      return value_loss_and_grad(w, states, targets).loss;
    });
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return finish("gradient.fd_value_loss", worst, "<=", 1e-4);
}

Check fixture(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) return finish("oracle.fixture", 1.0, "<=", 0.0, "cannot open " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  try {
    const auto f = oracle::fixture_from_json(os.str());
    const ChainCostMDP env = ChainCostMDP::default_chain(f.horizon);
    const auto check = oracle::check_fixture(f, env);
    std::string detail = check.ok ? path.filename().string() : "";
    for (const auto& msg : check.failures) detail += msg + "; ";
    return finish("oracle.fixture", static_cast<double>(check.failures.size()), "<=", 0.0, detail);
  } catch (const std::exception& e) {
    return finish("oracle.fixture", 1.0, "<=", 0.0, e.what());
  }
}

Check schedules(const std::filesystem::path& config_dir) {
  int problems = 0;
  std::string detail;
  int loaded = 0;
  if (std::filesystem::is_directory(config_dir)) {
    for (const auto& entry : std::filesystem::directory_iterator(config_dir)) {
      if (entry.path().extension() != ".ini") continue;
      try {
        (void)load_run_config(entry.path());
        ++loaded;
      } catch (const std::exception& e) {
        ++problems;
        detail += entry.path().filename().string() + ": " + e.what() + "; ";
      }
    }
  }
  RunConfig bad;
  bad.env.preset = "chain_default";
  bad.schedule_beta.decay_exponent = bad.schedule_alpha.decay_exponent;
  if (validate_schedules(bad).ok()) {
    ++problems;
    detail += "equal beta/alpha exponents accepted; ";
  }
  bad = RunConfig{};
  bad.env.preset = "chain_default";
  bad.schedule_eta.decay_exponent = 0.5;
  if (validate_schedules(bad).ok()) {
    ++problems;
    detail += "eta exponent 0.5 accepted; ";
  }
  if (detail.empty()) detail = fmt::format("{} shipped configs valid", loaded);
  return finish("schedules.validation", problems, "<=", 0.0, detail);
}

std::vector<Check> run_scope(const std::string& scope, const std::filesystem::path& data_dir) {
  const bool all = scope == "all";
  if (!all && scope != "gradients" && scope != "quantile" && scope != "schedules") {
    throw std::invalid_argument("unknown scope '" + scope + "'");
  }
  std::vector<Check> out;
  if (all || scope == "gradients") {
    out.push_back(gradient_oracle());
    out.push_back(score_identity());
    out.push_back(fd_policy_categorical());
    out.push_back(fd_policy_gaussian());
    out.push_back(fd_value_loss());
  }
  if (all || scope == "quantile") {
    out.push_back(fixture(data_dir / "fixtures" / "oracle_chain_default.json"));
    out.push_back(quantile_atomic());
    out.push_back(quantile_exponential());
    out.push_back(tracker_convergence());
  }
  if (all || scope == "schedules") {
    out.push_back(schedules(data_dir / "configs"));
    out.push_back(tilt_identities());
    out.push_back(multiplier_nonnegative());
  }
  return out;
}

std::string format_table(const std::vector<Check>& checks) {
  std::string out = fmt::format("{:<4} {:<40} {:>12} {:>2} {:<10} {}\n", "", "check", "measured", "",
                                "tolerance", "detail");
  for (const auto& c : checks) {
    out += fmt::format("{:<4} {:<40} {:>12.5g} {:>2} {:<10.3g} {}\n", c.passed ? "PASS" : "FAIL",
                       c.id, c.measured, c.relation, c.tolerance, c.detail);
  }
  return out;
}

}  // namespace tqpo::verify
