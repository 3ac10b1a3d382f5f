#include "tqpo/oracle.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <map>

namespace tqpo::oracle {

namespace {

bool same_atom(double a, double b) {
  return std::abs(a - b) <= kAtomTolerance * std::max({1.0, std::abs(a), std::abs(b)});
}

void check_tabular(const ChainCostMDP& env, const Vector& theta) {
  const auto& tb = env.tables();
  if (theta.size() != static_cast<Eigen::Index>(tb.n_states) * tb.n_actions) {
    throw ShapeError("tabular theta must have n_states * n_actions entries");
  }
  if (static_cast<std::size_t>(theta.size()) > kMaxTabularParams) {
    throw SizeError("tabular oracle supports at most 200 parameters");
  }
}

}  // namespace

double ExactCostDistribution::cdf(double q) const {
  double acc = 0.0;
  for (const auto& [c, p] : support) {
    if (c > q) break;
    acc += p;
  }
  return acc;
}

double ExactCostDistribution::total_mass() const {
  double acc = 0.0;
  for (const auto& atom : support) acc += atom.second;
  return acc;
}

std::vector<double> ExactCostDistribution::midpoints() const {
  std::vector<double> out;
  for (std::size_t i = 0; i + 1 < support.size(); ++i) {
    out.push_back(0.5 * (support[i].first + support[i + 1].first));
  }
  return out;
}

Matrix softmax_table(const Vector& theta, int n_states, int n_actions) {
  Matrix table(n_states, n_actions);
  for (int s = 0; s < n_states; ++s) {
    double m = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < n_actions; ++a) m = std::max(m, theta(s * n_actions + a));
    double z = 0.0;
    for (int a = 0; a < n_actions; ++a) {
      table(s, a) = std::exp(theta(s * n_actions + a) - m);
      z += table(s, a);
    }
    table.row(s) /= z;
  }
  return table;
}

ExactCostDistribution exact_cost_distribution(const ChainCostMDP& env, const Matrix& policy_table,
                                              double gamma_cost, std::size_t cap) {
  const auto trajectories = enumerate_trajectories(env, policy_table, 1.0, gamma_cost, cap);
  std::vector<std::pair<double, double>> raw;
  raw.reserve(trajectories.size());
  for (const auto& t : trajectories) raw.emplace_back(t.cumulative_cost, t.probability);
  std::sort(raw.begin(), raw.end());

  ExactCostDistribution dist;
  for (const auto& [c, p] : raw) {
    if (!dist.support.empty() && same_atom(dist.support.back().first, c)) {
      dist.support.back().second += p;
    } else {
      dist.support.emplace_back(c, p);
    }
  }
  return dist;
}

double exact_quantile(const ExactCostDistribution& dist, double level) {
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("exact_quantile: level must lie in (0,1)");
  if (dist.support.empty()) throw std::invalid_argument("exact_quantile: empty distribution");
  double acc = 0.0;
  for (const auto& [c, p] : dist.support) {
    acc += p;
    if (acc >= level) return c;
  }
  return dist.support.back().first;
}

double exact_cdf(const ChainCostMDP& env, const Vector& theta, double q, double gamma_cost) {
  check_tabular(env, theta);
  const auto& tb = env.tables();
  return exact_cost_distribution(env, softmax_table(theta, tb.n_states, tb.n_actions), gamma_cost)
      .cdf(q);
}

FdGradient fd_cdf_gradient(const ChainCostMDP& env, const Vector& theta, double q, double step,
                           double gamma_cost) {
  check_tabular(env, theta);
  if (!(step > 0.0)) throw std::invalid_argument("fd_cdf_gradient: step must be > 0");
  const auto& tb = env.tables();
  FdGradient out;
  out.gradient = Vector::Zero(theta.size());
  for (Eigen::Index i = 0; i < theta.size(); ++i) {
    Vector plus = theta;
    Vector minus = theta;
    plus(i) += step;
    minus(i) -= step;
    const auto dp =
        exact_cost_distribution(env, softmax_table(plus, tb.n_states, tb.n_actions), gamma_cost);
    const auto dm =
        exact_cost_distribution(env, softmax_table(minus, tb.n_states, tb.n_actions), gamma_cost);
    const bool on_atom = std::any_of(dp.support.begin(), dp.support.end(),
                                     [q](const auto& a) { return same_atom(a.first, q); });
    if (on_atom) out.flagged.push_back(static_cast<int>(i));
    out.gradient(i) = (dp.cdf(q) - dm.cdf(q)) / (2.0 * step);
  }
  return out;
}

Vector exact_score_expectation(const ChainCostMDP& env, const Vector& theta) {
  check_tabular(env, theta);
  const auto& tb = env.tables();
  const Matrix table = softmax_table(theta, tb.n_states, tb.n_actions);
  const auto trajectories = enumerate_trajectories(env, table, 1.0, 1.0);
  Vector acc = Vector::Zero(theta.size());
  for (const auto& t : trajectories) {
    Vector score = Vector::Zero(theta.size());
    for (std::size_t k = 0; k < t.states.size(); ++k) {
      const int s = t.states[k];
      for (int a = 0; a < tb.n_actions; ++a) score(s * tb.n_actions + a) -= table(s, a);
      score(s * tb.n_actions + t.actions[k]) += 1.0;
    }
    acc += t.probability * score;
  }
  return acc;
}

// ---------------------------------------------------------------------------
// Fixtures

Fixture build_fixture(const ChainCostMDP& env) {
  const auto& tb = env.tables();
  const Eigen::Index n = static_cast<Eigen::Index>(tb.n_states) * tb.n_actions;
  Fixture f;
  f.env_name = env.spec().name;
  f.horizon = env.horizon();

  Vector tilted(n);
  for (Eigen::Index i = 0; i < n; ++i) tilted(i) = 0.25 * static_cast<double>((i % 5) - 2);
  Vector cautious = Vector::Zero(n);
  for (int s = 0; s < tb.n_states; ++s) cautious(s * tb.n_actions) = 1.0;

  const std::pair<const char*, Vector> thetas[] = {
      {"uniform", Vector::Zero(n)}, {"tilted", tilted}, {"cautious", cautious}};
  for (const auto& [name, theta] : thetas) {
    Fixture::Case c;
    c.name = name;
    c.theta = theta;
    c.gamma_cost = 1.0;
    c.distribution = exact_cost_distribution(
        env, softmax_table(theta, tb.n_states, tb.n_actions), c.gamma_cost);
    for (double level : {0.5, 0.9, 0.95}) {
      c.quantiles.emplace_back(level, exact_quantile(c.distribution, level));
    }
    f.cases.push_back(std::move(c));
  }
  return f;
}

std::string fixture_to_json(const Fixture& f) {
  nlohmann::ordered_json j;
  j["format"] = "tqpo-oracle-fixture";
  j["format_version"] = Fixture::kFormatVersion;
  j["env"] = f.env_name;
  j["horizon"] = f.horizon;
  j["cases"] = nlohmann::ordered_json::array();
  for (const auto& c : f.cases) {
    nlohmann::ordered_json jc;
    jc["name"] = c.name;
    jc["theta"] = std::vector<double>(c.theta.data(), c.theta.data() + c.theta.size());
    jc["gamma_cost"] = c.gamma_cost;
    auto support = nlohmann::ordered_json::array();
    for (const auto& [x, p] : c.distribution.support) support.push_back({x, p});
    jc["support"] = support;
    auto quantiles = nlohmann::ordered_json::array();
    for (const auto& [level, q] : c.quantiles) quantiles.push_back({level, q});
    jc["quantiles"] = quantiles;
    j["cases"].push_back(jc);
  }
  return j.dump(2) + "\n";
}

Fixture fixture_from_json(const std::string& text) {
  try {
    const auto j = nlohmann::json::parse(text);
    if (j.at("format").get<std::string>() != "tqpo-oracle-fixture") {
      throw ConfigError("not an oracle fixture");
    }
    const int version = j.at("format_version").get<int>();
    if (version != Fixture::kFormatVersion) {
      throw ConfigError("unsupported fixture format_version " + std::to_string(version));
    }
    Fixture f;
    f.env_name = j.at("env").get<std::string>();
    f.horizon = j.at("horizon").get<int>();
    for (const auto& jc : j.at("cases")) {
      Fixture::Case c;
      c.name = jc.at("name").get<std::string>();
      const auto theta = jc.at("theta").get<std::vector<double>>();
      c.theta = Eigen::Map<const Vector>(theta.data(), static_cast<Eigen::Index>(theta.size()));
      c.gamma_cost = jc.at("gamma_cost").get<double>();
      for (const auto& atom : jc.at("support")) {
        c.distribution.support.emplace_back(atom.at(0).get<double>(), atom.at(1).get<double>());
      }
      for (const auto& q : jc.at("quantiles")) {
        c.quantiles.emplace_back(q.at(0).get<double>(), q.at(1).get<double>());
      }
      f.cases.push_back(std::move(c));
    }
    return f;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed oracle fixture: ") + e.what());
  }
}

FixtureCheck check_fixture(const Fixture& f, const ChainCostMDP& env, double tol) {
  FixtureCheck check;
  auto fail = [&check](std::string msg) {
    check.ok = false;
    check.failures.push_back(std::move(msg));
  };
  if (f.horizon != env.horizon()) fail("fixture horizon differs from environment horizon");
  const auto& tb = env.tables();
  for (const auto& c : f.cases) {
    if (c.theta.size() != static_cast<Eigen::Index>(tb.n_states) * tb.n_actions) {
      fail(c.name + ": theta has wrong length");
      continue;
    }
    const auto dist = exact_cost_distribution(
        env, softmax_table(c.theta, tb.n_states, tb.n_actions), c.gamma_cost);
    if (dist.support.size() != c.distribution.support.size()) {
      fail(c.name + ": atom count " + std::to_string(c.distribution.support.size()) +
           " != recomputed " + std::to_string(dist.support.size()));
      continue;
    }
    for (std::size_t i = 0; i < dist.support.size(); ++i) {
      if (std::abs(dist.support[i].first - c.distribution.support[i].first) > tol ||
          std::abs(dist.support[i].second - c.distribution.support[i].second) > tol) {
        fail(c.name + ": atom " + std::to_string(i) + " differs");
      }
    }
    if (std::abs(c.distribution.total_mass() - 1.0) > tol) fail(c.name + ": mass does not sum to 1");
    for (const auto& [level, q] : c.quantiles) {
      if (std::abs(exact_quantile(dist, level) - q) > tol) {
        fail(c.name + ": quantile at level " + std::to_string(level) + " differs");
      }
    }
  }
  return check;
}

}  // namespace tqpo::oracle
