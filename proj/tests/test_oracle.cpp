#include <doctest.h>

#include "tqpo/oracle.hpp"
#include "tqpo/verify.hpp"

#include <fstream>
#include <sstream>

using namespace tqpo;
using namespace tqpo::oracle;

namespace {

ChainCostMDP deterministic_chain() {
  ChainCostMDP::Tables t;
  t.n_states = 2;
  t.n_actions = 2;
  const Vector to_second = (Vector(2) << 0, 1).finished();
  t.transition = {to_second, to_second, to_second, to_second};
  t.reward = Matrix::Zero(2, 2);
  t.cost = (Matrix(2, 2) << 1.0, 1.0, 2.0, 2.0).finished();
  return ChainCostMDP(t, 3);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("a deterministic chain has a single atom") {
  const auto env = deterministic_chain();
  const auto d = exact_cost_distribution(env, Matrix::Constant(2, 2, 0.5), 1.0);
  REQUIRE(d.support.size() == 1);
  CHECK(d.support[0].first == doctest::Approx(5.0));
  CHECK(d.support[0].second == doctest::Approx(1.0));
  for (double level : {0.1, 0.5, 0.99}) CHECK(exact_quantile(d, level) == doctest::Approx(5.0));
}

TEST_CASE("two-point law quantiles") {
  ExactCostDistribution a{{{0.0, 0.94}, {10.0, 0.06}}};
  CHECK(exact_quantile(a, 0.95) == 10.0);
  ExactCostDistribution b{{{0.0, 0.95}, {10.0, 0.05}}};
  CHECK(exact_quantile(b, 0.95) == 0.0);
  CHECK(b.cdf(-1.0) == 0.0);
  CHECK(b.cdf(0.0) == doctest::Approx(0.95));
  CHECK(b.cdf(10.0) == doctest::Approx(1.0));
  CHECK(b.midpoints() == std::vector<double>{5.0});
}

TEST_CASE("exact distributions of the default chain") {
  const auto env = ChainCostMDP::default_chain(6);
  const Matrix uniform = Matrix::Constant(5, 2, 0.5);
  const auto d = exact_cost_distribution(env, uniform, 1.0);
  CHECK(d.total_mass() == doctest::Approx(1.0).epsilon(1e-12));
  for (std::size_t i = 1; i < d.support.size(); ++i) CHECK(d.support[i - 1].first < d.support[i].first);

  const Vector theta = Vector::Zero(10);
  CHECK(softmax_table(theta, 5, 2).isApprox(uniform));
  const double q = d.midpoints().front();
  CHECK(exact_cdf(env, theta, q, 1.0) == doctest::Approx(d.cdf(q)));
}

TEST_CASE("finite-difference CDF gradient structure") {
  // With horizon 1 only the first state's logits can move F.
  const auto env = ChainCostMDP::default_chain(1);
  CounterRng rng(3);
  Vector theta(10);
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = rng.normal();
  const auto d = exact_cost_distribution(env, softmax_table(theta, 5, 2), 1.0);
  const double q = d.midpoints().front();
  const auto g = fd_cdf_gradient(env, theta, q, kDefaultFdStep, 1.0);
  CHECK(g.flagged.empty());
  CHECK(g.gradient.segment(2, 8).isZero(1e-12));
  CHECK(g.gradient(0) != 0.0);
  // Adding a constant to a softmax row changes nothing.
  CHECK(g.gradient(0) == doctest::Approx(-g.gradient(1)));

  const auto env6 = ChainCostMDP::default_chain(6);
  const auto g6 = fd_cdf_gradient(env6, theta, exact_cost_distribution(env6, softmax_table(theta, 5, 2), 1.0).midpoints()[1],
                                  kDefaultFdStep, 1.0);
  for (int s = 0; s < 5; ++s) CHECK(g6.gradient(2 * s) == doctest::Approx(-g6.gradient(2 * s + 1)).epsilon(1e-6));
}

TEST_CASE("score expectation vanishes under enumeration") {
  const auto env = ChainCostMDP::default_chain(6);
  CounterRng rng(5);
  Vector theta(10);
  for (Eigen::Index i = 0; i < theta.size(); ++i) theta(i) = rng.normal();
  CHECK(exact_score_expectation(env, theta).norm() < 1e-10);
}

TEST_CASE("fixture round-trip and corruption detection") {
  const auto env = ChainCostMDP::default_chain(6);
  const Fixture f = build_fixture(env);
  const Fixture back = fixture_from_json(fixture_to_json(f));
  CHECK(back.cases.size() == f.cases.size());
  CHECK(check_fixture(back, env).ok);

  Fixture bad = back;
  bad.cases[0].quantiles[0].second += 1.0;
  const auto res = check_fixture(bad, env);
  CHECK_FALSE(res.ok);
  CHECK_FALSE(res.failures.empty());

  CHECK_THROWS_AS(fixture_from_json("{}"), ConfigError);
  CHECK_THROWS_AS(fixture_from_json("not json"), ConfigError);
}

TEST_CASE("the shipped fixture matches a fresh enumeration") {
  const std::string path = std::string(TQPO_DATA_DIR) + "/fixtures/oracle_chain_default.json";
  const Fixture f = fixture_from_json(read_file(path));
  const auto res = check_fixture(f, ChainCostMDP::default_chain(f.horizon));
  CHECK_MESSAGE(res.ok, (res.failures.empty() ? "" : res.failures.front()));
  CHECK(verify::fixture(path).passed);
}
