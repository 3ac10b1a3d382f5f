#pragma once

#include "tqpo/core.hpp"
#include "tqpo/mlp.hpp"
#include "tqpo/rng.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <utility>

namespace tqpo {

enum class HeadKind { categorical, gaussian };

inline constexpr double kLogStdMin = -5.0;
inline constexpr double kLogStdMax = 2.0;

/// Stochastic policy parameters. For the Gaussian head the network outputs
/// the mean and theta ends with one state-independent log standard deviation
/// per action dimension.
template <typename Scalar>
struct PolicyParamsT {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MlpArchitecture arch;
  HeadKind head = HeadKind::categorical;
  VectorX theta;

  Eigen::Index network_size() const { return arch.param_count(); }
  Eigen::Index expected_size() const {
    return arch.param_count() + (head == HeadKind::gaussian ? arch.output_dim : 0);
  }
  auto network() const { return theta.head(network_size()); }
  auto log_std_raw() const { return theta.tail(arch.output_dim); }
};

template <typename Scalar>
struct ValueParamsT {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  MlpArchitecture arch;
  VectorX phi;
};

using PolicyParams = PolicyParamsT<double>;
using ValueParams = ValueParamsT<double>;
using GradientVector = Vector;

/// Output of policy_forward: logits for the categorical head, mean and
/// clamped log standard deviation for the Gaussian head.
template <typename Scalar>
struct ActionDistributionT {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  HeadKind head = HeadKind::categorical;
  VectorX logits;
  VectorX mean;
  VectorX log_std;

  VectorX probabilities() const {
    const Scalar m = logits.maxCoeff();
    VectorX p = (logits.array() - m).exp().matrix();
    return p / p.sum();
  }
};

using ActionDistribution = ActionDistributionT<double>;

template <typename Scalar>
PolicyParamsT<Scalar> make_policy(MlpArchitecture arch, HeadKind head, CounterRng& rng,
                                  Scalar init_log_std = Scalar(-0.5)) {
  PolicyParamsT<Scalar> p;
  p.arch = std::move(arch);
  p.head = head;
  p.theta.setZero(p.expected_size());
  p.theta.head(p.network_size()) =
      Mlp<Scalar>::initialize(p.arch, rng, Scalar(std::sqrt(2.0)), Scalar(0.01));
  if (head == HeadKind::gaussian) p.theta.tail(p.arch.output_dim).setConstant(init_log_std);
  return p;
}

template <typename Scalar>
ValueParamsT<Scalar> make_value(MlpArchitecture arch, CounterRng& rng) {
  ValueParamsT<Scalar> v;
  v.arch = std::move(arch);
  v.phi = Mlp<Scalar>::initialize(v.arch, rng, Scalar(std::sqrt(2.0)), Scalar(1.0));
  return v;
}

namespace detail {

template <typename Scalar>
void check_policy(const PolicyParamsT<Scalar>& params) {
  if (params.theta.size() != params.expected_size()) {
    throw ShapeError("policy parameter count " + std::to_string(params.theta.size()) +
                     " does not match architecture (" + std::to_string(params.expected_size()) +
                     ")");
  }
}

template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> clamped_log_std(const PolicyParamsT<Scalar>& params) {
  return params.log_std_raw().cwiseMax(Scalar(kLogStdMin)).cwiseMin(Scalar(kLogStdMax));
}

template <typename Derived>
void require_finite(const Eigen::MatrixBase<Derived>& m, const char* what) {
  if (!m.allFinite()) throw NumericError(std::string("non-finite ") + what);
}

}  // namespace detail

template <typename Scalar>
ActionDistributionT<Scalar> policy_forward(const PolicyParamsT<Scalar>& params,
                                           const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& state) {
  detail::check_policy(params);
  using MatrixX = typename Mlp<Scalar>::MatrixX;
  const MatrixX out = Mlp<Scalar>::forward(params.arch, params.network(), state);
  ActionDistributionT<Scalar> dist;
  dist.head = params.head;
  if (params.head == HeadKind::categorical) {
    dist.logits = out.col(0);
  } else {
    dist.mean = out.col(0);
    dist.log_std = detail::clamped_log_std(params);
  }
  return dist;
}

/// Log density (or mass) of `action` and a column of the raw network output
/// gradient d log pi / d output, plus d log pi / d log_std.
template <typename Scalar>
Scalar head_log_prob(const ActionDistributionT<Scalar>& dist,
                     const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& action,
                     Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* d_output = nullptr,
                     Eigen::Matrix<Scalar, Eigen::Dynamic, 1>* d_log_std = nullptr) {
  using std::exp;
  using std::log;
  if (dist.head == HeadKind::categorical) {
    const int a = static_cast<int>(action(0));
    if (a < 0 || a >= dist.logits.size()) throw std::out_of_range("categorical action out of range");
    const Scalar m = dist.logits.maxCoeff();
    const Scalar lse = m + log((dist.logits.array() - m).exp().sum());
    if (d_output) {
      *d_output = -(dist.logits.array() - lse).exp().matrix();
      (*d_output)(a) += Scalar(1);
    }
    return dist.logits(a) - lse;
  }
  if (action.size() != dist.mean.size()) throw ShapeError("gaussian action dimension mismatch");
  const auto inv_std = (-dist.log_std.array()).exp();
  const auto z = (action.array() - dist.mean.array()) * inv_std;
  if (d_output) *d_output = (z * inv_std).matrix();
  if (d_log_std) *d_log_std = (z.square() - Scalar(1)).matrix();
  const Scalar half_log_2pi = Scalar(0.5) * log(Scalar(2) * std::numbers::pi_v<Scalar>);
  return (Scalar(-0.5) * z.square() - dist.log_std.array() - half_log_2pi).sum();
}

template <typename Scalar>
struct LogProbGrad {
  Scalar log_prob;
  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> grad;
};

/// log pi(a|s) and its exact gradient with respect to theta.
template <typename Scalar>
LogProbGrad<Scalar> log_prob_and_grad(const PolicyParamsT<Scalar>& params,
                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& state,
                                      const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& action) {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  detail::check_policy(params);
  typename Mlp<Scalar>::Cache cache;
  const auto out = Mlp<Scalar>::forward(params.arch, params.network(), state, &cache);
  ActionDistributionT<Scalar> dist;
  dist.head = params.head;
  if (params.head == HeadKind::categorical) {
    dist.logits = out.col(0);
  } else {
    dist.mean = out.col(0);
    dist.log_std = detail::clamped_log_std(params);
  }
  VectorX d_out;
  VectorX d_log_std;
  LogProbGrad<Scalar> result;
  result.log_prob = head_log_prob<Scalar>(dist, action, &d_out, &d_log_std);
  result.grad = VectorX::Zero(params.theta.size());
  result.grad.head(params.network_size()) =
      Mlp<Scalar>::backward(params.arch, params.network(), cache, d_out);
  if (params.head == HeadKind::gaussian) {
    const auto raw = params.log_std_raw();
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      const bool active = raw(i) > Scalar(kLogStdMin) && raw(i) < Scalar(kLogStdMax);
      result.grad(params.network_size() + i) = active ? d_log_std(i) : Scalar(0);
    }
  }
  if (!std::isfinite(static_cast<double>(result.log_prob)) || !result.grad.allFinite()) {
    throw NumericError("non-finite log-prob or gradient (|theta|_inf = " +
                       std::to_string(static_cast<double>(params.theta.cwiseAbs().maxCoeff())) +
                       ")");
  }
  return result;
}

/// Draws an action from the forward distribution. Categorical actions use
/// one uniform draw; Gaussian actions use one normal draw per dimension.
template <typename Scalar>
std::pair<Eigen::Matrix<Scalar, Eigen::Dynamic, 1>, Scalar> sample_action(
    const PolicyParamsT<Scalar>& params, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& state,
    CounterRng& rng) {
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  const auto dist = policy_forward(params, state);
  VectorX action;
  if (dist.head == HeadKind::categorical) {
    const VectorX p = dist.probabilities();
    const Scalar u = static_cast<Scalar>(rng.uniform());
    Scalar acc(0);
    Eigen::Index a = p.size() - 1;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
      acc += p(i);
      if (u < acc) {
        a = i;
        break;
      }
    }
    action = VectorX::Constant(1, static_cast<Scalar>(a));
  } else {
    action.resize(dist.mean.size());
    for (Eigen::Index i = 0; i < action.size(); ++i) {
      action(i) = dist.mean(i) + std::exp(dist.log_std(i)) * static_cast<Scalar>(rng.normal());
    }
  }
  const Scalar lp = head_log_prob<Scalar>(dist, action);
  return {action, lp};
}

template <typename Scalar>
Scalar value_forward(const ValueParamsT<Scalar>& params,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& state) {
  return Mlp<Scalar>::forward(params.arch, params.phi, state)(0, 0);
}

/// Gradient of V_phi(s) with respect to phi.
template <typename Scalar>
Eigen::Matrix<Scalar, Eigen::Dynamic, 1> value_grad(
    const ValueParamsT<Scalar>& params, const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& state) {
  typename Mlp<Scalar>::Cache cache;
  Mlp<Scalar>::forward(params.arch, params.phi, state, &cache);
  return Mlp<Scalar>::backward(params.arch, params.phi, cache,
                               Mlp<Scalar>::MatrixX::Ones(1, 1));
}

// Batched helpers over stacked transitions (columns are samples).

struct BatchView {
  Matrix states;       ///< state_dim x M
  Matrix next_states;  ///< state_dim x M
  Matrix actions;      ///< action_dim x M (categorical: 1 x M of indices)
  Vector old_log_probs;
  Vector rewards;
  Vector costs;
  std::vector<bool> terminal;
  std::vector<int> episode_of;      ///< transition -> episode index
  std::vector<int> step_of;         ///< transition -> time index within episode
  Vector return_to_go;              ///< discounted reward tail per transition
};

/// Flattens a batch in episode order.
BatchView flatten(const Batch& batch, double gamma);

/// log pi(a_j | s_j) for every column.
Vector batch_log_probs(const PolicyParams& params, const Matrix& states, const Matrix& actions);

/// Gradient of sum_j weights(j) * log pi(a_j | s_j).
GradientVector weighted_score(const PolicyParams& params, const Matrix& states,
                              const Matrix& actions, const Vector& weights);

/// Per-episode score sums: column i is sum_t grad log pi(a_t | s_t) over the
/// steps of episode i.
Matrix episode_score_sums(const PolicyParams& params, const Batch& batch);

Vector batch_values(const ValueParams& params, const Matrix& states);

struct LossGrad {
  double loss = 0.0;
  GradientVector grad;
};

/// Mean squared error of V_phi against discounted return-to-go targets over
/// every transition in the batch.
LossGrad value_loss_and_grad(const ValueParams& params, const Batch& batch, double gamma);
LossGrad value_loss_and_grad(const ValueParams& params, const Matrix& states,
                             const Vector& targets);

/// new = params + rate * grad.
template <typename Scalar>
PolicyParamsT<Scalar> apply_update(PolicyParamsT<Scalar> params,
                                   const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& grad,
                                   Scalar rate) {
  if (grad.size() != params.theta.size()) throw ShapeError("gradient length mismatch");
  params.theta += rate * grad;
  return params;
}

}  // namespace tqpo
