#include "tqpo/policy.hpp"

namespace tqpo {

namespace {

struct BatchHeadTerms {
  Vector log_probs;
  Matrix d_output;    // d log pi / d network output, weighted
  Vector d_log_std;   // summed, weighted
};

BatchHeadTerms head_terms(const PolicyParams& params, const Matrix& out, const Matrix& actions,
                          const Vector* weights) {
  const Eigen::Index M = out.cols();
  BatchHeadTerms t;
  t.log_probs.resize(M);
  if (weights) t.d_output.resize(out.rows(), M);

  if (params.head == HeadKind::categorical) {
    for (Eigen::Index j = 0; j < M; ++j) {
      const auto logits = out.col(j);
      const int a = static_cast<int>(actions(0, j));
      if (a < 0 || a >= logits.size()) throw std::out_of_range("categorical action out of range");
      const double m = logits.maxCoeff();
      const double lse = m + std::log((logits.array() - m).exp().sum());
      t.log_probs(j) = logits(a) - lse;
      if (weights) {
        t.d_output.col(j) = -(logits.array() - lse).exp().matrix();
        t.d_output(a, j) += 1.0;
        t.d_output.col(j) *= (*weights)(j);
      }
    }
    return t;
  }

  if (actions.rows() != out.rows()) throw ShapeError("gaussian action dimension mismatch");
  const Vector log_std = detail::clamped_log_std(params);
  const Vector inv_std = (-log_std.array()).exp();
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  const Matrix z = ((actions - out).array().colwise() * inv_std.array()).matrix();
  t.log_probs = (-0.5 * z.array().square()).colwise().sum().transpose();
  t.log_probs.array() -= log_std.sum() + half_log_2pi * static_cast<double>(out.rows());
  if (weights) {
    t.d_output = (z.array().colwise() * inv_std.array()).matrix();
    t.d_output.array().rowwise() *= weights->transpose().array();
    t.d_log_std = ((z.array().square() - 1.0).rowwise() * weights->transpose().array())
                      .rowwise()
                      .sum()
                      .matrix();
  }
  return t;
}

}  // namespace

BatchView flatten(const Batch& batch, double gamma) {
  const auto M = static_cast<Eigen::Index>(batch.transition_count());
  if (M == 0) throw ShapeError("cannot flatten an empty batch");
  const auto& first = batch.episodes.front().transitions.front();
  BatchView v;
  v.states.resize(first.state.size(), M);
  v.next_states.resize(first.state.size(), M);
  v.actions.resize(first.action.size(), M);
  v.old_log_probs.resize(M);
  v.rewards.resize(M);
  v.costs.resize(M);
  v.return_to_go.resize(M);
  v.terminal.resize(static_cast<std::size_t>(M));
  v.episode_of.resize(static_cast<std::size_t>(M));
  v.step_of.resize(static_cast<std::size_t>(M));

  Eigen::Index j = 0;
  for (std::size_t i = 0; i < batch.episodes.size(); ++i) {
    const auto& e = batch.episodes[i];
    const auto rtg = return_to_go(e, gamma);
    for (std::size_t t = 0; t < e.length(); ++t, ++j) {
      const auto& tr = e.transitions[t];
      v.states.col(j) = tr.state;
      v.actions.col(j) = tr.action;
      v.old_log_probs(j) = tr.log_prob;
      v.rewards(j) = tr.reward;
      v.costs(j) = tr.cost;
      v.return_to_go(j) = rtg[t];
      const bool last = t + 1 == e.length();
      v.terminal[static_cast<std::size_t>(j)] = last;
      // The successor of the final step is never needed (V = 0 there).
      v.next_states.col(j) = last ? tr.state : e.transitions[t + 1].state;
      v.episode_of[static_cast<std::size_t>(j)] = static_cast<int>(i);
      v.step_of[static_cast<std::size_t>(j)] = static_cast<int>(t);
    }
  }
  return v;
}

Vector batch_log_probs(const PolicyParams& params, const Matrix& states, const Matrix& actions) {
  detail::check_policy(params);
  const Matrix out = Mlp<double>::forward(params.arch, params.network(), states);
  return head_terms(params, out, actions, nullptr).log_probs;
}

GradientVector weighted_score(const PolicyParams& params, const Matrix& states,
                              const Matrix& actions, const Vector& weights) {
  detail::check_policy(params);
  if (weights.size() != states.cols() || actions.cols() != states.cols()) {
    throw ShapeError("weighted_score: column counts differ");
  }
  Mlp<double>::Cache cache;
  const Matrix out = Mlp<double>::forward(params.arch, params.network(), states, &cache);
  const auto terms = head_terms(params, out, actions, &weights);
  GradientVector grad = GradientVector::Zero(params.theta.size());
  grad.head(params.network_size()) =
      Mlp<double>::backward(params.arch, params.network(), cache, terms.d_output);
  if (params.head == HeadKind::gaussian) {
    const auto raw = params.log_std_raw();
    for (Eigen::Index i = 0; i < raw.size(); ++i) {
      const bool active = raw(i) > kLogStdMin && raw(i) < kLogStdMax;
      grad(params.network_size() + i) = active ? terms.d_log_std(i) : 0.0;
    }
  }
  detail::require_finite(grad, "policy gradient");
  return grad;
}

Matrix episode_score_sums(const PolicyParams& params, const Batch& batch) {
  Matrix sums(params.theta.size(), static_cast<Eigen::Index>(batch.size()));
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& e = batch.episodes[i];
    if (e.length() == 0) throw ShapeError("empty episode in batch");
    const auto n = static_cast<Eigen::Index>(e.length());
    Matrix states(e.transitions.front().state.size(), n);
    Matrix actions(e.transitions.front().action.size(), n);
    for (Eigen::Index t = 0; t < n; ++t) {
      states.col(t) = e.transitions[static_cast<std::size_t>(t)].state;
      actions.col(t) = e.transitions[static_cast<std::size_t>(t)].action;
    }
    sums.col(static_cast<Eigen::Index>(i)) =
        weighted_score(params, states, actions, Vector::Ones(n));
  }
  return sums;
}

Vector batch_values(const ValueParams& params, const Matrix& states) {
  return Mlp<double>::forward(params.arch, params.phi, states).row(0).transpose();
}

LossGrad value_loss_and_grad(const ValueParams& params, const Matrix& states,
                             const Vector& targets) {
  if (states.cols() == 0) throw ShapeError("value loss on an empty batch");
  if (targets.size() != states.cols()) throw ShapeError("value targets length mismatch");
  Mlp<double>::Cache cache;
  const Matrix out = Mlp<double>::forward(params.arch, params.phi, states, &cache);
  const Vector residual = out.row(0).transpose() - targets;
  const double m = static_cast<double>(states.cols());
  LossGrad lg;
  lg.loss = residual.squaredNorm() / m;
  const Matrix d_out = (2.0 / m) * residual.transpose();
  lg.grad = Mlp<double>::backward(params.arch, params.phi, cache, d_out);
  if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
    throw NumericError("non-finite value loss or gradient");
  }
  return lg;
}

LossGrad value_loss_and_grad(const ValueParams& params, const Batch& batch, double gamma) {
  if (batch.size() == 0) throw ShapeError("value loss on an empty batch");
  const BatchView v = flatten(batch, gamma);
  return value_loss_and_grad(params, v.states, v.return_to_go);
}

}  // namespace tqpo
