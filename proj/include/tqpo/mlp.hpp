#pragma once

#include "tqpo/core.hpp"
#include "tqpo/rng.hpp"

#include <Eigen/Core>
#include <Eigen/QR>

#include <cmath>
#include <vector>

namespace tqpo {

/// Fully connected tanh network with a linear output layer.
///
/// Parameter layout, layer by layer: the weight matrix (out x in, column
/// major) followed by the bias vector when `bias` is set. With no hidden
/// layers and no bias the network is a plain linear map, so a one-hot input
/// makes it a tabular softmax with theta[s * out + a] = W(a, s).
struct MlpArchitecture {
  int input_dim = 1;
  std::vector<int> hidden;
  int output_dim = 1;
  bool bias = true;

  std::vector<int> widths() const {
    std::vector<int> w{input_dim};
    w.insert(w.end(), hidden.begin(), hidden.end());
    w.push_back(output_dim);
    return w;
  }

  Eigen::Index param_count() const {
    const auto w = widths();
    Eigen::Index n = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      n += static_cast<Eigen::Index>(w[l]) * w[l + 1] + (bias ? w[l + 1] : 0);
    }
    return n;
  }

  friend bool operator==(const MlpArchitecture&, const MlpArchitecture&) = default;
};

template <typename Scalar>
class Mlp {
 public:
  using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  /// Post-activation outputs of every layer; front() is the input batch.
  struct Cache {
    std::vector<MatrixX> activations;
  };

  /// Columns of `inputs` are samples. Fills `cache` when non-null.
  static MatrixX forward(const MlpArchitecture& arch, const Eigen::Ref<const VectorX>& params,
                         const Eigen::Ref<const MatrixX>& inputs, Cache* cache = nullptr) {
    check(arch, params, inputs.rows());
    const auto w = arch.widths();
    const std::size_t n_layers = w.size() - 1;
    MatrixX a = inputs;
    if (cache) {
      cache->activations.clear();
      cache->activations.push_back(a);
    }
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      const auto [W, b_offset] = weights(params, offset, w[l + 1], w[l]);
      MatrixX z = W * a;
      if (arch.bias) {
        z.colwise() += params.segment(b_offset, w[l + 1]);
        offset = b_offset + w[l + 1];
      } else {
        offset = b_offset;
      }
      if (l + 1 < n_layers) z = z.array().tanh().matrix();
      a = std::move(z);
      if (cache) cache->activations.push_back(a);
    }
    return a;
  }

  /// Gradient of sum_j <output_grad(:, j), output(:, j)> with respect to the
  /// parameters, given the cache of the matching forward pass.
  static VectorX backward(const MlpArchitecture& arch, const Eigen::Ref<const VectorX>& params,
                          const Cache& cache, const Eigen::Ref<const MatrixX>& output_grad) {
    const auto w = arch.widths();
    const std::size_t n_layers = w.size() - 1;
    std::vector<Eigen::Index> offsets(n_layers);
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l < n_layers; ++l) {
      offsets[l] = offset;
      offset += static_cast<Eigen::Index>(w[l]) * w[l + 1] + (arch.bias ? w[l + 1] : 0);
    }

    VectorX grad = VectorX::Zero(params.size());
    MatrixX delta = output_grad;
    for (std::size_t l = n_layers; l-- > 0;) {
      const MatrixX& input = cache.activations[l];
      const Eigen::Index rows = w[l + 1];
      const Eigen::Index cols = w[l];
      Eigen::Map<MatrixX> gW(grad.data() + offsets[l], rows, cols);
      gW.noalias() = delta * input.transpose();
      if (arch.bias) grad.segment(offsets[l] + rows * cols, rows) = delta.rowwise().sum();
      if (l > 0) {
        const auto [W, unused] = weights(params, offsets[l], rows, cols);
        MatrixX back = W.transpose() * delta;
        // tanh'(z) = 1 - tanh(z)^2, and the cached activation is tanh(z).
        delta = back.array() * (Scalar(1) - input.array().square());
      }
    }
    return grad;
  }

  /// Orthogonal initialization: each weight matrix is the Q factor of a
  /// standard normal matrix scaled by `hidden_gain` (last layer:
  /// `output_gain`). Biases start at zero.
  static VectorX initialize(const MlpArchitecture& arch, CounterRng& rng, Scalar hidden_gain,
                            Scalar output_gain) {
    const auto w = arch.widths();
    VectorX params = VectorX::Zero(arch.param_count());
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l + 1 < w.size(); ++l) {
      const Eigen::Index rows = w[l + 1];
      const Eigen::Index cols = w[l];
      const Eigen::Index n = std::max(rows, cols);
      MatrixX g(n, n);
      for (Eigen::Index j = 0; j < n; ++j)
        for (Eigen::Index i = 0; i < n; ++i) g(i, j) = static_cast<Scalar>(rng.normal());
      Eigen::HouseholderQR<MatrixX> qr(g);
      MatrixX q = qr.householderQ() * MatrixX::Identity(n, n);
      // Fix the sign ambiguity of QR so the factor is a deterministic
      // function of the draws.
      const MatrixX r = qr.matrixQR().template triangularView<Eigen::Upper>();
      for (Eigen::Index j = 0; j < n; ++j) {
        if (r(j, j) < Scalar(0)) q.col(j) = -q.col(j);
      }
      const Scalar gain = (l + 2 == w.size()) ? output_gain : hidden_gain;
      Eigen::Map<MatrixX>(params.data() + offset, rows, cols) = gain * q.topLeftCorner(rows, cols);
      offset += rows * cols + (arch.bias ? rows : 0);
    }
    return params;
  }

 private:
  static void check(const MlpArchitecture& arch, const Eigen::Ref<const VectorX>& params,
                    Eigen::Index input_rows) {
    if (params.size() != arch.param_count()) {
      throw ShapeError("parameter count " + std::to_string(params.size()) +
                       " does not match architecture (" + std::to_string(arch.param_count()) +
                       ")");
    }
    if (input_rows != arch.input_dim) {
      throw ShapeError("input dimension " + std::to_string(input_rows) + " != " +
                       std::to_string(arch.input_dim));
    }
  }

  static std::pair<Eigen::Map<const MatrixX>, Eigen::Index> weights(
      const Eigen::Ref<const VectorX>& params, Eigen::Index offset, Eigen::Index rows,
      Eigen::Index cols) {
    return {Eigen::Map<const MatrixX>(params.data() + offset, rows, cols), offset + rows * cols};
  }
};

}  // namespace tqpo
