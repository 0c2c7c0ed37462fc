#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "stagecf/random.hpp"

namespace stagecf {

struct NetworkShape {
  std::size_t n_items = 0;
  /// Encoder widths; the decoder mirrors them, so [600, 200] gives
  /// n -> 600 -> 200 -> 600 -> n.
  std::vector<std::size_t> hidden{1000};
  std::size_t time_dim = 16;
  int stage_count = 300;  // K, used to scale inputs to [0, 1]

  /// Full list of layer widths including input and output.
  std::vector<std::size_t> layer_widths() const;
  std::size_t n_layers() const { return layer_widths().size() - 1; }
};

/// Sinusoidal features of a step index: cos(step * f_j) then sin(step * f_j)
/// with f_j = 10000^(-j / (d/2)). Odd d leaves a trailing zero.
Eigen::VectorXd time_embedding(int step, std::size_t dim);

struct AdamState {
  std::vector<Eigen::MatrixXd> first_moment;
  std::vector<Eigen::MatrixXd> second_moment;
  std::uint64_t step = 0;
};

/// All trainable tensors plus optimizer state. Tensor order is fixed:
/// [time projection, W_0, b_0, W_1, b_1, ...], biases stored as column
/// matrices so every tensor shares one type.
struct ScoreNetParams {
  NetworkShape shape;
  double dropout = 0.5;
  std::vector<Eigen::MatrixXd> tensors;
  AdamState adam;

  Eigen::MatrixXd& time_projection() { return tensors[0]; }
  const Eigen::MatrixXd& time_projection() const { return tensors[0]; }
  Eigen::MatrixXd& weight(std::size_t layer) { return tensors[1 + 2 * layer]; }
  const Eigen::MatrixXd& weight(std::size_t layer) const { return tensors[1 + 2 * layer]; }
  Eigen::MatrixXd& bias(std::size_t layer) { return tensors[2 + 2 * layer]; }
  const Eigen::MatrixXd& bias(std::size_t layer) const { return tensors[2 + 2 * layer]; }

  std::size_t parameter_count() const;
  bool all_finite() const;
};

/// Xavier-uniform weights, zero biases, zeroed Adam buffers.
ScoreNetParams init_params(const NetworkShape& shape, double dropout, Rng& rng);
/// Same shapes, every tensor zero.
ScoreNetParams zero_params(const NetworkShape& shape, double dropout);

using Gradients = std::vector<Eigen::MatrixXd>;

/// Activations kept by a training-mode forward pass. Columns are users.
struct ForwardCache {
  Eigen::MatrixXd input;                   // x / K
  Eigen::MatrixXd time_features;           // time_dim x batch
  std::vector<Eigen::MatrixXd> hidden;     // post-tanh, pre-dropout
  std::vector<Eigen::MatrixXd> masks;      // inverted-dropout scales (0 or 1/(1-p))
  bool valid = false;
};

/// Logits for a batch of states (n_items x batch, raw counts in [0, K]).
/// steps[j] is the grid index of column j. In training mode one dropout
/// stream per column must be supplied and the cache is filled.
Eigen::MatrixXd net_forward(const ScoreNetParams& params, const Eigen::MatrixXd& states,
                            std::span<const int> steps, bool train_mode,
                            std::span<Rng> column_rngs = {}, ForwardCache* cache = nullptr);

/// Replays a forward pass with the masks already stored in `cache` (used for
/// gradient checks and repeated evaluation of a fixed dropout draw).
Eigen::MatrixXd net_forward_with_masks(const ScoreNetParams& params, const Eigen::MatrixXd& states,
                                       std::span<const int> steps, ForwardCache& cache);

/// Single-user convenience wrapper around the batched forward.
Eigen::VectorXd net_forward(const ScoreNetParams& params, std::span<const std::int32_t> state,
                            int step);

/// Numerically stable log(1 + e^x).
double softplus(double x);
/// d softplus / dx = sigmoid(x).
double sigmoid(double x);
Eigen::MatrixXd q_estimate(const Eigen::MatrixXd& logits);

/// Exact gradients of a scalar loss given dLoss/dlogits for the cached pass.
/// Throws ContractError if the cache is missing.
Gradients net_backward(const ScoreNetParams& params, const ForwardCache& cache,
                       const Eigen::MatrixXd& dlogits);

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Bias-corrected Adam applied in place.
void adam_step(ScoreNetParams& params, const Gradients& grads, const AdamConfig& cfg);

}  // namespace stagecf
