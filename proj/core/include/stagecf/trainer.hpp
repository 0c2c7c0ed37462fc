#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "stagecf/diffusion_kernel.hpp"
#include "stagecf/interaction_store.hpp"
#include "stagecf/score_network.hpp"

namespace stagecf {

enum class Objective { instantaneous, finite_time };

struct TrainConfig {
  int stage_count = 300;  // K
  DiffusionSchedule schedule;
  double gamma = 1.0;
  Objective objective = Objective::instantaneous;
  DecaySchemeConfig decay;
  std::vector<std::size_t> hidden{1000};
  std::size_t time_dim = 16;
  double lr = 1e-4;
  double dropout = 0.5;
  std::size_t batch_size = 1024;
  int patience = 5;
  int max_epochs = 100;
  std::uint64_t seed = 2025;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;

  AdamConfig adam() const { return {lr, beta1, beta2, eps}; }
  NetworkShape network_shape(std::size_t n_items) const;
  /// Throws DomainError on invalid settings.
  void validate() const;
};

struct LossValue {
  double value = 0.0;
  std::vector<double> grad;  // dLoss/dq
};

/// sum_i e^{-F_i} (q_i - d_i log q_i) with d = x0 - xt. Throws ContractError
/// if any q_i <= 0 or xt exceeds x0.
LossValue elbo_loss(std::span<const double> q, std::span<const std::int32_t> x0,
                    std::span<const std::int32_t> xt, std::span<const double> decay_exponent);

/// t e^{-t} sum_i (q_i - d_i log q_i).
LossValue finite_time_loss(std::span<const double> q, std::span<const std::int32_t> x0,
                           std::span<const std::int32_t> xt, double t);

struct LossBreakdown {
  double total = 0.0;  // sum of per-user losses
  double mean = 0.0;   // total / samples
  std::size_t samples = 0;
  std::size_t batches = 0;
};

/// Raised when a batch produces a non-finite loss; what() carries a dump of
/// the offending users, steps and loss terms.
class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

ScoreNetParams init_model(const TrainConfig& cfg, std::size_t n_items);

/// One pass over all users with history, in a seed-shuffled order. Epochs are
/// numbered from 1; every draw comes from streams keyed by (seed, user, epoch).
LossBreakdown train_epoch(ScoreNetParams& params, const InteractionMatrix& train,
                          const DecayCache& decay, const TrainConfig& cfg, int epoch);

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  double valid_recall = 0.0;
  double elapsed_seconds = 0.0;
};

/// Validation score of a model after a given epoch; larger is better.
using Validator = std::function<double(const ScoreNetParams&, int epoch)>;

struct FitResult {
  ScoreNetParams best;
  int best_epoch = 0;
  double best_score = 0.0;
  std::vector<EpochRecord> curve;
};

/// Early-stopped training: keeps the parameters of the best validation epoch
/// and stops after `patience` epochs without a strict improvement. Writes one
/// structured line per epoch to `log` when given.
FitResult fit(const InteractionMatrix& train, const TrainConfig& cfg, const Validator& validator,
              std::ostream* log = nullptr);

/// fit() scored by burn-up Recall@20 on `valid`, masking training items.
FitResult fit(const InteractionMatrix& train, const InteractionMatrix& valid,
              const TrainConfig& cfg, std::ostream* log = nullptr);

/// Retrains from scratch for exactly `epochs` epochs.
ScoreNetParams train_for_epochs(const InteractionMatrix& train, const TrainConfig& cfg, int epochs);

/// Recall@k on `truth` of burn-up recommendations from a model trained on
/// `train` (training items masked).
double burn_up_recall(const ScoreNetParams& params, const InteractionMatrix& train,
                      const InteractionMatrix& truth, const TrainConfig& cfg, std::size_t k = 20,
                      SamplerMode mode = SamplerMode::bridge);

}  // namespace stagecf
