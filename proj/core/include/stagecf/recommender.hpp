#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "stagecf/diffusion_kernel.hpp"
#include "stagecf/interaction_store.hpp"
#include "stagecf/random.hpp"
#include "stagecf/score_network.hpp"

namespace stagecf {

struct RecommendationList {
  UserId user = 0;
  std::vector<ItemId> items;
  std::vector<std::int32_t> scores;

  friend bool operator==(const RecommendationList&, const RecommendationList&) = default;
};

/// Estimate of the remaining deficit q(t) for one state at a grid step.
using DeficitEstimator =
    std::function<std::vector<double>(std::span<const std::int32_t> state, int step)>;

struct BurnUpOptions {
  DiffusionSchedule schedule;
  int stage_count = 300;  // K
  DecaySchemeConfig decay;
};

/// One reverse step at grid index `step`: clamps q to [0, K - x], then adds a
/// bridge draw (trials = round(q), ratio from the schedule's rate mode) or a
/// clipped Poisson draw. Returns the increment.
std::vector<std::int32_t> burn_up_step(StageVector& x, std::span<const double> q,
                                       std::span<const double> coeffs, int step,
                                       const BurnUpOptions& opts, Rng& rng);

/// Reverse burn-up from an arbitrary state at grid step N' down to step 1.
StageVector burn_up_from(const DeficitEstimator& estimator, StageVector initial,
                         std::span<const double> coeffs, const BurnUpOptions& opts, Rng& rng);

/// Reverse burn-up for one user from X^{(T')} = K r_u down to grid step 1.
StageVector burn_up(const DeficitEstimator& estimator, std::span<const ItemId> history,
                    std::span<const double> coeffs, const BurnUpOptions& opts, Rng& rng);

/// Network-driven burn-up for one user.
StageVector burn_up(const ScoreNetParams& params, std::span<const ItemId> history,
                    std::span<const double> coeffs, const BurnUpOptions& opts, Rng& rng);

/// Ranks non-history items by score descending; ties are broken by
/// hash(user, item, seed) so no index order leaks into the list.
RecommendationList top_k(std::span<const std::int32_t> scores, std::span<const ItemId> history,
                         std::size_t cutoff, UserId user, std::uint64_t seed);

struct RecommendConfig {
  BurnUpOptions burn_up;
  std::size_t cutoff = 50;
  std::uint64_t seed = 2025;
  std::size_t workers = 1;
  std::size_t chunk = 256;  // users per batched network call
};

/// Burn-up plus top-k for every user in `users` (all users when empty). Users
/// are processed in fixed chunks with per-user streams, so the result does
/// not depend on the worker count.
std::vector<RecommendationList> recommend_users(const ScoreNetParams& params,
                                                const InteractionMatrix& train,
                                                const DecayCache& decay,
                                                const RecommendConfig& cfg,
                                                std::span<const UserId> users = {});

/// Training-popularity baseline with the same masking and tie-break rules.
std::vector<RecommendationList> popularity_recommend(const InteractionMatrix& train,
                                                     std::size_t cutoff, std::uint64_t seed);

/// "user \t item \t score \t rank" lines, ranks 1-based.
void write_recommendations(std::ostream& out, std::span<const RecommendationList> lists);
std::vector<RecommendationList> read_recommendations(std::istream& in);

}  // namespace stagecf
