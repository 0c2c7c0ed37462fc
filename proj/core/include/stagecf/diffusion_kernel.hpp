#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stagecf/interaction_store.hpp"
#include "stagecf/random.hpp"

namespace stagecf {

/// Integer interest counts per item, each in [0, K].
using StageVector = std::vector<std::int32_t>;

enum class SamplerMode { bridge, poisson };
enum class RateMode { personalized, global };

struct DiffusionSchedule {
  double horizon = 4.0;          // T
  int n_steps = 100;             // N
  double reverse_horizon = 4.0;  // T', a multiple of dt no larger than T
  SamplerMode mode = SamplerMode::bridge;
  RateMode rate_mode = RateMode::personalized;

  double dt() const noexcept { return horizon / n_steps; }
  /// Number of reverse steps N' = T' / dt (rounded to the grid).
  int reverse_steps() const;
  /// Continuous time of a grid step index.
  double time_of(int step) const noexcept { return step * dt(); }
  /// Throws DomainError when the invariants do not hold.
  void validate() const;
};

enum class DecayScheme { burndown, exponential_deterministic, power, linear };

struct DecaySchemeConfig {
  DecayScheme scheme = DecayScheme::burndown;
  double alpha = 1.0;   // power exponent
  double beta = 0.25;   // linear slope
  double lambda = 1.0;  // deterministic exponential rate
};

StageVector stage_init(std::span<const std::uint8_t> indicator, int stage_count);
StageVector stage_init(std::span<const ItemId> history, std::size_t n_items, int stage_count);

/// exp(-t / (1 + c)).
double survival_prob(double coeff, double t);

/// Exponent of the personalized decay, t / (1 + c).
inline double decay_exponent(double coeff, double t) { return t / (1.0 + coeff); }

/// Exact binomial draw by CDF inversion. Valid for any n >= 0, p in [0, 1].
std::int32_t sample_binomial(std::int32_t n, double p, Rng& rng);

/// Binomial thinning of every item with its own survival probability.
StageVector forward_sample(std::span<const std::int32_t> x0, std::span<const double> coeffs,
                           double t, Rng& rng);

/// C(n,k) p^k (1-p)^(n-k), evaluated through log-gamma. Throws DomainError for
/// k > n or k < 0.
double forward_pmf(std::int32_t n, double p, std::int32_t k);

/// Reverse restoration probability between two survival levels,
/// (p_prev - p_now) / (1 - p_now). Shared by the sampler and the oracles.
double bridge_ratio_from_survival(double p_prev, double p_now);

/// Probability that a unit missing at time t was still alive at t - dt.
/// Global mode uses rate 1; personalized mode uses rate 1 / (1 + c).
/// Throws DomainError unless 0 < dt <= t.
double bridge_ratio(double coeff, double t, double dt, RateMode mode);

std::vector<std::int32_t> bridge_sample(std::span<const std::int32_t> deficit,
                                        std::span<const double> ratio, Rng& rng);

/// Poisson increments with mean r_t * q_i (global-rate r_t), clipped so that
/// no increment exceeds headroom_i = K - X_i.
std::vector<std::int32_t> poisson_step(std::span<const double> q, double t, double dt,
                                       std::span<const std::int32_t> headroom, Rng& rng);

/// Decay factor of the ablation schemes: (1+t)^-alpha, max(0, 1 - beta t) or
/// the deterministic scale exp(-lambda t). Throws ContractError for burndown.
double decay_variant_prob(const DecaySchemeConfig& cfg, double t);

/// Survival probability of one unit under any scheme; burndown uses the
/// per-item coefficient, the ablation schemes ignore it.
double scheme_survival(const DecaySchemeConfig& cfg, double coeff, double t);

/// Forward perturbation under any scheme. The deterministic exponential scheme
/// rounds x0 * exp(-lambda t); the others thin binomially.
StageVector scheme_forward_sample(const DecaySchemeConfig& cfg, std::span<const std::int32_t> x0,
                                  std::span<const double> coeffs, double t, Rng& rng);

}  // namespace stagecf
