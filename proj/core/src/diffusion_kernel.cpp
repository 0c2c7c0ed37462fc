#include "stagecf/diffusion_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <string>

#include "stagecf/errors.hpp"

namespace stagecf {

int DiffusionSchedule::reverse_steps() const {
  return static_cast<int>(std::lround(reverse_horizon / dt()));
}

void DiffusionSchedule::validate() const {
  if (!(horizon > 0.0)) throw DomainError("schedule horizon must be > 0");
  if (n_steps < 1) throw DomainError("schedule needs at least one step");
  if (!(reverse_horizon > 0.0) || reverse_horizon > horizon * (1.0 + 1e-12)) {
    throw DomainError("reverse horizon must lie in (0, T]");
  }
  if (std::abs(reverse_steps() * dt() - reverse_horizon) > 1e-9 * horizon) {
    throw DomainError("reverse horizon must be a multiple of dt");
  }
}

StageVector stage_init(std::span<const std::uint8_t> indicator, int stage_count) {
  if (stage_count < 1) throw DomainError("K must be >= 1");
  StageVector x(indicator.size());
  std::transform(indicator.begin(), indicator.end(), x.begin(),
                 [stage_count](std::uint8_t r) { return r ? stage_count : 0; });
  return x;
}

StageVector stage_init(std::span<const ItemId> history, std::size_t n_items, int stage_count) {
  if (stage_count < 1) throw DomainError("K must be >= 1");
  StageVector x(n_items, 0);
  for (const ItemId i : history) x.at(i) = stage_count;
  return x;
}

double survival_prob(double coeff, double t) { return std::exp(-decay_exponent(coeff, t)); }

namespace {

// Inversion walking the pmf recursion from k = 0. Requires p <= 0.5 so that
// (1-p)^n stays representable for n up to a few thousand.
std::int32_t binomial_inversion(std::int32_t n, double p, Rng& rng) {
  const double q = 1.0 - p;
  const double odds = p / q;
  double pmf = std::pow(q, n);
  double cdf = pmf;
  const double u = uniform01(rng);
  std::int32_t k = 0;
  while (u >= cdf && k < n) {
    pmf *= odds * static_cast<double>(n - k) / static_cast<double>(k + 1);
    ++k;
    cdf += pmf;
  }
  return k;
}

}  // namespace

std::int32_t sample_binomial(std::int32_t n, double p, Rng& rng) {
  if (n <= 0 || p <= 0.0) return 0;
  if (p >= 1.0) return n;
  if (p > 0.5) return n - binomial_inversion(n, 1.0 - p, rng);
  return binomial_inversion(n, p, rng);
}

StageVector forward_sample(std::span<const std::int32_t> x0, std::span<const double> coeffs,
                           double t, Rng& rng) {
  if (x0.size() != coeffs.size()) throw ContractError("forward_sample: size mismatch");
  if (!(t >= 0.0)) throw DomainError("forward_sample: t must be >= 0");
  StageVector out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    out[i] = sample_binomial(x0[i], survival_prob(coeffs[i], t), rng);
  }
  return out;
}

double forward_pmf(std::int32_t n, double p, std::int32_t k) {
  if (k < 0 || k > n) {
    throw DomainError("forward_pmf: need 0 <= k <= n (k=" + std::to_string(k) +
                      ", n=" + std::to_string(n) + ")");
  }
  if (p <= 0.0) return k == 0 ? 1.0 : 0.0;
  if (p >= 1.0) return k == n ? 1.0 : 0.0;
  const double log_choose = std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
  return std::exp(log_choose + k * std::log(p) + (n - k) * std::log1p(-p));
}

double bridge_ratio_from_survival(double p_prev, double p_now) {
  if (!(p_now < 1.0)) throw DomainError("bridge ratio undefined at survival 1");
  return (p_prev - p_now) / (1.0 - p_now);
}

double bridge_ratio(double coeff, double t, double dt, RateMode mode) {
  if (!(t > 0.0)) throw DomainError("bridge_ratio: t must be > 0");
  if (!(dt > 0.0) || dt > t * (1.0 + 1e-12)) throw DomainError("bridge_ratio: need 0 < dt <= t");
  const double rate = mode == RateMode::global ? 1.0 : 1.0 / (1.0 + coeff);
  // Written with expm1 so that small rate*t keeps full precision.
  const double prev_gap = -std::expm1(-rate * std::max(t - dt, 0.0));  // 1 - e^{-(t-dt)}
  const double now_gap = -std::expm1(-rate * t);                       // 1 - e^{-t}
  return std::clamp((now_gap - prev_gap) / now_gap, 0.0, 1.0);
}

std::vector<std::int32_t> bridge_sample(std::span<const std::int32_t> deficit,
                                        std::span<const double> ratio, Rng& rng) {
  if (deficit.size() != ratio.size()) throw ContractError("bridge_sample: size mismatch");
  std::vector<std::int32_t> out(deficit.size());
  for (std::size_t i = 0; i < deficit.size(); ++i) {
    if (deficit[i] < 0) throw ContractError("bridge_sample: negative deficit");
    out[i] = sample_binomial(deficit[i], ratio[i], rng);
  }
  return out;
}

std::vector<std::int32_t> poisson_step(std::span<const double> q, double t, double dt,
                                       std::span<const std::int32_t> headroom, Rng& rng) {
  if (q.size() != headroom.size()) throw ContractError("poisson_step: size mismatch");
  const double r = bridge_ratio(0.0, t, dt, RateMode::global);
  std::vector<std::int32_t> out(q.size(), 0);
  for (std::size_t i = 0; i < q.size(); ++i) {
    const double mean = r * q[i];
    if (!(mean > 0.0)) continue;
    std::poisson_distribution<std::int64_t> dist(mean);
    out[i] = static_cast<std::int32_t>(std::min<std::int64_t>(dist(rng), headroom[i]));
  }
  return out;
}

double decay_variant_prob(const DecaySchemeConfig& cfg, double t) {
  if (!(t >= 0.0)) throw DomainError("decay_variant_prob: t must be >= 0");
  switch (cfg.scheme) {
    case DecayScheme::power:
      if (!(cfg.alpha > 0.0)) throw DomainError("power decay needs alpha > 0");
      return std::pow(1.0 + t, -cfg.alpha);
    case DecayScheme::linear:
      if (!(cfg.beta > 0.0)) throw DomainError("linear decay needs beta > 0");
      return std::max(0.0, 1.0 - cfg.beta * t);
    case DecayScheme::exponential_deterministic:
      if (!(cfg.lambda > 0.0)) throw DomainError("exponential decay needs lambda > 0");
      return std::exp(-cfg.lambda * t);
    case DecayScheme::burndown:
      break;
  }
  throw ContractError("decay_variant_prob: burndown uses survival_prob");
}

double scheme_survival(const DecaySchemeConfig& cfg, double coeff, double t) {
  if (cfg.scheme == DecayScheme::burndown) return survival_prob(coeff, t);
  return decay_variant_prob(cfg, t);
}

StageVector scheme_forward_sample(const DecaySchemeConfig& cfg, std::span<const std::int32_t> x0,
                                  std::span<const double> coeffs, double t, Rng& rng) {
  switch (cfg.scheme) {
    case DecayScheme::burndown:
      return forward_sample(x0, coeffs, t, rng);
    case DecayScheme::exponential_deterministic: {
      const double scale = decay_variant_prob(cfg, t);
      StageVector out(x0.size());
      std::transform(x0.begin(), x0.end(), out.begin(), [scale](std::int32_t v) {
        return static_cast<std::int32_t>(std::lround(v * scale));
      });
      return out;
    }
    case DecayScheme::power:
    case DecayScheme::linear: {
      const double p = decay_variant_prob(cfg, t);
      StageVector out(x0.size());
      for (std::size_t i = 0; i < x0.size(); ++i) out[i] = sample_binomial(x0[i], p, rng);
      return out;
    }
  }
  throw ContractError("unknown decay scheme");
}

}  // namespace stagecf
