#pragma once

// Brute-force oracles and statistical checks. Everything here is dense and
// exponential-cost; it exists to validate the production paths on small
// instances, not to scale.

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace stagecf::verification {

/// Restoration probability as a function of (survival at t - dt, survival at t).
using RatioFn = std::function<double(double p_prev, double p_now)>;

/// The production ratio (diffusion kernel's bridge_ratio_from_survival).
RatioFn default_ratio();

/// Exact law of x^{(t-dt)} given x^{(t)} = k and x^{(0)} = n.
struct PosteriorTable {
  int n = 0;
  int k = 0;
  std::vector<double> probs;        // probs[m - k], m in [k, n]
  double closed_form_gap = 0.0;     // max |enumeration - closed form|

  double prob(int m) const { return probs.at(static_cast<std::size_t>(m - k)); }
};

/// Bayes enumeration: p(m | k, n) ∝ Binom(k; m, p_now/p_prev) Binom(m; n, p_prev).
std::vector<double> posterior_by_enumeration(int n, int k, double p_prev, double p_now);

/// C(n-k, m-k) r^{m-k} (1-r)^{n-m} with r = ratio(p_prev, p_now).
std::vector<double> posterior_closed_form(int n, int k, double p_prev, double p_now,
                                          const RatioFn& ratio);

/// Enumerates the posterior and records its distance to the closed form.
/// Throws DomainError unless 0 <= k <= n and 0 < p_now <= p_prev <= 1.
PosteriorTable reverse_posterior_oracle(int n, int k, double p_prev, double p_now,
                                        const RatioFn& ratio = default_ratio());

struct PosteriorSweep {
  std::size_t cases = 0;
  double max_abs_diff = 0.0;
  double max_row_sum_error = 0.0;
};

/// All n <= max_n, k <= n over the 5 x 5 grid of (p_prev, one-step survival).
PosteriorSweep posterior_sweep(int max_n = 6, const RatioFn& ratio = default_ratio());

/// Central differences, one coordinate at a time.
std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h = 1e-5);

/// max_i |a_i - b_i| / max(max_i |a_i|, max_i |b_i|); 0 when both are zero.
double max_relative_error(std::span<const double> a, std::span<const double> b);

struct ChiSquareResult {
  double statistic = 0.0;
  double critical = 0.0;
  int dof = 0;
  bool passed = false;
};

/// Quantile of the chi-square distribution.
double chi_square_quantile(int dof, double confidence);

/// Goodness of fit of observed counts against category probabilities.
/// Tail categories with expected count < 5 are pooled.
ChiSquareResult chi_square_gof(std::span<const std::size_t> observed, std::span<const double> probs,
                               double confidence = 0.99);

/// Homogeneity test between two histograms over the same categories.
/// Categories with combined count < 10 are pooled.
ChiSquareResult chi_square_two_sample(std::span<const std::size_t> a, std::span<const std::size_t> b,
                                      double confidence = 0.99);

struct SpectralDecayReport {
  std::vector<double> rayleigh;       // R(v) per eigenvector of diag(G r_u)
  std::vector<double> measured_rate;  // -log(proj(t)/proj(0))/t at the last time
  std::size_t component_comparisons = 0;
  std::size_t component_violations = 0;
  std::size_t item_comparisons = 0;
  std::size_t item_violations = 0;
  double max_rate_error = 0.0;  // vs 1/(1 + gamma R(v)) over all times
};

/// Eigendecomposes the Rayleigh operator diag(G r_u) with G = A^T A (dense),
/// integrates the expected-value ODE dx/dt = -(I + gamma diag(G r_u))^{-1} x
/// from each eigenvector and from a uniform start, and counts pairs whose
/// measured decay order disagrees with the Rayleigh-quotient (component) or
/// coefficient (item) order. Pairs whose gamma * R(v) (or coefficients) are
/// closer than 1e-9 are not compared.
SpectralDecayReport spectral_decay_check(const Eigen::MatrixXd& adjacency,
                                         const Eigen::VectorXd& history, double gamma,
                                         std::span<const double> times);

struct SuiteResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

struct SuiteOptions {
  std::uint64_t seed = 20240601;
  std::size_t samples = 100000;  // Monte Carlo draws per cell
  RatioFn ratio = default_ratio();
};

SuiteResult reverse_posterior_suite(const SuiteOptions& opts);
SuiteResult thinning_composition_suite(const SuiteOptions& opts);
SuiteResult bridge_recovery_suite(const SuiteOptions& opts);
SuiteResult gradient_check_suite(const SuiteOptions& opts);
SuiteResult decay_ordering_suite(const SuiteOptions& opts);
SuiteResult stationarity_suite(const SuiteOptions& opts);

std::vector<SuiteResult> run_oracle_suites(const SuiteOptions& opts = {});

}  // namespace stagecf::verification
