#include "stagecf/verification.hpp"

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <sstream>

#include "stagecf/diffusion_kernel.hpp"
#include "stagecf/errors.hpp"
#include "stagecf/interaction_store.hpp"
#include "stagecf/random.hpp"
#include "stagecf/recommender.hpp"
#include "stagecf/score_network.hpp"
#include "stagecf/trainer.hpp"

namespace stagecf::verification {

namespace {

// Exact small binomial coefficient; n <= 60 keeps it exact in double.
double choose(int n, int k) {
  if (k < 0 || k > n) return 0.0;
  double c = 1.0;
  for (int j = 1; j <= k; ++j) c = c * (n - k + j) / j;
  return c;
}

// Independent of the production log-space pmf.
double binom_pmf(int n, double p, int k) {
  return choose(n, k) * std::pow(p, k) * std::pow(1.0 - p, n - k);
}

void check_posterior_args(int n, int k, double p_prev, double p_now) {
  if (k < 0 || k > n) throw DomainError("posterior: need 0 <= k <= n");
  if (!(p_now > 0.0 && p_now <= p_prev && p_prev <= 1.0)) {
    throw DomainError("posterior: need 0 < p_now <= p_prev <= 1");
  }
}

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

}  // namespace

RatioFn default_ratio() {
  return [](double p_prev, double p_now) { return bridge_ratio_from_survival(p_prev, p_now); };
}

std::vector<double> posterior_by_enumeration(int n, int k, double p_prev, double p_now) {
  check_posterior_args(n, k, p_prev, p_now);
  const double step_survival = p_now / p_prev;
  std::vector<double> w(static_cast<std::size_t>(n - k + 1));
  double total = 0.0;
  for (int m = k; m <= n; ++m) {
    const double joint = binom_pmf(m, step_survival, k) * binom_pmf(n, p_prev, m);
    w[static_cast<std::size_t>(m - k)] = joint;
    total += joint;
  }
  for (double& v : w) v /= total;
  return w;
}

std::vector<double> posterior_closed_form(int n, int k, double p_prev, double p_now,
                                          const RatioFn& ratio) {
  check_posterior_args(n, k, p_prev, p_now);
  std::vector<double> w(static_cast<std::size_t>(n - k + 1));
  if (k == n) {
    w[0] = 1.0;
    return w;
  }
  const double r = ratio(p_prev, p_now);
  for (int m = k; m <= n; ++m) {
    w[static_cast<std::size_t>(m - k)] = choose(n - k, m - k) * std::pow(r, m - k) * std::pow(1.0 - r, n - m);
  }
  return w;
}

PosteriorTable reverse_posterior_oracle(int n, int k, double p_prev, double p_now,
                                        const RatioFn& ratio) {
  PosteriorTable t;
  t.n = n;
  t.k = k;
  t.probs = posterior_by_enumeration(n, k, p_prev, p_now);
  const auto closed = posterior_closed_form(n, k, p_prev, p_now, ratio);
  for (std::size_t i = 0; i < closed.size(); ++i) {
    const double gap = std::abs(closed[i] - t.probs[i]);
    t.closed_form_gap = std::isnan(gap) ? INFINITY : std::max(t.closed_form_gap, gap);
  }
  return t;
}

PosteriorSweep posterior_sweep(int max_n, const RatioFn& ratio) {
  static constexpr double kPrev[] = {1.0, 0.8, 0.5, 0.25, 0.05};
  static constexpr double kStep[] = {0.99, 0.9, 0.6, 0.3, 0.01};
  PosteriorSweep sweep;
  for (const double p_prev : kPrev) {
    for (const double s : kStep) {
      const double p_now = p_prev * s;
      for (int n = 0; n <= max_n; ++n) {
        for (int k = 0; k <= n; ++k) {
          const auto table = reverse_posterior_oracle(n, k, p_prev, p_now, ratio);
          double sum = 0.0;
          for (const double p : table.probs) sum += p;
          ++sweep.cases;
          sweep.max_abs_diff = std::max(sweep.max_abs_diff, table.closed_form_gap);
          sweep.max_row_sum_error = std::max(sweep.max_row_sum_error, std::abs(sum - 1.0));
        }
      }
    }
  }
  return sweep;
}

std::vector<double> finite_diff_grad(const std::function<double(std::span<const double>)>& f,
                                     std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

double max_relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("max_relative_error: size mismatch");
  double diff = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(b[i])});
  }
  return scale == 0.0 ? 0.0 : diff / scale;
}

double chi_square_quantile(int dof, double confidence) {
  const boost::math::chi_squared dist(static_cast<double>(dof));
  return boost::math::quantile(dist, confidence);
}

ChiSquareResult chi_square_gof(std::span<const std::size_t> observed, std::span<const double> probs,
                               double confidence) {
  if (observed.size() != probs.size()) throw ContractError("chi_square_gof: size mismatch");
  double n = 0.0;
  for (const auto o : observed) n += static_cast<double>(o);
  std::vector<double> obs;
  std::vector<double> exp;
  double pool_o = 0.0;
  double pool_e = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    pool_o += static_cast<double>(observed[i]);
    pool_e += probs[i] * n;
    if (pool_e >= 5.0) {
      obs.push_back(pool_o);
      exp.push_back(pool_e);
      pool_o = pool_e = 0.0;
    }
  }
  if (pool_e > 0.0 || pool_o > 0.0) {
    if (exp.empty()) {
      obs.push_back(pool_o);
      exp.push_back(pool_e);
    } else {
      obs.back() += pool_o;
      exp.back() += pool_e;
    }
  }
  ChiSquareResult r;
  for (std::size_t i = 0; i < obs.size(); ++i) {
    if (exp[i] > 0.0) r.statistic += (obs[i] - exp[i]) * (obs[i] - exp[i]) / exp[i];
  }
  r.dof = static_cast<int>(obs.size()) - 1;
  if (r.dof < 1) {
    r.passed = true;  // a single category cannot disagree
    return r;
  }
  r.critical = chi_square_quantile(r.dof, confidence);
  r.passed = r.statistic <= r.critical;
  return r;
}

ChiSquareResult chi_square_two_sample(std::span<const std::size_t> a, std::span<const std::size_t> b,
                                      double confidence) {
  if (a.size() != b.size()) throw ContractError("chi_square_two_sample: size mismatch");
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    na += static_cast<double>(a[i]);
    nb += static_cast<double>(b[i]);
  }
  std::vector<std::pair<double, double>> bins;
  double pool_a = 0.0;
  double pool_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    pool_a += static_cast<double>(a[i]);
    pool_b += static_cast<double>(b[i]);
    if (pool_a + pool_b >= 10.0) {
      bins.emplace_back(pool_a, pool_b);
      pool_a = pool_b = 0.0;
    }
  }
  if (pool_a + pool_b > 0.0) {
    if (bins.empty()) {
      bins.emplace_back(pool_a, pool_b);
    } else {
      bins.back().first += pool_a;
      bins.back().second += pool_b;
    }
  }
  ChiSquareResult r;
  const double n = na + nb;
  for (const auto& [oa, ob] : bins) {
    const double col = oa + ob;
    const double ea = na * col / n;
    const double eb = nb * col / n;
    r.statistic += (oa - ea) * (oa - ea) / ea + (ob - eb) * (ob - eb) / eb;
  }
  r.dof = static_cast<int>(bins.size()) - 1;
  if (r.dof < 1) {
    r.passed = true;
    return r;
  }
  r.critical = chi_square_quantile(r.dof, confidence);
  r.passed = r.statistic <= r.critical;
  return r;
}

SpectralDecayReport spectral_decay_check(const Eigen::MatrixXd& adjacency,
                                         const Eigen::VectorXd& history, double gamma,
                                         std::span<const double> times) {
  const auto n = adjacency.cols();
  if (n > 50) throw DomainError("spectral_decay_check: at most 50 items");
  if (history.size() != n) throw ContractError("spectral_decay_check: history length");
  if (times.empty()) throw ContractError("spectral_decay_check: no times");

  const Eigen::MatrixXd gram = adjacency.transpose() * adjacency;
  const Eigen::VectorXd filtered = gram * history;
  const Eigen::MatrixXd rayleigh_op = filtered.asDiagonal();
  const Eigen::MatrixXd damping =
      (Eigen::MatrixXd::Identity(n, n) + gamma * rayleigh_op).inverse();

  // Classical RK4 for dx/dt = -M x, sampled at the requested times.
  const auto integrate = [&damping, times](Eigen::VectorXd x) {
    std::vector<Eigen::VectorXd> snapshots;
    double now = 0.0;
    constexpr double kStep = 1e-3;
    std::vector<double> sorted(times.begin(), times.end());
    std::sort(sorted.begin(), sorted.end());
    for (const double target : sorted) {
      while (now < target - 1e-15) {
        const double h = std::min(kStep, target - now);
        const Eigen::VectorXd k1 = -damping * x;
        const Eigen::VectorXd k2 = -damping * (x + 0.5 * h * k1);
        const Eigen::VectorXd k3 = -damping * (x + 0.5 * h * k2);
        const Eigen::VectorXd k4 = -damping * (x + h * k3);
        x += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        now += h;
      }
      snapshots.push_back(x);
    }
    return std::make_pair(sorted, snapshots);
  };

  SpectralDecayReport report;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rayleigh_op);
  const Eigen::MatrixXd& vectors = eig.eigenvectors();

  // rates[c][s]: measured rate of component c at time index s
  std::vector<std::vector<double>> rates(static_cast<std::size_t>(n));
  for (Eigen::Index c = 0; c < n; ++c) {
    const Eigen::VectorXd v = vectors.col(c);
    const double quotient = v.dot(rayleigh_op * v);
    report.rayleigh.push_back(quotient);
    const auto [sorted, snaps] = integrate(v);
    const double predicted = 1.0 / (1.0 + gamma * quotient);
    for (std::size_t s = 0; s < sorted.size(); ++s) {
      const double projection = v.dot(snaps[s]);
      const double rate = -std::log(projection) / sorted[s];
      rates[static_cast<std::size_t>(c)].push_back(rate);
      report.max_rate_error = std::max(report.max_rate_error, std::abs(rate - predicted));
    }
    report.measured_rate.push_back(rates[static_cast<std::size_t>(c)].back());
  }
  for (Eigen::Index a = 0; a < n; ++a) {
    for (Eigen::Index b = 0; b < n; ++b) {
      // Rates differ only through gamma * R(v); with gamma = 0 nothing is ordered.
      const double ra = gamma * report.rayleigh[static_cast<std::size_t>(a)];
      const double rb = gamma * report.rayleigh[static_cast<std::size_t>(b)];
      if (ra - rb <= 1e-9) continue;
      // Larger quotient must burn down strictly slower at every time.
      for (std::size_t s = 0; s < times.size(); ++s) {
        ++report.component_comparisons;
        if (!(rates[static_cast<std::size_t>(a)][s] < rates[static_cast<std::size_t>(b)][s])) {
          ++report.component_violations;
        }
      }
    }
  }

  const Eigen::VectorXd coeffs = gamma * filtered;
  const auto [sorted, snaps] = integrate(Eigen::VectorXd::Ones(n));
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < n; ++j) {
      if (coeffs[i] - coeffs[j] <= 1e-9) continue;
      for (std::size_t s = 0; s < sorted.size(); ++s) {
        if (sorted[s] <= 0.0) continue;
        ++report.item_comparisons;
        if (!(snaps[s][i] > snaps[s][j])) ++report.item_violations;
      }
    }
  }
  return report;
}

SuiteResult reverse_posterior_suite(const SuiteOptions& opts) {
  const auto sweep = posterior_sweep(6, opts.ratio);
  SuiteResult r{"reverse_posterior", false, ""};
  r.passed = sweep.max_abs_diff <= 1e-12 && sweep.max_row_sum_error <= 1e-12;
  r.detail = std::to_string(sweep.cases) + " cases, max |closed - enumeration| = " +
             fmt(sweep.max_abs_diff) + ", max row-sum error = " + fmt(sweep.max_row_sum_error);
  return r;
}

SuiteResult thinning_composition_suite(const SuiteOptions& opts) {
  constexpr int kStages = 10;
  constexpr double kCoeffs[] = {0.0, 1.0, 3.0};
  constexpr int kCells = 20;
  int failures = 0;
  double worst_ratio = 0.0;
  for (int cell = 0; cell < kCells; ++cell) {
    const double c = kCoeffs[cell % 3];
    const double t1 = 0.1 + 0.15 * cell;
    const double t2 = 1.5 - 0.05 * cell;
    auto rng = derive_stream(opts.seed, StreamTag::verify, 1000 + static_cast<std::uint64_t>(cell));
    std::vector<std::size_t> two_stage(kStages + 1, 0);
    std::vector<std::size_t> one_stage(kStages + 1, 0);
    const std::int32_t x0[] = {kStages};
    const double coeff[] = {c};
    for (std::size_t s = 0; s < opts.samples; ++s) {
      const auto mid = forward_sample(x0, coeff, t1, rng);
      const auto end = forward_sample(mid, coeff, t2, rng);
      ++two_stage[static_cast<std::size_t>(end[0])];
      const auto direct = forward_sample(x0, coeff, t1 + t2, rng);
      ++one_stage[static_cast<std::size_t>(direct[0])];
    }
    const auto test = chi_square_two_sample(two_stage, one_stage, 0.99);
    if (!test.passed) ++failures;
    if (test.critical > 0.0) worst_ratio = std::max(worst_ratio, test.statistic / test.critical);
  }
  SuiteResult r{"thinning_composition", failures <= 1, ""};
  r.detail = std::to_string(failures) + "/" + std::to_string(kCells) +
             " cells rejected at 99% (budget 1), worst statistic/critical = " + fmt(worst_ratio);
  return r;
}

SuiteResult bridge_recovery_suite(const SuiteOptions& opts) {
  constexpr int kInstances = 100;
  int mismatches = 0;
  int path_violations = 0;
  for (int inst = 0; inst < kInstances; ++inst) {
    auto rng = derive_stream(opts.seed, StreamTag::verify, 2000 + static_cast<std::uint64_t>(inst));
    const auto n_items = 1 + static_cast<std::size_t>(uniform01(rng) * 12);
    const int k_max = 1 + static_cast<int>(uniform01(rng) * 60);
    std::vector<ItemId> history;
    std::vector<double> coeffs(n_items);
    for (std::size_t i = 0; i < n_items; ++i) {
      if (uniform01(rng) < 0.5) history.push_back(static_cast<ItemId>(i));
      coeffs[i] = 3.0 * uniform01(rng);
    }
    BurnUpOptions bo;
    bo.stage_count = k_max;
    bo.schedule.n_steps = 1 + static_cast<int>(uniform01(rng) * 100);
    bo.schedule.rate_mode = inst % 2 == 0 ? RateMode::personalized : RateMode::global;
    const StageVector x0 = stage_init(history, n_items, k_max);
    StageVector xt = forward_sample(x0, coeffs, bo.schedule.horizon, rng);

    StageVector previous = xt;
    const DeficitEstimator oracle = [&](std::span<const std::int32_t> x, int) {
      std::vector<double> q(x.size());
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] < previous[i] || x[i] > k_max) ++path_violations;
        q[i] = static_cast<double>(x0[i] - x[i]);
      }
      previous.assign(x.begin(), x.end());
      return q;
    };
    const auto recovered = burn_up_from(oracle, xt, coeffs, bo, rng);
    if (recovered != x0) ++mismatches;
  }
  SuiteResult r{"bridge_recovery", mismatches == 0 && path_violations == 0, ""};
  r.detail = std::to_string(kInstances - mismatches) + "/" + std::to_string(kInstances) +
             " instances recovered exactly, " + std::to_string(path_violations) +
             " monotonicity violations";
  return r;
}

namespace {

struct GradCheck {
  double elbo_worst = 0.0;
  double composite_worst = 0.0;
};

double elbo_check(Rng& rng) {
  const auto n = 3 + static_cast<std::size_t>(uniform01(rng) * 8);
  const int k_max = 1 + static_cast<int>(uniform01(rng) * 20);
  std::vector<double> q(n);
  std::vector<double> f(n);
  StageVector x0(n);
  StageVector xt(n);
  for (std::size_t i = 0; i < n; ++i) {
    x0[i] = uniform01(rng) < 0.6 ? k_max : 0;
    xt[i] = static_cast<std::int32_t>(uniform01(rng) * (x0[i] + 1));
    xt[i] = std::min(xt[i], x0[i]);
    f[i] = 5.0 * uniform01(rng);
    q[i] = 0.1 + 5.0 * uniform01(rng);
  }
  const auto analytic = elbo_loss(q, x0, xt, f).grad;
  const auto numeric = finite_diff_grad(
      [&](std::span<const double> qq) { return elbo_loss(qq, x0, xt, f).value; }, q, 1e-5);
  return max_relative_error(analytic, numeric);
}

double composite_check(Rng& rng, int instance) {
  NetworkShape shape;
  shape.n_items = 5;
  shape.hidden = instance % 2 == 0 ? std::vector<std::size_t>{8} : std::vector<std::size_t>{8, 4};
  shape.time_dim = 4;
  shape.stage_count = 2 + static_cast<int>(uniform01(rng) * 20);
  auto params = init_params(shape, 0.3, rng);
  for (std::size_t l = 0; l < shape.n_layers(); ++l) {
    for (Eigen::Index r = 0; r < params.bias(l).rows(); ++r) params.bias(l)(r, 0) = uniform01(rng) - 0.5;
  }
  constexpr int kBatch = 3;
  const int n_steps = 50;
  Eigen::MatrixXd states(5, kBatch);
  std::vector<StageVector> x0(kBatch, StageVector(5));
  std::vector<StageVector> xt(kBatch, StageVector(5));
  std::vector<std::vector<double>> f(kBatch, std::vector<double>(5));
  std::vector<int> steps(kBatch);
  std::vector<Rng> mask_rngs;
  for (int j = 0; j < kBatch; ++j) {
    steps[static_cast<std::size_t>(j)] = 1 + static_cast<int>(uniform01(rng) * n_steps);
    mask_rngs.push_back(derive_stream(static_cast<std::uint64_t>(instance), StreamTag::dropout,
                                      static_cast<std::uint64_t>(j)));
    for (int i = 0; i < 5; ++i) {
      auto& a = x0[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      auto& b = xt[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)];
      a = uniform01(rng) < 0.5 ? shape.stage_count : 0;
      b = std::min(a, static_cast<std::int32_t>(uniform01(rng) * (a + 1)));
      f[static_cast<std::size_t>(j)][static_cast<std::size_t>(i)] = 4.0 * uniform01(rng);
      states(i, j) = b;
    }
  }

  ForwardCache cache;
  const Eigen::MatrixXd logits = net_forward(params, states, steps, true, mask_rngs, &cache);
  const auto loss_of = [&](const Eigen::MatrixXd& lg, Eigen::MatrixXd* dlogits) {
    double total = 0.0;
    for (int j = 0; j < kBatch; ++j) {
      std::vector<double> q(5);
      for (int i = 0; i < 5; ++i) q[static_cast<std::size_t>(i)] = softplus(lg(i, j));
      const auto lv = elbo_loss(q, x0[static_cast<std::size_t>(j)], xt[static_cast<std::size_t>(j)],
                                f[static_cast<std::size_t>(j)]);
      total += lv.value / kBatch;
      if (dlogits) {
        for (int i = 0; i < 5; ++i) {
          (*dlogits)(i, j) = lv.grad[static_cast<std::size_t>(i)] * sigmoid(lg(i, j)) / kBatch;
        }
      }
    }
    return total;
  };
  Eigen::MatrixXd dlogits(5, kBatch);
  loss_of(logits, &dlogits);
  const Gradients grads = net_backward(params, cache, dlogits);

  std::vector<double> flat;
  std::vector<double> analytic;
  for (std::size_t t = 0; t < params.tensors.size(); ++t) {
    const auto& tensor = params.tensors[t];
    flat.insert(flat.end(), tensor.data(), tensor.data() + tensor.size());
    analytic.insert(analytic.end(), grads[t].data(), grads[t].data() + grads[t].size());
  }
  const auto numeric = finite_diff_grad(
      [&](std::span<const double> theta) {
        auto probe = params;
        std::size_t off = 0;
        for (auto& tensor : probe.tensors) {
          std::copy(theta.begin() + static_cast<std::ptrdiff_t>(off),
                    theta.begin() + static_cast<std::ptrdiff_t>(off + static_cast<std::size_t>(tensor.size())),
                    tensor.data());
          off += static_cast<std::size_t>(tensor.size());
        }
        ForwardCache replay = cache;
        return loss_of(net_forward_with_masks(probe, states, steps, replay), nullptr);
      },
      flat, 1e-5);
  return max_relative_error(analytic, numeric);
}

}  // namespace

SuiteResult gradient_check_suite(const SuiteOptions& opts) {
  constexpr int kInstances = 20;
  GradCheck worst;
  for (int inst = 0; inst < kInstances; ++inst) {
    auto rng = derive_stream(opts.seed, StreamTag::verify, 3000 + static_cast<std::uint64_t>(inst));
    worst.elbo_worst = std::max(worst.elbo_worst, elbo_check(rng));
    worst.composite_worst = std::max(worst.composite_worst, composite_check(rng, inst));
  }
  SuiteResult r{"gradient_check", worst.elbo_worst <= 1e-6 && worst.composite_worst <= 1e-4, ""};
  r.detail = "elbo max rel err " + fmt(worst.elbo_worst) + " (<= 1e-6), composite " +
             fmt(worst.composite_worst) + " (<= 1e-4)";
  return r;
}

SuiteResult decay_ordering_suite(const SuiteOptions& opts) {
  constexpr int kInstances = 20;
  constexpr std::size_t kItems = 10;
  constexpr std::size_t kUsers = 8;
  const std::vector<double> times{0.5, 1.0, 2.0, 3.0, 4.0};
  std::size_t comp_violations = 0;
  std::size_t item_violations = 0;
  std::size_t comparisons = 0;
  double coeff_gap = 0.0;
  double rate_error = 0.0;
  for (int inst = 0; inst < kInstances; ++inst) {
    auto rng = derive_stream(opts.seed, StreamTag::verify, 4000 + static_cast<std::uint64_t>(inst));
    std::vector<std::vector<ItemId>> rows(kUsers);
    for (auto& row : rows) {
      for (ItemId i = 0; i < kItems; ++i) {
        if (uniform01(rng) < 0.35) row.push_back(i);
      }
    }
    if (rows[0].empty()) rows[0].push_back(static_cast<ItemId>(inst % kItems));
    const InteractionMatrix r(kUsers, kItems, rows);
    const auto adj = normalize(r);
    const double gamma = 0.5 + 2.5 * uniform01(rng);

    Eigen::MatrixXd dense(static_cast<Eigen::Index>(kUsers), static_cast<Eigen::Index>(kItems));
    for (UserId u = 0; u < kUsers; ++u) {
      for (ItemId i = 0; i < kItems; ++i) dense(u, i) = adj.value(u, i);
    }
    Eigen::VectorXd history = Eigen::VectorXd::Zero(kItems);
    for (const ItemId i : r.row(0)) history[i] = 1.0;

    const auto sparse = decay_coefficients(adj, 0, gamma);
    const Eigen::VectorXd dense_coeffs = gamma * (dense.transpose() * dense) * history;
    for (std::size_t i = 0; i < kItems; ++i) {
      coeff_gap = std::max(coeff_gap, std::abs(sparse.coeffs[i] - dense_coeffs[static_cast<Eigen::Index>(i)]));
    }

    const auto report = spectral_decay_check(dense, history, gamma, times);
    comp_violations += report.component_violations;
    item_violations += report.item_violations;
    comparisons += report.component_comparisons + report.item_comparisons;
    rate_error = std::max(rate_error, report.max_rate_error);
  }
  SuiteResult r{"decay_ordering", comp_violations == 0 && item_violations == 0 && coeff_gap <= 1e-12, ""};
  r.detail = std::to_string(comp_violations) + " spectral + " + std::to_string(item_violations) +
             " item violations over " + std::to_string(comparisons) +
             " comparisons; sparse/dense coefficient gap " + fmt(coeff_gap) +
             "; max rate error vs 1/(1+gamma R) " + fmt(rate_error);
  return r;
}

SuiteResult stationarity_suite(const SuiteOptions& opts) {
  constexpr int kStages = 5;
  const std::vector<double> coeffs{0.0, 0.5, 1.0, 3.0};
  const double c_max = *std::max_element(coeffs.begin(), coeffs.end());
  const double t = 10.0 * (1.0 + c_max);
  auto rng = derive_stream(opts.seed, StreamTag::verify, 5000);
  std::vector<std::size_t> alive(coeffs.size(), 0);
  const StageVector x0(coeffs.size(), kStages);
  for (std::size_t s = 0; s < opts.samples; ++s) {
    const auto xt = forward_sample(x0, coeffs, t, rng);
    for (std::size_t i = 0; i < xt.size(); ++i) alive[i] += xt[i] > 0 ? 1 : 0;
  }
  bool ok = true;
  std::ostringstream detail;
  const double n = static_cast<double>(opts.samples);
  for (std::size_t i = 0; i < coeffs.size(); ++i) {
    const double bound = std::min(1.0, kStages * survival_prob(coeffs[i], t));
    const double sigma = std::sqrt(bound * (1.0 - bound) / n);
    const double empirical = static_cast<double>(alive[i]) / n;
    ok = ok && empirical <= bound + 3.0 * sigma;
    detail << "c=" << coeffs[i] << ": P[x>0]=" << fmt(empirical) << " <= " << fmt(bound + 3.0 * sigma)
           << (i + 1 < coeffs.size() ? "; " : "");
  }
  return {"stationarity", ok, detail.str()};
}

std::vector<SuiteResult> run_oracle_suites(const SuiteOptions& opts) {
  return {reverse_posterior_suite(opts),  thinning_composition_suite(opts),
          bridge_recovery_suite(opts),    gradient_check_suite(opts),
          decay_ordering_suite(opts),     stationarity_suite(opts)};
}

}  // namespace stagecf::verification
