#include "stagecf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "stagecf/errors.hpp"
#include "stagecf/evaluator.hpp"
#include "stagecf/recommender.hpp"

namespace stagecf {

NetworkShape TrainConfig::network_shape(std::size_t n_items) const {
  NetworkShape s;
  s.n_items = n_items;
  s.hidden = hidden;
  s.time_dim = time_dim;
  s.stage_count = stage_count;
  return s;
}

void TrainConfig::validate() const {
  schedule.validate();
  if (stage_count < 1) throw DomainError("K must be >= 1");
  if (!(gamma >= 0.0)) throw DomainError("gamma must be >= 0");
  if (patience < 1) throw DomainError("patience must be >= 1");
  if (batch_size < 1) throw DomainError("batch size must be >= 1");
  if (max_epochs < 1) throw DomainError("max_epochs must be >= 1");
  if (!(lr >= 0.0)) throw DomainError("learning rate must be >= 0");
  if (hidden.empty()) throw DomainError("at least one hidden width required");
}

namespace {

constexpr double kLogFloor = 1e-12;

LossValue weighted_loss(std::span<const double> q, std::span<const std::int32_t> x0,
                        std::span<const std::int32_t> xt, auto weight_of) {
  const std::size_t n = q.size();
  if (x0.size() != n || xt.size() != n) throw ContractError("loss: size mismatch");
  LossValue out;
  out.grad.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(q[i] > 0.0)) throw ContractError("loss: q must be > 0");
    const double d = static_cast<double>(x0[i] - xt[i]);
    if (d < 0.0) throw ContractError("loss: xt exceeds x0");
    const double w = weight_of(i);
    out.value += w * (q[i] - d * std::log(std::max(q[i], kLogFloor)));
    out.grad[i] = w * (1.0 - d / q[i]);
  }
  return out;
}

}  // namespace

LossValue elbo_loss(std::span<const double> q, std::span<const std::int32_t> x0,
                    std::span<const std::int32_t> xt, std::span<const double> decay_exponent) {
  if (decay_exponent.size() != q.size()) throw ContractError("elbo_loss: size mismatch");
  return weighted_loss(q, x0, xt, [&](std::size_t i) { return std::exp(-decay_exponent[i]); });
}

LossValue finite_time_loss(std::span<const double> q, std::span<const std::int32_t> x0,
                           std::span<const std::int32_t> xt, double t) {
  const double w = t * std::exp(-t);
  return weighted_loss(q, x0, xt, [w](std::size_t) { return w; });
}

ScoreNetParams init_model(const TrainConfig& cfg, std::size_t n_items) {
  auto rng = derive_stream(cfg.seed, StreamTag::init);
  return init_params(cfg.network_shape(n_items), cfg.dropout, rng);
}

LossBreakdown train_epoch(ScoreNetParams& params, const InteractionMatrix& train,
                          const DecayCache& decay, const TrainConfig& cfg, int epoch) {
  const std::size_t n_items = train.n_items();
  if (params.shape.n_items != n_items) throw ContractError("train_epoch: n_items mismatch");

  std::vector<UserId> order;
  for (UserId u = 0; u < train.n_users(); ++u) {
    if (train.user_degree(u) > 0) order.push_back(u);
  }
  auto shuffle_rng = derive_stream(cfg.seed, StreamTag::shuffle, 0, static_cast<std::uint64_t>(epoch));
  std::shuffle(order.begin(), order.end(), shuffle_rng);

  const auto n_steps = cfg.schedule.n_steps;
  const AdamConfig adam = cfg.adam();
  LossBreakdown out;

  for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
    const std::size_t end = std::min(order.size(), begin + cfg.batch_size);
    const auto batch = static_cast<Eigen::Index>(end - begin);

    std::vector<StageVector> x0(static_cast<std::size_t>(batch));
    std::vector<StageVector> xt(static_cast<std::size_t>(batch));
    std::vector<std::vector<double>> weights(static_cast<std::size_t>(batch));
    std::vector<int> steps(static_cast<std::size_t>(batch));
    std::vector<Rng> dropout_rngs;
    dropout_rngs.reserve(static_cast<std::size_t>(batch));
    Eigen::MatrixXd states(static_cast<Eigen::Index>(n_items), batch);

    for (Eigen::Index j = 0; j < batch; ++j) {
      const auto col = static_cast<std::size_t>(j);
      const UserId u = order[begin + col];
      auto rng = derive_stream(cfg.seed, StreamTag::train, u, static_cast<std::uint64_t>(epoch));
      dropout_rngs.push_back(
          derive_stream(cfg.seed, StreamTag::dropout, u, static_cast<std::uint64_t>(epoch)));

      const int step = 1 + static_cast<int>(uniform01(rng) * n_steps);
      const double t = cfg.schedule.time_of(std::min(step, n_steps));
      steps[col] = std::min(step, n_steps);

      const auto coeffs = decay.get(u);
      x0[col] = stage_init(train.row(u), n_items, cfg.stage_count);
      xt[col] = scheme_forward_sample(cfg.decay, x0[col], coeffs, t, rng);

      auto& w = weights[col];
      w.resize(n_items);
      for (std::size_t i = 0; i < n_items; ++i) {
        w[i] = cfg.objective == Objective::finite_time ? t * std::exp(-t)
                                                       : scheme_survival(cfg.decay, coeffs[i], t);
        states(static_cast<Eigen::Index>(i), j) = xt[col][i];
      }
    }

    ForwardCache cache;
    const Eigen::MatrixXd logits = net_forward(params, states, steps, true, dropout_rngs, &cache);
    Eigen::MatrixXd dlogits(logits.rows(), logits.cols());
    double batch_total = 0.0;
    std::vector<double> per_user(static_cast<std::size_t>(batch));
    std::vector<double> q(n_items);
    for (Eigen::Index j = 0; j < batch; ++j) {
      const auto col = static_cast<std::size_t>(j);
      for (std::size_t i = 0; i < n_items; ++i) q[i] = softplus(logits(static_cast<Eigen::Index>(i), j));
      const auto& w = weights[col];
      const auto loss = weighted_loss(q, x0[col], xt[col], [&w](std::size_t i) { return w[i]; });
      per_user[col] = loss.value;
      batch_total += loss.value;
      for (std::size_t i = 0; i < n_items; ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        dlogits(r, j) = loss.grad[i] * sigmoid(logits(r, j)) / static_cast<double>(batch);
      }
    }

    if (!std::isfinite(batch_total)) {
      std::ostringstream dump;
      dump << "non-finite loss in epoch " << epoch << " batch starting at position " << begin << ":";
      for (Eigen::Index j = 0; j < batch; ++j) {
        const auto col = static_cast<std::size_t>(j);
        dump << " [user=" << order[begin + col] << " step=" << steps[col]
             << " loss=" << per_user[col] << ']';
      }
      throw TrainingDiverged(dump.str());
    }

    const Gradients grads = net_backward(params, cache, dlogits);
    adam_step(params, grads, adam);

    out.total += batch_total;
    out.samples += static_cast<std::size_t>(batch);
    ++out.batches;
  }
  out.mean = out.samples ? out.total / static_cast<double>(out.samples) : 0.0;
  return out;
}

FitResult fit(const InteractionMatrix& train, const TrainConfig& cfg, const Validator& validator,
              std::ostream* log) {
  cfg.validate();
  const auto adjacency = normalize(train);
  const DecayCache decay(adjacency, cfg.gamma);

  auto params = init_model(cfg, train.n_items());
  FitResult result;
  result.best = params;
  result.best_score = -1.0;
  int since_best = 0;
  const auto start = std::chrono::steady_clock::now();

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    const auto loss = train_epoch(params, train, decay, cfg, epoch);
    const double score = validator(params, epoch);
    const double elapsed =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    result.curve.push_back({epoch, loss.mean, score, elapsed});
    if (log) {
      *log << "epoch=" << epoch << " loss=" << std::setprecision(10) << loss.mean
           << " valid_recall@20=" << score << " elapsed_s=" << std::setprecision(4) << elapsed
           << '\n';
      log->flush();
    }
    if (score > result.best_score) {
      result.best_score = score;
      result.best_epoch = epoch;
      result.best = params;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  return result;
}

double burn_up_recall(const ScoreNetParams& params, const InteractionMatrix& train,
                      const InteractionMatrix& truth, const TrainConfig& cfg, std::size_t k,
                      SamplerMode mode) {
  const auto adjacency = normalize(train);
  const DecayCache decay(adjacency, cfg.gamma);
  RecommendConfig rc;
  rc.burn_up.schedule = cfg.schedule;
  rc.burn_up.schedule.mode = mode;
  rc.burn_up.stage_count = cfg.stage_count;
  rc.burn_up.decay = cfg.decay;
  rc.cutoff = k;
  rc.seed = cfg.seed;
  std::vector<UserId> users;
  for (UserId u = 0; u < truth.n_users(); ++u) {
    if (truth.user_degree(u) > 0) users.push_back(u);
  }
  if (users.empty()) return 0.0;
  const auto lists = recommend_users(params, train, decay, rc, users);
  EvaluateOptions opts;
  opts.cutoffs = {k};
  opts.train = &train;
  return evaluate(lists, truth, opts).at.at(k).recall;
}

FitResult fit(const InteractionMatrix& train, const InteractionMatrix& valid,
              const TrainConfig& cfg, std::ostream* log) {
  const Validator validator = [&](const ScoreNetParams& params, int) {
    return burn_up_recall(params, train, valid, cfg, 20, cfg.schedule.mode);
  };
  return fit(train, cfg, validator, log);
}

ScoreNetParams train_for_epochs(const InteractionMatrix& train, const TrainConfig& cfg, int epochs) {
  cfg.validate();
  const auto adjacency = normalize(train);
  const DecayCache decay(adjacency, cfg.gamma);
  auto params = init_model(cfg, train.n_items());
  for (int epoch = 1; epoch <= epochs; ++epoch) train_epoch(params, train, decay, cfg, epoch);
  return params;
}

}  // namespace stagecf
