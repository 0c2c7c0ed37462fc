#include "stagecf/recommender.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <istream>
#include <mutex>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <thread>

#include "stagecf/errors.hpp"

namespace stagecf {

namespace {

double reverse_ratio(const BurnUpOptions& opts, double coeff, double t, double dt) {
  if (opts.decay.scheme == DecayScheme::burndown) {
    return bridge_ratio(coeff, t, dt, opts.schedule.rate_mode);
  }
  const double p_prev = scheme_survival(opts.decay, coeff, std::max(t - dt, 0.0));
  const double p_now = scheme_survival(opts.decay, coeff, t);
  if (p_now >= 1.0) return 0.0;
  return std::clamp(bridge_ratio_from_survival(p_prev, p_now), 0.0, 1.0);
}

}  // namespace

std::vector<std::int32_t> burn_up_step(StageVector& x, std::span<const double> q,
                                       std::span<const double> coeffs, int step,
                                       const BurnUpOptions& opts, Rng& rng) {
  const std::size_t n = x.size();
  if (q.size() != n || coeffs.size() != n) throw ContractError("burn_up_step: size mismatch");
  const double dt = opts.schedule.dt();
  const double t = opts.schedule.time_of(step);
  const int k_max = opts.stage_count;

  std::vector<std::int32_t> headroom(n);
  std::vector<double> clamped(n);
  for (std::size_t i = 0; i < n; ++i) {
    headroom[i] = k_max - x[i];
    clamped[i] = std::clamp(q[i], 0.0, static_cast<double>(headroom[i]));
  }

  std::vector<std::int32_t> delta;
  if (opts.schedule.mode == SamplerMode::poisson) {
    delta = poisson_step(clamped, t, dt, headroom, rng);
  } else {
    std::vector<std::int32_t> trials(n);
    std::vector<double> ratio(n);
    for (std::size_t i = 0; i < n; ++i) {
      trials[i] = static_cast<std::int32_t>(std::lround(clamped[i]));
      ratio[i] = reverse_ratio(opts, coeffs[i], t, dt);
    }
    delta = bridge_sample(trials, ratio, rng);
  }
  for (std::size_t i = 0; i < n; ++i) x[i] += delta[i];
  return delta;
}

StageVector burn_up_from(const DeficitEstimator& estimator, StageVector x,
                         std::span<const double> coeffs, const BurnUpOptions& opts, Rng& rng) {
  opts.schedule.validate();
  if (x.size() != coeffs.size()) throw ContractError("burn_up: size mismatch");
  for (int step = opts.schedule.reverse_steps(); step >= 1; --step) {
    const auto q = estimator(x, step);
    burn_up_step(x, q, coeffs, step, opts, rng);
  }
  return x;
}

StageVector burn_up(const DeficitEstimator& estimator, std::span<const ItemId> history,
                    std::span<const double> coeffs, const BurnUpOptions& opts, Rng& rng) {
  return burn_up_from(estimator, stage_init(history, coeffs.size(), opts.stage_count), coeffs,
                      opts, rng);
}

StageVector burn_up(const ScoreNetParams& params, std::span<const ItemId> history,
                    std::span<const double> coeffs, const BurnUpOptions& opts, Rng& rng) {
  const DeficitEstimator net = [&params](std::span<const std::int32_t> state, int step) {
    const Eigen::VectorXd logits = net_forward(params, state, step);
    std::vector<double> q(static_cast<std::size_t>(logits.size()));
    for (Eigen::Index i = 0; i < logits.size(); ++i) q[static_cast<std::size_t>(i)] = softplus(logits[i]);
    return q;
  };
  return burn_up(net, history, coeffs, opts, rng);
}

RecommendationList top_k(std::span<const std::int32_t> scores, std::span<const ItemId> history,
                         std::size_t cutoff, UserId user, std::uint64_t seed) {
  if (cutoff < 1) throw DomainError("top_k: cutoff must be >= 1");
  struct Candidate {
    std::int32_t score;
    std::uint64_t tie;
    ItemId item;
  };
  std::vector<Candidate> candidates;
  candidates.reserve(scores.size());
  for (ItemId i = 0; i < scores.size(); ++i) {
    if (std::binary_search(history.begin(), history.end(), i)) continue;
    candidates.push_back({scores[i], hash_key(user, i, seed), i});
  }
  const std::size_t n = std::min(cutoff, candidates.size());
  const auto better = [](const Candidate& a, const Candidate& b) {
    if (a.score != b.score) return a.score > b.score;
    if (a.tie != b.tie) return a.tie < b.tie;
    return a.item < b.item;
  };
  std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(n),
                    candidates.end(), better);
  RecommendationList out;
  out.user = user;
  out.items.reserve(n);
  out.scores.reserve(n);
  for (std::size_t r = 0; r < n; ++r) {
    out.items.push_back(candidates[r].item);
    out.scores.push_back(candidates[r].score);
  }
  return out;
}

std::vector<RecommendationList> recommend_users(const ScoreNetParams& params,
                                                const InteractionMatrix& train,
                                                const DecayCache& decay,
                                                const RecommendConfig& cfg,
                                                std::span<const UserId> users) {
  const auto& opts = cfg.burn_up;
  opts.schedule.validate();
  if (params.shape.n_items != train.n_items()) {
    throw ContractError("recommend_users: network and data disagree on n_items");
  }
  std::vector<UserId> all;
  if (users.empty()) {
    all.resize(train.n_users());
    std::iota(all.begin(), all.end(), UserId{0});
    users = all;
  }
  const std::size_t n_items = train.n_items();
  const std::size_t chunk = std::max<std::size_t>(1, cfg.chunk);
  const std::size_t n_chunks = (users.size() + chunk - 1) / chunk;
  std::vector<RecommendationList> out(users.size());
  std::mutex decay_mutex;

  const auto run_chunk = [&](std::size_t c) {
    const std::size_t begin = c * chunk;
    const std::size_t end = std::min(users.size(), begin + chunk);
    const auto batch = static_cast<Eigen::Index>(end - begin);

    std::vector<StageVector> states;
    std::vector<std::vector<double>> coeffs;
    std::vector<Rng> rngs;
    Eigen::MatrixXd x(static_cast<Eigen::Index>(n_items), batch);
    for (std::size_t b = begin; b < end; ++b) {
      const UserId u = users[b];
      states.push_back(stage_init(train.row(u), n_items, opts.stage_count));
      {
        std::lock_guard lock(decay_mutex);
        const auto c_u = decay.get(u);
        coeffs.emplace_back(c_u.begin(), c_u.end());
      }
      rngs.push_back(derive_stream(cfg.seed, StreamTag::recommend, u));
      const auto col = static_cast<Eigen::Index>(b - begin);
      for (std::size_t i = 0; i < n_items; ++i) {
        x(static_cast<Eigen::Index>(i), col) = states.back()[i];
      }
    }

    std::vector<int> steps(static_cast<std::size_t>(batch));
    std::vector<double> q(n_items);
    for (int step = opts.schedule.reverse_steps(); step >= 1; --step) {
      std::fill(steps.begin(), steps.end(), step);
      const Eigen::MatrixXd logits = net_forward(params, x, steps, false);
      for (Eigen::Index j = 0; j < batch; ++j) {
        const auto col = static_cast<std::size_t>(j);
        for (std::size_t i = 0; i < n_items; ++i) {
          q[i] = softplus(logits(static_cast<Eigen::Index>(i), j));
        }
        const auto delta = burn_up_step(states[col], q, coeffs[col], step, opts, rngs[col]);
        for (std::size_t i = 0; i < n_items; ++i) {
          if (delta[i] != 0) x(static_cast<Eigen::Index>(i), j) = states[col][i];
        }
      }
    }
    for (std::size_t b = begin; b < end; ++b) {
      const UserId u = users[b];
      out[b] = top_k(states[b - begin], train.row(u), cfg.cutoff, u, cfg.seed);
    }
  };

  const std::size_t workers = std::clamp<std::size_t>(cfg.workers, 1, std::max<std::size_t>(1, n_chunks));
  if (workers == 1) {
    for (std::size_t c = 0; c < n_chunks; ++c) run_chunk(c);
  } else {
    if (decay.caching()) decay.warm();
    std::vector<std::thread> pool;
    std::atomic<std::size_t> next{0};
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t c = next++; c < n_chunks; c = next++) run_chunk(c);
      });
    }
    for (auto& t : pool) t.join();
  }
  return out;
}

std::vector<RecommendationList> popularity_recommend(const InteractionMatrix& train,
                                                     std::size_t cutoff, std::uint64_t seed) {
  const auto deg = train.item_degrees();
  std::vector<std::int32_t> scores(deg.begin(), deg.end());
  std::vector<RecommendationList> out;
  out.reserve(train.n_users());
  for (UserId u = 0; u < train.n_users(); ++u) {
    out.push_back(top_k(scores, train.row(u), cutoff, u, seed));
  }
  return out;
}

void write_recommendations(std::ostream& out, std::span<const RecommendationList> lists) {
  for (const auto& list : lists) {
    for (std::size_t r = 0; r < list.items.size(); ++r) {
      out << list.user << '\t' << list.items[r] << '\t' << list.scores[r] << '\t' << (r + 1)
          << '\n';
    }
  }
}

std::vector<RecommendationList> read_recommendations(std::istream& in) {
  std::vector<RecommendationList> lists;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    long long user = -1;
    long long item = -1;
    long long score = 0;
    long long rank = 0;
    std::string extra;
    if (!(fields >> user >> item >> score >> rank) || (fields >> extra) || user < 0 || item < 0 ||
        rank < 1) {
      throw ParseError(line_no, "expected 'user\\titem\\tscore\\trank'");
    }
    if (lists.empty() || lists.back().user != static_cast<UserId>(user)) {
      lists.push_back({static_cast<UserId>(user), {}, {}});
    }
    auto& list = lists.back();
    if (static_cast<std::size_t>(rank) != list.items.size() + 1) {
      throw ParseError(line_no, "rank " + std::to_string(rank) + " out of sequence");
    }
    list.items.push_back(static_cast<ItemId>(item));
    list.scores.push_back(static_cast<std::int32_t>(score));
  }
  return lists;
}

}  // namespace stagecf
