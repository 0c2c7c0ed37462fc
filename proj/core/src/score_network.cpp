#include "stagecf/score_network.hpp"

#include <cmath>
#include <string>

#include "stagecf/errors.hpp"

namespace stagecf {

std::vector<std::size_t> NetworkShape::layer_widths() const {
  std::vector<std::size_t> widths{n_items};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  for (auto it = hidden.rbegin() + 1; it < hidden.rend(); ++it) widths.push_back(*it);
  widths.push_back(n_items);
  return widths;
}

Eigen::VectorXd time_embedding(int step, std::size_t dim) {
  Eigen::VectorXd e = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dim));
  const std::size_t half = dim / 2;
  for (std::size_t j = 0; j < half; ++j) {
    const double freq = std::exp(-std::log(10000.0) * static_cast<double>(j) / static_cast<double>(half));
    const double angle = static_cast<double>(step) * freq;
    e[static_cast<Eigen::Index>(j)] = std::cos(angle);
    e[static_cast<Eigen::Index>(j + half)] = std::sin(angle);
  }
  return e;
}

std::size_t ScoreNetParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors) n += static_cast<std::size_t>(t.size());
  return n;
}

bool ScoreNetParams::all_finite() const {
  for (const auto& t : tensors) {
    if (!t.allFinite()) return false;
  }
  return true;
}

namespace {

void validate_shape(const NetworkShape& shape) {
  if (shape.n_items == 0) throw ContractError("network needs n_items > 0");
  if (shape.hidden.empty()) throw ContractError("network needs at least one hidden layer");
  if (shape.stage_count < 1) throw ContractError("network needs K >= 1");
}

ScoreNetParams allocate(const NetworkShape& shape, double dropout) {
  validate_shape(shape);
  if (!(dropout >= 0.0 && dropout < 1.0)) throw DomainError("dropout must lie in [0, 1)");
  ScoreNetParams p;
  p.shape = shape;
  p.dropout = dropout;
  const auto widths = shape.layer_widths();
  p.tensors.emplace_back(Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(widths[1]),
                                               static_cast<Eigen::Index>(shape.time_dim)));
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    const auto out = static_cast<Eigen::Index>(widths[l + 1]);
    const auto in = static_cast<Eigen::Index>(widths[l]);
    p.tensors.emplace_back(Eigen::MatrixXd::Zero(out, in));
    p.tensors.emplace_back(Eigen::MatrixXd::Zero(out, 1));
  }
  for (const auto& t : p.tensors) {
    p.adam.first_moment.emplace_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
    p.adam.second_moment.emplace_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  }
  return p;
}

void xavier_fill(Eigen::MatrixXd& m, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(m.rows() + m.cols()));
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
      m(r, c) = (2.0 * uniform01(rng) - 1.0) * limit;
    }
  }
}

enum class MaskMode { none, draw, reuse };

Eigen::MatrixXd forward_impl(const ScoreNetParams& params, const Eigen::MatrixXd& states,
                             std::span<const int> steps, MaskMode mode, std::span<Rng> rngs,
                             ForwardCache* cache) {
  const auto& shape = params.shape;
  if (static_cast<std::size_t>(states.rows()) != shape.n_items) {
    throw ContractError("net_forward: state has " + std::to_string(states.rows()) +
                        " rows, network expects " + std::to_string(shape.n_items));
  }
  if (static_cast<std::size_t>(states.cols()) != steps.size()) {
    throw ContractError("net_forward: one step index per column required");
  }
  const auto batch = states.cols();
  if (mode == MaskMode::draw && static_cast<Eigen::Index>(rngs.size()) != batch) {
    throw ContractError("net_forward: training mode needs one dropout stream per column");
  }
  if (mode == MaskMode::reuse && (!cache || !cache->valid)) {
    throw ContractError("net_forward_with_masks: cache holds no masks");
  }

  Eigen::MatrixXd time_features(static_cast<Eigen::Index>(shape.time_dim), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    time_features.col(j) = time_embedding(steps[static_cast<std::size_t>(j)], shape.time_dim);
  }
  Eigen::MatrixXd input = states / static_cast<double>(shape.stage_count);

  const std::size_t n_layers = params.tensors.size() / 2;
  const double keep_scale = 1.0 / (1.0 - params.dropout);

  std::vector<Eigen::MatrixXd> hidden;
  std::vector<Eigen::MatrixXd> masks;
  if (mode == MaskMode::reuse) masks = cache->masks;

  Eigen::MatrixXd act;  // input to the current layer
  for (std::size_t l = 0; l < n_layers; ++l) {
    const Eigen::MatrixXd& layer_in = l == 0 ? input : act;
    Eigen::MatrixXd pre = params.weight(l) * layer_in;
    pre.colwise() += params.bias(l).col(0);
    if (l == 0) pre.noalias() += params.time_projection() * time_features;
    if (l + 1 == n_layers) {
      if (cache) {
        cache->input = std::move(input);
        cache->time_features = std::move(time_features);
        cache->hidden = std::move(hidden);
        cache->masks = std::move(masks);
        cache->valid = mode != MaskMode::none;
      }
      return pre;
    }
    Eigen::MatrixXd h = pre.array().tanh().matrix();
    if (mode == MaskMode::draw) {
      Eigen::MatrixXd mask(h.rows(), h.cols());
      for (Eigen::Index j = 0; j < batch; ++j) {
        Rng& rng = rngs[static_cast<std::size_t>(j)];
        for (Eigen::Index r = 0; r < h.rows(); ++r) {
          mask(r, j) = uniform01(rng) < params.dropout ? 0.0 : keep_scale;
        }
      }
      masks.push_back(std::move(mask));
    }
    if (mode == MaskMode::none) {
      act = h;
    } else {
      if (masks.size() <= l || masks[l].rows() != h.rows() || masks[l].cols() != h.cols()) {
        throw ContractError("dropout mask shape mismatch");
      }
      act = h.cwiseProduct(masks[l]);
    }
    hidden.push_back(std::move(h));
  }
  throw ContractError("network has no layers");
}

}  // namespace

ScoreNetParams init_params(const NetworkShape& shape, double dropout, Rng& rng) {
  auto p = allocate(shape, dropout);
  xavier_fill(p.time_projection(), rng);
  for (std::size_t l = 0; l < p.tensors.size() / 2; ++l) xavier_fill(p.weight(l), rng);
  return p;
}

ScoreNetParams zero_params(const NetworkShape& shape, double dropout) {
  return allocate(shape, dropout);
}

Eigen::MatrixXd net_forward(const ScoreNetParams& params, const Eigen::MatrixXd& states,
                            std::span<const int> steps, bool train_mode, std::span<Rng> column_rngs,
                            ForwardCache* cache) {
  const MaskMode mode = train_mode ? MaskMode::draw : MaskMode::none;
  return forward_impl(params, states, steps, mode, column_rngs, cache);
}

Eigen::MatrixXd net_forward_with_masks(const ScoreNetParams& params, const Eigen::MatrixXd& states,
                                       std::span<const int> steps, ForwardCache& cache) {
  return forward_impl(params, states, steps, MaskMode::reuse, {}, &cache);
}

Eigen::VectorXd net_forward(const ScoreNetParams& params, std::span<const std::int32_t> state,
                            int step) {
  Eigen::MatrixXd x(static_cast<Eigen::Index>(state.size()), 1);
  for (std::size_t i = 0; i < state.size(); ++i) x(static_cast<Eigen::Index>(i), 0) = state[i];
  const int steps[1] = {step};
  return forward_impl(params, x, steps, MaskMode::none, {}, nullptr).col(0);
}

double softplus(double x) {
  // log(1 + e^x) = max(x, 0) + log1p(e^{-|x|})
  return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x)));
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Eigen::MatrixXd q_estimate(const Eigen::MatrixXd& logits) {
  return logits.unaryExpr([](double v) { return softplus(v); });
}

Gradients net_backward(const ScoreNetParams& params, const ForwardCache& cache,
                       const Eigen::MatrixXd& dlogits) {
  if (!cache.valid) throw ContractError("net_backward: forward cache missing");
  const std::size_t n_layers = params.tensors.size() / 2;
  if (cache.hidden.size() + 1 != n_layers || cache.masks.size() + 1 != n_layers) {
    throw ContractError("net_backward: cache does not match network depth");
  }
  if (dlogits.rows() != static_cast<Eigen::Index>(params.shape.n_items) ||
      dlogits.cols() != cache.input.cols()) {
    throw ContractError("net_backward: dlogits shape mismatch");
  }

  Gradients grads(params.tensors.size());
  Eigen::MatrixXd delta = dlogits;  // gradient w.r.t. the current pre-activation
  for (std::size_t l = n_layers; l-- > 0;) {
    if (l == 0) {
      grads[1] = delta * cache.input.transpose();
      grads[2] = delta.rowwise().sum();
      grads[0] = delta * cache.time_features.transpose();
      break;
    }
    const Eigen::MatrixXd layer_in = cache.hidden[l - 1].cwiseProduct(cache.masks[l - 1]);
    grads[1 + 2 * l] = delta * layer_in.transpose();
    grads[2 + 2 * l] = delta.rowwise().sum();
    Eigen::MatrixXd upstream = params.weight(l).transpose() * delta;
    const auto& h = cache.hidden[l - 1];
    delta = upstream.cwiseProduct(cache.masks[l - 1])
                .cwiseProduct((1.0 - h.array().square()).matrix());
  }
  return grads;
}

void adam_step(ScoreNetParams& params, const Gradients& grads, const AdamConfig& cfg) {
  if (grads.size() != params.tensors.size()) throw ContractError("adam_step: gradient count");
  auto& st = params.adam;
  ++st.step;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(st.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(st.step));
  for (std::size_t k = 0; k < grads.size(); ++k) {
    auto& m = st.first_moment[k];
    auto& v = st.second_moment[k];
    const auto& g = grads[k];
    if (g.rows() != m.rows() || g.cols() != m.cols()) throw ContractError("adam_step: shape");
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * g.cwiseAbs2();
    params.tensors[k].array() -=
        cfg.lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + cfg.eps);
  }
}

}  // namespace stagecf
