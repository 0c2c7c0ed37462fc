#include "stagecf/score_network.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <chrono>
#include <cmath>

#include "oracles.hpp"
#include "stagecf/checkpoint.hpp"
#include "stagecf/errors.hpp"
#include "stagecf/verification.hpp"

namespace stagecf {
namespace {

NetworkShape small_shape(std::size_t items = 5, std::vector<std::size_t> hidden = {8}) {
  NetworkShape s;
  s.n_items = items;
  s.hidden = std::move(hidden);
  s.time_dim = 4;
  s.stage_count = 10;
  return s;
}

Eigen::MatrixXd random_states(std::size_t items, Eigen::Index batch, int k, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> d(0, k);
  Eigen::MatrixXd s(static_cast<Eigen::Index>(items), batch);
  for (Eigen::Index j = 0; j < batch; ++j) {
    for (Eigen::Index i = 0; i < s.rows(); ++i) s(i, j) = d(rng);
  }
  return s;
}

std::vector<Rng> column_streams(std::size_t batch, std::uint64_t seed) {
  std::vector<Rng> rngs;
  for (std::size_t j = 0; j < batch; ++j) rngs.push_back(derive_stream(seed, StreamTag::dropout, j));
  return rngs;
}

TEST(NetworkShape, MirroredWidths) {
  NetworkShape s;
  s.n_items = 50;
  s.hidden = {600, 200};
  EXPECT_EQ(s.layer_widths(), (std::vector<std::size_t>{50, 600, 200, 600, 50}));
  EXPECT_EQ(s.n_layers(), 4u);
  s.hidden = {1000};
  EXPECT_EQ(s.layer_widths(), (std::vector<std::size_t>{50, 1000, 50}));
}

TEST(TimeEmbedding, BoundedAndDeterministic) {
  for (int step = 1; step <= 100; ++step) {
    const auto e = time_embedding(step, 16);
    ASSERT_EQ(e.size(), 16);
    EXPECT_LE(e.cwiseAbs().maxCoeff(), 1.0);
    EXPECT_EQ(e, time_embedding(step, 16));
  }
  const auto e = time_embedding(3, 4);
  EXPECT_DOUBLE_EQ(e(0), std::cos(3.0));
  EXPECT_DOUBLE_EQ(e(2), std::sin(3.0));
  EXPECT_NEAR(e(1), std::cos(3.0 / 100.0), 1e-15);
}

TEST(NetForward, ZeroWeightsGiveZeroLogits) {
  const auto p = zero_params(small_shape(), 0.5);
  const auto states = random_states(5, 3, 10, 1);
  const std::vector<int> steps{1, 50, 100};
  EXPECT_EQ(net_forward(p, states, steps, false), Eigen::MatrixXd::Zero(5, 3));
}

TEST(NetForward, EvalModeIsBitIdentical) {
  auto rng = derive_stream(2, StreamTag::init);
  const auto p = init_params(small_shape(7, {16, 8}), 0.5, rng);
  const auto states = random_states(7, 4, 10, 2);
  const std::vector<int> steps{3, 9, 27, 81};
  EXPECT_EQ(net_forward(p, states, steps, false), net_forward(p, states, steps, false));
}

TEST(NetForward, FiniteAtMaximumInput) {
  auto rng = derive_stream(3, StreamTag::init);
  NetworkShape s;
  s.n_items = 40;
  s.hidden = {64};
  s.stage_count = 400;
  const auto p = init_params(s, 0.5, rng);
  const std::vector<std::int32_t> full(40, 400);
  EXPECT_TRUE(net_forward(p, full, 100).allFinite());
}

TEST(NetForward, DimensionMismatch) {
  const auto p = zero_params(small_shape(), 0.0);
  const std::vector<int> steps{1};
  EXPECT_THROW(net_forward(p, Eigen::MatrixXd::Zero(4, 1), steps, false), ContractError);
  EXPECT_THROW(net_forward(p, Eigen::MatrixXd::Zero(5, 2), steps, false), ContractError);
}

TEST(NetForward, TrainModeNeedsStreams) {
  const auto p = zero_params(small_shape(), 0.5);
  const std::vector<int> steps{1};
  EXPECT_THROW(net_forward(p, Eigen::MatrixXd::Zero(5, 1), steps, true), ContractError);
}

TEST(NetForward, BatchColumnsAreIndependent) {
  auto rng = derive_stream(4, StreamTag::init);
  const auto p = init_params(small_shape(6, {12}), 0.0, rng);
  const auto states = random_states(6, 3, 10, 4);
  const std::vector<int> steps{5, 6, 7};
  const auto batched = net_forward(p, states, steps, false);
  for (Eigen::Index j = 0; j < 3; ++j) {
    const std::vector<int> one{steps[j]};
    const Eigen::MatrixXd col = states.col(j);
    EXPECT_TRUE(batched.col(j).isApprox(net_forward(p, col, one, false), 1e-14));
  }
}

TEST(QEstimate, Softplus) {
  EXPECT_NEAR(softplus(0.0), 0.693147, 1e-6);
  EXPECT_GT(softplus(-40.0), 0.0);
  EXPECT_NEAR(softplus(-40.0) / std::exp(-40.0), 1.0, 1e-12);
  EXPECT_NEAR(softplus(40.0), 40.0, 1e-12);
  EXPECT_TRUE(std::isfinite(softplus(1000.0)));
  EXPECT_GT(softplus(-700.0), 0.0);
  Eigen::MatrixXd logits(2, 2);
  logits << -50, 0, 3, 50;
  EXPECT_GT(q_estimate(logits).minCoeff(), 0.0);
}

TEST(QEstimate, SigmoidIsSoftplusDerivative) {
  for (double x : {-30.0, -2.0, 0.0, 0.7, 25.0}) {
    const double h = 1e-6;
    EXPECT_NEAR(sigmoid(x), (softplus(x + h) - softplus(x - h)) / (2 * h), 1e-8);
  }
}

struct GradFixture {
  ScoreNetParams params;
  Eigen::MatrixXd states;
  std::vector<int> steps;
  Eigen::MatrixXd weights;  // loss = sum(weights .* logits)
  ForwardCache cache;
};

GradFixture make_fixture(std::uint64_t seed, std::vector<std::size_t> hidden, double dropout) {
  GradFixture f;
  auto rng = derive_stream(seed, StreamTag::init);
  f.params = init_params(small_shape(5, std::move(hidden)), dropout, rng);
  f.states = random_states(5, 3, 10, seed);
  f.steps = {1 + static_cast<int>(seed % 50), 60, 100};
  std::mt19937_64 g(seed + 17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  f.weights = Eigen::MatrixXd::NullaryExpr(5, 3, [&] { return u(g); });
  auto streams = column_streams(3, seed);
  net_forward(f.params, f.states, f.steps, true, streams, &f.cache);
  return f;
}

TEST(NetBackward, ZeroUpstreamGivesZeroGradients) {
  auto f = make_fixture(1, {8}, 0.3);
  for (const auto& g : net_backward(f.params, f.cache, Eigen::MatrixXd::Zero(5, 3))) {
    EXPECT_EQ(g.cwiseAbs().maxCoeff(), 0.0);
  }
}

TEST(NetBackward, MissingCache) {
  const auto p = zero_params(small_shape(), 0.0);
  ForwardCache empty;
  EXPECT_THROW(net_backward(p, empty, Eigen::MatrixXd::Zero(5, 1)), ContractError);
}

TEST(NetBackward, MaskReuseIsDeterministic) {
  auto f = make_fixture(2, {8, 4}, 0.5);
  const auto a = net_backward(f.params, f.cache, f.weights);
  const auto b = net_backward(f.params, f.cache, f.weights);
  ASSERT_EQ(a.size(), b.size());
  for (std::size_t t = 0; t < a.size(); ++t) EXPECT_EQ(a[t], b[t]);
}

TEST(NetBackward, MatchesFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    auto f = make_fixture(seed, seed % 2 ? std::vector<std::size_t>{8} : std::vector<std::size_t>{8, 4},
                          0.3);
    const auto analytic = net_backward(f.params, f.cache, f.weights);
    for (std::size_t t = 0; t < f.params.tensors.size(); ++t) {
      auto& tensor = f.params.tensors[t];
      std::vector<double> numeric(static_cast<std::size_t>(tensor.size()));
      const double h = 1e-5;
      for (Eigen::Index e = 0; e < tensor.size(); ++e) {
        const double saved = tensor.data()[e];
        tensor.data()[e] = saved + h;
        const double up = (net_forward_with_masks(f.params, f.states, f.steps, f.cache)
                               .cwiseProduct(f.weights)).sum();
        tensor.data()[e] = saved - h;
        const double down = (net_forward_with_masks(f.params, f.states, f.steps, f.cache)
                                 .cwiseProduct(f.weights)).sum();
        tensor.data()[e] = saved;
        numeric[static_cast<std::size_t>(e)] = (up - down) / (2 * h);
      }
      const std::span<const double> a(analytic[t].data(), static_cast<std::size_t>(analytic[t].size()));
      EXPECT_LE(verification::max_relative_error(a, numeric), 1e-4)
          << "seed " << seed << " tensor " << t;
    }
  }
}

TEST(AdamStep, ZeroGradientLeavesParameters) {
  auto rng = derive_stream(5, StreamTag::init);
  auto p = init_params(small_shape(), 0.5, rng);
  const auto before = p.tensors;
  Gradients zero;
  for (const auto& t : p.tensors) zero.push_back(Eigen::MatrixXd::Zero(t.rows(), t.cols()));
  adam_step(p, zero, AdamConfig{0.1});
  EXPECT_EQ(p.adam.step, 1u);
  for (std::size_t t = 0; t < before.size(); ++t) EXPECT_EQ(p.tensors[t], before[t]);
}

TEST(AdamStep, FirstUpdateMagnitudeIsLearningRate) {
  auto p = zero_params(small_shape(1, {1}), 0.0);
  Gradients g;
  for (const auto& t : p.tensors) g.push_back(Eigen::MatrixXd::Ones(t.rows(), t.cols()));
  adam_step(p, g, AdamConfig{0.1, 0.9, 0.999, 1e-8});
  for (const auto& t : p.tensors) {
    for (Eigen::Index e = 0; e < t.size(); ++e) EXPECT_NEAR(t.data()[e], -0.1, 1e-8);
  }
}

TEST(AdamStep, MatchesClosedFormOverSeveralSteps) {
  auto p = zero_params(small_shape(1, {1}), 0.0);
  const std::vector<double> grads{0.5, -1.5, 2.0, 0.25};
  double m = 0, v = 0, theta = 0;
  const double lr = 0.01, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  for (std::size_t s = 0; s < grads.size(); ++s) {
    Gradients g;
    for (const auto& t : p.tensors) g.push_back(Eigen::MatrixXd::Constant(t.rows(), t.cols(), grads[s]));
    adam_step(p, g, AdamConfig{lr, b1, b2, eps});
    m = b1 * m + (1 - b1) * grads[s];
    v = b2 * v + (1 - b2) * grads[s] * grads[s];
    const double mhat = m / (1 - std::pow(b1, s + 1.0));
    const double vhat = v / (1 - std::pow(b2, s + 1.0));
    theta -= lr * mhat / (std::sqrt(vhat) + eps);
  }
  EXPECT_NEAR(p.bias(0)(0, 0), theta, 1e-14);
}

TEST(AdamStep, IdenticalRunsIdenticalTrajectories) {
  auto run = [] {
    auto rng = derive_stream(6, StreamTag::init);
    auto p = init_params(small_shape(), 0.0, rng);
    for (int s = 0; s < 5; ++s) {
      Gradients g;
      for (const auto& t : p.tensors) g.push_back(t * 0.3 + Eigen::MatrixXd::Constant(t.rows(), t.cols(), 0.1 * s));
      adam_step(p, g, AdamConfig{0.01});
    }
    return p.tensors;
  };
  EXPECT_EQ(run(), run());
}

TEST(InitParams, XavierBounds) {
  auto rng = derive_stream(7, StreamTag::init);
  NetworkShape s;
  s.n_items = 30;
  s.hidden = {20};
  const auto p = init_params(s, 0.5, rng);
  const double limit = std::sqrt(6.0 / (20 + 30));
  EXPECT_LE(p.weight(0).cwiseAbs().maxCoeff(), limit);
  EXPECT_GT(p.weight(0).cwiseAbs().maxCoeff(), 0.5 * limit);
  EXPECT_EQ(p.bias(0).cwiseAbs().maxCoeff(), 0.0);
  EXPECT_TRUE(p.all_finite());
  EXPECT_EQ(p.parameter_count(), 20u * 16 + 20 * 30 + 20 + 30 * 20 + 30);
}

TEST(Checkpoint, RoundTrip) {
  oracle::TempDir dir("checkpoint_roundtrip");
  auto rng = derive_stream(8, StreamTag::init);
  auto p = init_params(small_shape(6, {10, 4}), 0.4, rng);
  Gradients g;
  for (const auto& t : p.tensors) g.push_back(t);
  adam_step(p, g, AdamConfig{0.01});
  save_checkpoint(dir / "ck.bin", {p, 0xabcdefULL, "{\"K\":10}"});
  const auto back = load_checkpoint(dir / "ck.bin", 0xabcdefULL);
  EXPECT_EQ(back.config_hash, 0xabcdefULL);
  EXPECT_EQ(back.config_json, "{\"K\":10}");
  EXPECT_EQ(back.params.shape.layer_widths(), p.shape.layer_widths());
  EXPECT_EQ(back.params.shape.stage_count, 10);
  EXPECT_EQ(back.params.dropout, 0.4);
  EXPECT_EQ(back.params.tensors, p.tensors);
  EXPECT_EQ(back.params.adam.first_moment, p.adam.first_moment);
  EXPECT_EQ(back.params.adam.second_moment, p.adam.second_moment);
  EXPECT_EQ(back.params.adam.step, 1u);
}

TEST(Checkpoint, HashMismatchReportsBothHashes) {
  oracle::TempDir dir("checkpoint_mismatch");
  save_checkpoint(dir / "ck.bin", {zero_params(small_shape(), 0.1), 0x1111ULL, "{}"});
  try {
    load_checkpoint(dir / "ck.bin", 0x2222ULL);
    FAIL() << "expected ConfigMismatch";
  } catch (const ConfigMismatch& e) {
    const std::string what = e.what();
    EXPECT_NE(what.find(hex64(0x1111ULL)), std::string::npos);
    EXPECT_NE(what.find(hex64(0x2222ULL)), std::string::npos);
    EXPECT_EQ(e.found(), 0x1111ULL);
    EXPECT_EQ(e.expected(), 0x2222ULL);
  }
}

TEST(Checkpoint, ForeignAndTruncatedFiles) {
  oracle::TempDir dir("checkpoint_foreign");
  EXPECT_THROW(load_checkpoint(dir.write("junk.bin", "not a checkpoint")), std::runtime_error);
  save_checkpoint(dir / "ck.bin", {zero_params(small_shape(), 0.1), 1, "{}"});
  const auto bytes = oracle::read_file(dir / "ck.bin");
  EXPECT_THROW(load_checkpoint(dir.write("cut.bin", bytes.substr(0, bytes.size() / 2))),
               std::runtime_error);
}

TEST(Fnv1a, KnownVectors) {
  EXPECT_EQ(fnv1a64(""), 0xcbf29ce484222325ULL);
  EXPECT_EQ(fnv1a64("a"), 0xaf63dc4c8601ec8cULL);
  EXPECT_EQ(hex64(0xabcULL), "0000000000000abc");
}

// Forward cost is linear in the catalog size: doubling items at fixed width
// must not more than ~double the time. Runs alternate so background load
// hits both sizes alike; the best of each is compared.
TEST(NetForwardScaling, DoublingItemsAtMostDoublesTime) {
  struct Case {
    ScoreNetParams params;
    Eigen::MatrixXd states;
    double best = 1e300;
  };
  auto make = [](std::size_t items) {
    NetworkShape s;
    s.n_items = items;
    s.hidden = {200};
    auto rng = derive_stream(9, StreamTag::init);
    return Case{init_params(s, 0.0, rng), random_states(items, 64, 300, 9)};
  };
  Case small = make(2000);
  Case large = make(4000);
  const std::vector<int> steps(64, 50);
  for (int rep = 0; rep < 15; ++rep) {
    for (Case* c : {&small, &large}) {
      const auto start = std::chrono::steady_clock::now();
      const auto out = net_forward(c->params, c->states, steps, false);
      const auto stop = std::chrono::steady_clock::now();
      ASSERT_TRUE(std::isfinite(out(0, 0)));
      c->best = std::min(c->best, std::chrono::duration<double>(stop - start).count());
    }
  }
  EXPECT_LE(large.best / small.best, 2.3) << "small " << small.best << " s, large " << large.best << " s";
}

}  // namespace
}  // namespace stagecf
