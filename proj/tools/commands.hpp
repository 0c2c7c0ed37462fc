#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "stagecf/evaluator.hpp"
#include "stagecf/trainer.hpp"

namespace stagecf::cli {

/// Bad invocation or unreadable input; maps to exit code 2.
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs. Loaded from a JSON file, then overridden by flags.
struct RunConfig {
  TrainConfig train;
  std::filesystem::path train_path;
  std::filesystem::path test_path;
  std::filesystem::path valid_path;  // empty: split from train_path
  double valid_fraction = 0.1;
  std::filesystem::path out_dir = "stagecf_run";
  std::size_t workers = 1;
  std::size_t cutoff = 50;
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;

  /// Defaults follow the reference setup: T = T' = 4, 100 steps, K = 300,
  /// gamma = 1, lr = 1e-4, dropout 0.5, patience 5.
  static RunConfig defaults();

  nlohmann::ordered_json to_json() const;
  /// Unknown keys are rejected so typos do not silently fall back to defaults.
  static RunConfig from_json(const nlohmann::json& j, RunConfig base = defaults());
  static RunConfig from_file(const std::filesystem::path& path);

  /// Hash of the keys that determine the trained model. Inference-only keys
  /// (sampler, rate mode, reverse horizon, cutoffs, workers, paths) are excluded
  /// so one checkpoint can be sampled under different settings.
  std::uint64_t model_hash() const;
};

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path log;
  std::filesystem::path curve;
  int best_epoch = 0;
  double best_valid_recall = 0.0;
};

TrainOutputs cmd_train(const RunConfig& cfg, std::ostream& log);

struct RecommendOutputs {
  std::filesystem::path recommendations;
  std::size_t users = 0;
  std::size_t empty_lists = 0;
};

RecommendOutputs cmd_recommend(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                               const std::filesystem::path& out, std::ostream& log);

MetricsReport cmd_evaluate(const std::filesystem::path& recommendations,
                           const std::filesystem::path& test, const std::filesystem::path& train,
                           const std::filesystem::path& out, const std::vector<std::size_t>& cutoffs,
                           std::ostream& log);

/// Runs the oracle suites; returns true when all pass.
bool cmd_verify(std::size_t samples, std::uint64_t seed, std::ostream& log);

struct SynthConfig {
  std::size_t n_users = 200;
  std::size_t n_items = 100;
  std::size_t n_blocks = 2;
  double holdout = 0.2;
  std::uint64_t seed = 1;
  double p_in = 0.6;
  double p_out = 0.02;
};

/// Block-structured interactions split per user into train.txt / test.txt.
std::pair<InteractionMatrix, InteractionMatrix> synthesize(const SynthConfig& cfg);
void cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log);

/// Loads train and test files onto common dimensions.
std::pair<InteractionMatrix, InteractionMatrix> load_train_test(const std::filesystem::path& train,
                                                                const std::filesystem::path& test);

/// Build-time git revision ("unknown" outside a checkout).
const char* git_revision();

}  // namespace stagecf::cli
