#include <CLI11.hpp>

#include <iostream>
#include <optional>

#include "commands.hpp"
#include "stagecf/checkpoint.hpp"
#include "stagecf/errors.hpp"

using namespace stagecf;
using namespace stagecf::cli;

namespace {

// Flags that override the config file. Unset optionals leave the file value.
struct Overrides {
  std::optional<std::string> train, test, valid, out;
  std::optional<int> K, steps, patience, max_epochs;
  std::optional<double> T, reverse_T, gamma, lr, dropout, valid_fraction;
  std::optional<std::string> sampler, rate_mode, objective, decay_scheme;
  std::optional<std::vector<std::size_t>> hidden;
  std::optional<std::size_t> batch_size, workers, cutoff;
  std::optional<std::uint64_t> seed;
};

void add_model_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--K", o.K, "Stage count");
  cmd->add_option("--T", o.T, "Forward horizon");
  cmd->add_option("--steps", o.steps, "Grid steps");
  cmd->add_option("--gamma", o.gamma, "Collaborative decay strength");
  cmd->add_option("--objective", o.objective, "instantaneous | finite_time");
  cmd->add_option("--decay-scheme", o.decay_scheme, "burndown | exponential_deterministic | power | linear");
  cmd->add_option("--hidden", o.hidden, "Hidden widths of the encoder half");
  cmd->add_option("--lr", o.lr, "Adam learning rate");
  cmd->add_option("--dropout", o.dropout, "Dropout rate");
  cmd->add_option("--batch-size", o.batch_size, "Users per batch");
  cmd->add_option("--patience", o.patience, "Early-stopping patience");
  cmd->add_option("--max-epochs", o.max_epochs, "Epoch cap");
  cmd->add_option("--valid-fraction", o.valid_fraction, "Per-user validation holdout");
  cmd->add_option("--seed", o.seed, "Master seed");
}

void add_sampling_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--sampler", o.sampler, "bridge | poisson");
  cmd->add_option("--rate-mode", o.rate_mode, "personalized | global");
  cmd->add_option("--reverse-T", o.reverse_T, "Reverse horizon");
  cmd->add_option("--workers", o.workers, "Worker threads");
}

RunConfig resolve(const std::string& config_path, const Overrides& o) {
  RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::from_file(config_path);
  nlohmann::json j = nlohmann::json::object();
  auto put = [&](const char* key, const auto& opt) {
    if (opt) j[key] = *opt;
  };
  put("train_path", o.train);
  put("test_path", o.test);
  put("valid_path", o.valid);
  put("out_dir", o.out);
  put("K", o.K);
  put("T", o.T);
  put("steps", o.steps);
  put("reverse_T", o.reverse_T);
  put("gamma", o.gamma);
  put("objective", o.objective);
  put("decay_scheme", o.decay_scheme);
  put("sampler", o.sampler);
  put("rate_mode", o.rate_mode);
  put("hidden", o.hidden);
  put("lr", o.lr);
  put("dropout", o.dropout);
  put("batch_size", o.batch_size);
  put("patience", o.patience);
  put("max_epochs", o.max_epochs);
  put("valid_fraction", o.valid_fraction);
  put("seed", o.seed);
  put("workers", o.workers);
  put("cutoff", o.cutoff);
  return RunConfig::from_json(j, cfg);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stage-wise burn-down diffusion collaborative filtering"};
  app.require_subcommand(1);

  std::string config_path;
  Overrides o;

  auto* train = app.add_subcommand("train", "Train a model with early stopping");
  train->add_option("--config", config_path, "JSON run config");
  train->add_option("--train", o.train, "Training interactions");
  train->add_option("--valid", o.valid, "Validation interactions (default: split from --train)");
  train->add_option("--out", o.out, "Output directory");
  add_model_flags(train, o);
  add_sampling_flags(train, o);

  std::string checkpoint, recs_out;
  auto* rec = app.add_subcommand("recommend", "Write top-k lists from a checkpoint");
  rec->add_option("--config", config_path, "JSON run config used for training");
  rec->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  rec->add_option("--train", o.train, "History to mask and start from");
  rec->add_option("--out", recs_out, "Recommendation TSV")->required();
  rec->add_option("--cutoff", o.cutoff, "List length");
  add_model_flags(rec, o);
  add_sampling_flags(rec, o);

  std::string recs_in, test_path, train_path, metrics_out;
  std::vector<std::size_t> cutoffs = kDefaultCutoffs;
  auto* eval = app.add_subcommand("evaluate", "Score recommendation lists");
  eval->add_option("--recs", recs_in, "Recommendation TSV")->required();
  eval->add_option("--test", test_path, "Test interactions")->required();
  eval->add_option("--train", train_path, "Training interactions (popularity groups)")->required();
  eval->add_option("--out", metrics_out, "Metrics JSON");
  eval->add_option("--cutoffs", cutoffs, "Cutoffs");

  std::size_t samples = 100000;
  std::uint64_t verify_seed = 20240601;
  auto* verify = app.add_subcommand("verify", "Run the oracle suites");
  verify->add_option("--samples", samples, "Monte Carlo draws per cell");
  verify->add_option("--seed", verify_seed, "Seed");

  SynthConfig synth_cfg;
  std::string synth_out = "synth";
  auto* synth = app.add_subcommand("synth", "Generate block-structured data");
  synth->add_option("--users", synth_cfg.n_users);
  synth->add_option("--items", synth_cfg.n_items);
  synth->add_option("--blocks", synth_cfg.n_blocks);
  synth->add_option("--holdout", synth_cfg.holdout);
  synth->add_option("--seed", synth_cfg.seed);
  synth->add_option("--p-in", synth_cfg.p_in);
  synth->add_option("--p-out", synth_cfg.p_out);
  synth->add_option("--out", synth_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*train) {
      cmd_train(resolve(config_path, o), std::cout);
    } else if (*rec) {
      auto cfg = resolve(config_path, o);
      const auto r = cmd_recommend(cfg, checkpoint, recs_out, std::cout);
      if (r.empty_lists > 0) std::cerr << r.empty_lists << " users received empty lists\n";
    } else if (*eval) {
      cmd_evaluate(recs_in, test_path, train_path, metrics_out, cutoffs, std::cout);
    } else if (*verify) {
      return cmd_verify(samples, verify_seed, std::cout) ? 0 : 1;
    } else if (*synth) {
      cmd_synth(synth_cfg, synth_out, std::cout);
    }
  } catch (const ConfigMismatch& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const ParseError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const BoundsError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const DomainError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
