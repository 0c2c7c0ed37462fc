#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <ostream>
#include <set>
#include <sstream>

#include "stagecf/checkpoint.hpp"
#include "stagecf/errors.hpp"
#include "stagecf/recommender.hpp"
#include "stagecf/verification.hpp"

#ifndef STAGECF_GIT_REVISION
#define STAGECF_GIT_REVISION "unknown"
#endif

namespace stagecf::cli {

namespace {

using json = nlohmann::json;
using ordered_json = nlohmann::ordered_json;

const char* sampler_name(SamplerMode m) { return m == SamplerMode::bridge ? "bridge" : "poisson"; }
const char* rate_name(RateMode m) { return m == RateMode::personalized ? "personalized" : "global"; }
const char* objective_name(Objective o) {
  return o == Objective::instantaneous ? "instantaneous" : "finite_time";
}
const char* scheme_name(DecayScheme s) {
  switch (s) {
    case DecayScheme::burndown:
      return "burndown";
    case DecayScheme::exponential_deterministic:
      return "exponential_deterministic";
    case DecayScheme::power:
      return "power";
    case DecayScheme::linear:
      return "linear";
  }
  return "burndown";
}

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& value,
                std::initializer_list<std::pair<const char*, Enum>> options) {
  for (const auto& [name, e] : options) {
    if (value == name) return e;
  }
  throw InputError("config key '" + key + "': unknown value '" + value + "'");
}

ordered_json model_keys(const RunConfig& c) {
  const auto& t = c.train;
  ordered_json j;
  j["K"] = t.stage_count;
  j["T"] = t.schedule.horizon;
  j["steps"] = t.schedule.n_steps;
  j["gamma"] = t.gamma;
  j["objective"] = objective_name(t.objective);
  j["decay_scheme"] = scheme_name(t.decay.scheme);
  j["alpha"] = t.decay.alpha;
  j["beta"] = t.decay.beta;
  j["lambda"] = t.decay.lambda;
  j["hidden"] = t.hidden;
  j["time_dim"] = t.time_dim;
  j["lr"] = t.lr;
  j["dropout"] = t.dropout;
  j["batch_size"] = t.batch_size;
  j["patience"] = t.patience;
  j["max_epochs"] = t.max_epochs;
  j["seed"] = t.seed;
  j["valid_fraction"] = c.valid_fraction;
  return j;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw InputError("cannot write " + path.string());
  out << text;
}

InteractionMatrix load_or_fail(const std::filesystem::path& path) {
  if (path.empty()) throw InputError("missing data path");
  if (!std::filesystem::exists(path)) throw InputError("file not found: " + path.string());
  try {
    return load_interactions(path);
  } catch (const std::invalid_argument& e) {
    throw InputError(path.string() + ": " + e.what());
  }
}

InteractionMatrix resize(const InteractionMatrix& m, std::size_t n_users, std::size_t n_items) {
  std::vector<std::vector<ItemId>> rows(n_users);
  for (UserId u = 0; u < m.n_users(); ++u) {
    const auto r = m.row(u);
    rows[u].assign(r.begin(), r.end());
  }
  return InteractionMatrix(n_users, n_items, std::move(rows));
}

}  // namespace

RunConfig RunConfig::defaults() {
  RunConfig c;
  c.train.stage_count = 300;
  c.train.schedule.horizon = 4.0;
  c.train.schedule.reverse_horizon = 4.0;
  c.train.schedule.n_steps = 100;
  c.train.gamma = 1.0;
  c.train.lr = 1e-4;
  c.train.dropout = 0.5;
  c.train.patience = 5;
  return c;
}

ordered_json RunConfig::to_json() const {
  ordered_json j = model_keys(*this);
  j["reverse_T"] = train.schedule.reverse_horizon;
  j["sampler"] = sampler_name(train.schedule.mode);
  j["rate_mode"] = rate_name(train.schedule.rate_mode);
  j["train_path"] = train_path.string();
  j["test_path"] = test_path.string();
  j["valid_path"] = valid_path.string();
  j["out_dir"] = out_dir.string();
  j["workers"] = workers;
  j["cutoff"] = cutoff;
  j["cutoffs"] = cutoffs;
  j["model_hash"] = hex64(model_hash());
  return j;
}

RunConfig RunConfig::from_json(const json& j, RunConfig c) {
  if (!j.is_object()) throw InputError("config must be a JSON object");
  auto& t = c.train;
  for (const auto& [key, value] : j.items()) {
    try {
      if (key == "K") t.stage_count = value.get<int>();
      else if (key == "T") t.schedule.horizon = value.get<double>();
      else if (key == "reverse_T") t.schedule.reverse_horizon = value.get<double>();
      else if (key == "steps") t.schedule.n_steps = value.get<int>();
      else if (key == "gamma") t.gamma = value.get<double>();
      else if (key == "objective")
        t.objective = parse_enum<Objective>(key, value.get<std::string>(),
                                            {{"instantaneous", Objective::instantaneous},
                                             {"finite_time", Objective::finite_time}});
      else if (key == "decay_scheme")
        t.decay.scheme = parse_enum<DecayScheme>(
            key, value.get<std::string>(),
            {{"burndown", DecayScheme::burndown},
             {"exponential_deterministic", DecayScheme::exponential_deterministic},
             {"power", DecayScheme::power},
             {"linear", DecayScheme::linear}});
      else if (key == "alpha") t.decay.alpha = value.get<double>();
      else if (key == "beta") t.decay.beta = value.get<double>();
      else if (key == "lambda") t.decay.lambda = value.get<double>();
      else if (key == "sampler")
        t.schedule.mode = parse_enum<SamplerMode>(
            key, value.get<std::string>(),
            {{"bridge", SamplerMode::bridge}, {"poisson", SamplerMode::poisson}});
      else if (key == "rate_mode")
        t.schedule.rate_mode = parse_enum<RateMode>(
            key, value.get<std::string>(),
            {{"personalized", RateMode::personalized}, {"global", RateMode::global}});
      else if (key == "hidden") t.hidden = value.get<std::vector<std::size_t>>();
      else if (key == "time_dim") t.time_dim = value.get<std::size_t>();
      else if (key == "lr") t.lr = value.get<double>();
      else if (key == "dropout") t.dropout = value.get<double>();
      else if (key == "batch_size") t.batch_size = value.get<std::size_t>();
      else if (key == "patience") t.patience = value.get<int>();
      else if (key == "max_epochs") t.max_epochs = value.get<int>();
      else if (key == "seed") t.seed = value.get<std::uint64_t>();
      else if (key == "valid_fraction") c.valid_fraction = value.get<double>();
      else if (key == "train_path") c.train_path = value.get<std::string>();
      else if (key == "test_path") c.test_path = value.get<std::string>();
      else if (key == "valid_path") c.valid_path = value.get<std::string>();
      else if (key == "out_dir") c.out_dir = value.get<std::string>();
      else if (key == "workers") c.workers = value.get<std::size_t>();
      else if (key == "cutoff") c.cutoff = value.get<std::size_t>();
      else if (key == "cutoffs") c.cutoffs = value.get<std::vector<std::size_t>>();
      else if (key == "model_hash") continue;  // informational in dumped configs
      else throw InputError("unknown config key '" + key + "'");
    } catch (const json::exception& e) {
      throw InputError("config key '" + key + "': " + e.what());
    }
  }
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("file not found: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw InputError(path.string() + ": " + e.what());
  }
  return from_json(j);
}

std::uint64_t RunConfig::model_hash() const { return fnv1a64(model_keys(*this).dump()); }

const char* git_revision() { return STAGECF_GIT_REVISION; }

std::pair<InteractionMatrix, InteractionMatrix> load_train_test(const std::filesystem::path& train,
                                                                const std::filesystem::path& test) {
  const auto a = load_or_fail(train);
  const auto b = load_or_fail(test);
  const std::size_t users = std::max(a.n_users(), b.n_users());
  const std::size_t items = std::max(a.n_items(), b.n_items());
  return {resize(a, users, items), resize(b, users, items)};
}

TrainOutputs cmd_train(const RunConfig& cfg, std::ostream& log) {
  cfg.train.validate();
  InteractionMatrix train;
  InteractionMatrix valid;
  if (cfg.valid_path.empty()) {
    const auto full = load_or_fail(cfg.train_path);
    std::tie(train, valid) = split_validation(full, cfg.valid_fraction, cfg.train.seed);
  } else {
    std::tie(train, valid) = load_train_test(cfg.train_path, cfg.valid_path);
  }
  if (valid.nnz() == 0) throw InputError("validation split is empty");

  std::filesystem::create_directories(cfg.out_dir);
  TrainOutputs out;
  out.checkpoint = cfg.out_dir / "checkpoint.bin";
  out.log = cfg.out_dir / "train_log.txt";
  out.curve = cfg.out_dir / "validation_curve.json";

  std::ofstream train_log(out.log);
  if (!train_log) throw InputError("cannot write " + out.log.string());

  struct Tee : std::streambuf {
    std::streambuf* a;
    std::streambuf* b;
    Tee(std::streambuf* x, std::streambuf* y) : a(x), b(y) {}
    int overflow(int c) override {
      if (c == EOF) return !EOF;
      return a->sputc(static_cast<char>(c)) == EOF || b->sputc(static_cast<char>(c)) == EOF ? EOF : c;
    }
    int sync() override { return a->pubsync() | b->pubsync(); }
  } tee(train_log.rdbuf(), log.rdbuf());
  std::ostream both(&tee);

  const auto result = fit(train, valid, cfg.train, &both);
  out.best_epoch = result.best_epoch;
  out.best_valid_recall = result.best_score;

  const auto config_json = cfg.to_json().dump(2) + "\n";
  save_checkpoint(out.checkpoint, {result.best, cfg.model_hash(), config_json});
  write_text(cfg.out_dir / "config.json", config_json);

  ordered_json curve;
  curve["best_epoch"] = result.best_epoch;
  curve["best_valid_recall@20"] = result.best_score;
  curve["model_hash"] = hex64(cfg.model_hash());
  curve["curve"] = ordered_json::array();
  for (const auto& rec : result.curve) {
    curve["curve"].push_back({{"epoch", rec.epoch}, {"loss", rec.loss}, {"valid_recall@20", rec.valid_recall}});
  }
  write_text(out.curve, curve.dump(2) + "\n");
  log << "best epoch " << result.best_epoch << " (valid recall@20 " << result.best_score
      << "), checkpoint " << out.checkpoint.string() << '\n';
  return out;
}

RecommendOutputs cmd_recommend(const RunConfig& cfg, const std::filesystem::path& checkpoint,
                               const std::filesystem::path& out, std::ostream& log) {
  if (!std::filesystem::exists(checkpoint)) throw InputError("file not found: " + checkpoint.string());
  const auto ck = load_checkpoint(checkpoint, cfg.model_hash());
  const auto train = load_or_fail(cfg.train_path);
  if (train.n_items() > ck.params.shape.n_items) {
    throw InputError("training file has " + std::to_string(train.n_items()) +
                     " items, checkpoint was trained on " + std::to_string(ck.params.shape.n_items));
  }
  const auto history = resize(train, train.n_users(), ck.params.shape.n_items);
  const auto adjacency = normalize(history);
  const DecayCache decay(adjacency, cfg.train.gamma);

  RecommendConfig rc;
  rc.burn_up.schedule = cfg.train.schedule;
  rc.burn_up.stage_count = cfg.train.stage_count;
  rc.burn_up.decay = cfg.train.decay;
  rc.cutoff = cfg.cutoff;
  rc.seed = cfg.train.seed;
  rc.workers = cfg.workers;
  const auto lists = recommend_users(ck.params, history, decay, rc);

  RecommendOutputs result;
  result.recommendations = out;
  result.users = lists.size();
  for (const auto& l : lists) {
    if (l.items.empty()) {
      ++result.empty_lists;
      log << "warning: user " << l.user << " has no candidate items; empty list\n";
    }
  }
  std::ostringstream tsv;
  write_recommendations(tsv, lists);
  write_text(out, tsv.str());

  ordered_json meta;
  meta["model_hash"] = hex64(cfg.model_hash());
  meta["sampler"] = sampler_name(cfg.train.schedule.mode);
  meta["rate_mode"] = rate_name(cfg.train.schedule.rate_mode);
  meta["reverse_T"] = cfg.train.schedule.reverse_horizon;
  meta["cutoff"] = cfg.cutoff;
  meta["seed"] = cfg.train.seed;
  write_text(out.string() + ".meta.json", meta.dump(2) + "\n");
  log << "wrote " << lists.size() << " recommendation lists to " << out.string() << '\n';
  return result;
}

MetricsReport cmd_evaluate(const std::filesystem::path& recommendations,
                           const std::filesystem::path& test, const std::filesystem::path& train,
                           const std::filesystem::path& out, const std::vector<std::size_t>& cutoffs,
                           std::ostream& log) {
  if (!std::filesystem::exists(recommendations)) {
    throw InputError("file not found: " + recommendations.string());
  }
  const auto [train_m, test_m] = load_train_test(train, test);
  std::ifstream in(recommendations);
  const auto lists = read_recommendations(in);

  const auto groups = popularity_groups(train_m);
  EvaluateOptions opts;
  opts.cutoffs = cutoffs;
  opts.groups = &groups;
  opts.train = &train_m;
  auto report = evaluate(lists, test_m, opts);

  report.config_hash = "unknown";
  const auto meta_path = std::filesystem::path(recommendations.string() + ".meta.json");
  if (std::filesystem::exists(meta_path)) {
    std::ifstream meta_in(meta_path);
    try {
      const auto meta = json::parse(meta_in);
      report.config_hash = meta.value("model_hash", "unknown");
    } catch (const json::exception& e) {
      throw InputError(meta_path.string() + ": " + e.what());
    }
  }
  report.git_revision = git_revision();
  const auto text = report.to_json();
  if (!out.empty()) write_text(out, text);
  log << text;
  if (report.users_skipped > 0) {
    log << report.users_skipped << " users without test interactions were skipped\n";
  }
  return report;
}

bool cmd_verify(std::size_t samples, std::uint64_t seed, std::ostream& log) {
  verification::SuiteOptions opts;
  opts.samples = samples;
  opts.seed = seed;
  bool all = true;
  for (const auto& r : verification::run_oracle_suites(opts)) {
    log << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << '\n';
    all = all && r.passed;
  }
  return all;
}

std::pair<InteractionMatrix, InteractionMatrix> synthesize(const SynthConfig& cfg) {
  if (cfg.n_users == 0 || cfg.n_items == 0) throw InputError("synth: empty dimensions");
  if (cfg.n_blocks == 0 || cfg.n_blocks > cfg.n_items) throw InputError("synth: bad block count");
  if (!(cfg.holdout > 0.0 && cfg.holdout < 1.0)) throw InputError("synth: holdout must lie in (0, 1)");

  const auto block_of_item = [&](std::size_t i) { return i * cfg.n_blocks / cfg.n_items; };
  const auto block_of_user = [&](std::size_t u) { return u * cfg.n_blocks / cfg.n_users; };
  std::vector<std::vector<ItemId>> rows(cfg.n_users);
  for (std::size_t u = 0; u < cfg.n_users; ++u) {
    auto rng = derive_stream(cfg.seed, StreamTag::synth, u);
    const std::size_t b = block_of_user(u);
    for (std::size_t i = 0; i < cfg.n_items; ++i) {
      const double p = block_of_item(i) == b ? cfg.p_in : cfg.p_out;
      if (uniform01(rng) < p) rows[u].push_back(static_cast<ItemId>(i));
    }
    if (rows[u].empty()) {
      // Every user gets at least one in-block item.
      std::vector<ItemId> in_block;
      for (std::size_t i = 0; i < cfg.n_items; ++i) {
        if (block_of_item(i) == b) in_block.push_back(static_cast<ItemId>(i));
      }
      rows[u].push_back(in_block[static_cast<std::size_t>(uniform01(rng) * static_cast<double>(in_block.size()))]);
    }
  }
  const InteractionMatrix full(cfg.n_users, cfg.n_items, std::move(rows));
  return split_validation(full, cfg.holdout, cfg.seed);
}

void cmd_synth(const SynthConfig& cfg, const std::filesystem::path& out_dir, std::ostream& log) {
  const auto [train, test] = synthesize(cfg);
  std::ostringstream a;
  std::ostringstream b;
  write_interactions(a, train);
  write_interactions(b, test);
  write_text(out_dir / "train.txt", a.str());
  write_text(out_dir / "test.txt", b.str());
  log << "wrote " << train.nnz() << " train and " << test.nnz() << " test interactions ("
      << cfg.n_users << " users, " << cfg.n_items << " items) to " << out_dir.string() << '\n';
}

}  // namespace stagecf::cli
