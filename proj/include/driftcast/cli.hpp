#pragma once

// Command-line entry point: ingest, train, evaluate, analyze and synth.
// Every successful run writes one manifest describing its inputs and outputs.
// Exit codes: 0 success, 1 runtime failure, 2 usage or schema error.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>
#include <openssl/evp.h>

#include "driftcast/common.hpp"
#include "driftcast/corpus.hpp"
#include "driftcast/learner.hpp"
#include "driftcast/predictor.hpp"
#include "driftcast/sociolab.hpp"
#include "driftcast/synthgen.hpp"

namespace driftcast::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

/// Bad flags or config contents.
class UsageError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Digests and manifests

inline std::string sha256_file(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw Error("cannot read " + p.string());
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw Error("sha256 init failed");
  std::vector<char> buf(1 << 16);
  while (in) {
    in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() > 0 && EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount())) != 1)
      throw Error("sha256 update failed");
  }
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_DigestFinal_ex(ctx.get(), md, &len) != 1) throw Error("sha256 final failed");
  std::string hex;
  char b[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(b, sizeof b, "%02x", md[i]);
    hex += b;
  }
  return hex;
}

inline constexpr const char* kManifestName = "manifest.json";

/// Digests of a file, or of every regular file under a directory keyed by
/// relative path. Manifests are skipped.
inline nlohmann::json digests_of(const fs::path& p) {
  nlohmann::json out = nlohmann::json::object();
  if (fs::is_directory(p)) {
    std::vector<fs::path> files;
    for (const auto& e : fs::recursive_directory_iterator(p))
      if (e.is_regular_file() && e.path().filename() != kManifestName) files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) out[(p / fs::relative(f, p)).generic_string()] = sha256_file(f);
  } else {
    out[p.generic_string()] = sha256_file(p);
  }
  return out;
}

struct Manifest {
  std::string command;
  std::vector<std::string> argv;
  std::vector<std::string> config_paths;
  std::optional<std::uint64_t> seed;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::chrono::steady_clock::time_point start = std::chrono::steady_clock::now();

  nlohmann::json to_json() const {
    nlohmann::json in = nlohmann::json::object(), out = nlohmann::json::object();
    for (const auto& p : inputs) in.update(digests_of(p));
    for (const auto& p : outputs) out.update(digests_of(p));
    std::vector<std::string> out_paths;
    for (const auto& p : outputs) out_paths.push_back(p.generic_string());
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return {{"command", command},
            {"argv", argv},
            {"config_paths", config_paths},
            {"seed", seed ? nlohmann::json(*seed) : nlohmann::json(nullptr)},
            {"version", kVersion},
            {"input_digests", in},
            {"outputs", out_paths},
            {"output_digests", out},
            {"duration_seconds", secs}};
  }

  /// Inside a directory output, or next to a file output.
  void write(const fs::path& primary_output) const {
    const fs::path path = fs::is_directory(primary_output)
                              ? primary_output / kManifestName
                              : fs::path(primary_output.string() + "." + kManifestName);
    std::ofstream(path) << to_json().dump(2) << '\n';
  }
};

// ---------------------------------------------------------------------------
// Helpers

inline nlohmann::json read_json_file(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw UsageError("cannot open " + p.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(p.string(), 1, e.what());
  }
}

template <class T, class F>
T parse_config(const fs::path& p, F&& from_json) {
  const auto j = read_json_file(p);
  try {
    return from_json(j);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(p.string() + ": " + e.what());
  } catch (const SchemaError&) {
    throw;
  } catch (const Error& e) {
    throw UsageError(p.string() + ": " + e.what());
  }
}

inline void write_text(const fs::path& p, const std::string& s) {
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(p);
  if (!out) throw Error("cannot write " + p.string());
  out << s;
}

/// File-name-safe form of a user id; anything outside [A-Za-z0-9_.-] becomes %XX.
inline std::string safe_name(const std::string& id) {
  std::string out;
  for (unsigned char c : id) {
    if (std::isalnum(c) || c == '_' || c == '-' || (c == '.' && !out.empty())) {
      out += static_cast<char>(c);
    } else {
      char b[4];
      std::snprintf(b, sizeof b, "%%%02X", c);
      out += b;
    }
  }
  return out;
}

inline constexpr const char* kModelsSubdir = "users";
inline constexpr const char* kTrainSummary = "train_summary.json";

inline std::vector<TrainedUser> load_models(const fs::path& dir, Hyperparams& hyper) {
  if (!fs::is_directory(dir / kModelsSubdir)) throw UsageError("not a models directory: " + dir.string());
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir / kModelsSubdir))
    if (e.path().extension() == ".json") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<TrainedUser> out;
  for (const auto& f : files) {
    const auto j = read_json_file(f);
    try {
      out.push_back(model_from_json(j));
      if (out.size() == 1) hyper = Hyperparams::from_json(j.at("hyper"));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(f.string(), 1, e.what());
    }
  }
  if (out.empty()) throw UsageError("no model files in " + (dir / kModelsSubdir).string());
  return out;
}

// ---------------------------------------------------------------------------
// Commands

struct Options {
  // shared
  std::uint64_t seed = 0;
  bool seed_set = false;
  unsigned jobs = 1;
  // ingest
  std::string posts, interactions, config, out;
  // train / evaluate / analyze
  std::string corpus, hyper, models, report;
  bool ablation_int = false;
  std::vector<double> train_fractions, wreg_grid;
  bool no_ablation = false, no_random = false;
  int random_trials = 100;
  std::string mode = "welch";
};

inline int cmd_ingest(const Options& o, Manifest& man) {
  CorpusConfig cfg;
  if (!o.config.empty()) {
    cfg = parse_config<CorpusConfig>(o.config, CorpusConfig::from_json);
    man.config_paths.push_back(o.config);
  }
  const Corpus corpus = build_corpus(o.posts, o.interactions, cfg);
  save_corpus(corpus, o.out);
  man.inputs = {o.posts, o.interactions};
  if (!o.config.empty()) man.inputs.push_back(o.config);
  man.outputs = {o.out};
  std::cout << "ingested " << corpus.timelines().size() << " candidate users, vocabularies "
            << corpus.status_vocab().size() << "/" << corpus.interaction_vocab().size() << "/"
            << corpus.interactor_vocab().size() << " -> " << o.out << '\n';
  man.write(o.out);
  return kExitOk;
}

inline Hyperparams hyper_from(const Options& o, Manifest& man) {
  Hyperparams h;
  if (!o.hyper.empty()) {
    h = parse_config<Hyperparams>(o.hyper, Hyperparams::from_json);
    man.config_paths.push_back(o.hyper);
    man.inputs.push_back(o.hyper);
  }
  if (o.seed_set) h.seed = o.seed;
  return h;
}

inline int cmd_train(const Options& o, Manifest& man) {
  Hyperparams h = hyper_from(o, man);
  if (o.ablation_int) h.ablation_int = true;
  man.seed = h.seed;
  const Corpus corpus = load_corpus(o.corpus);
  man.inputs.push_back(o.corpus);
  const auto outcomes = train_users(corpus, h, o.jobs);

  fs::remove_all(fs::path(o.out) / kModelsSubdir);
  fs::create_directories(fs::path(o.out) / kModelsSubdir);
  nlohmann::json failed = nlohmann::json::array();
  std::size_t n_failed = 0;
  for (const auto& r : outcomes) {
    if (!r.model) {
      ++n_failed;
      failed.push_back({{"user_id", r.user_id}, {"error", r.error}});
      continue;
    }
    write_text(fs::path(o.out) / kModelsSubdir / (safe_name(r.user_id) + ".json"),
               model_to_json(*r.model, h).dump() + '\n');
  }
  const nlohmann::json summary = {{"hyper", h.to_json()},
                                  {"n_users", outcomes.size()},
                                  {"n_trained", outcomes.size() - n_failed},
                                  {"failed", failed}};
  write_text(fs::path(o.out) / kTrainSummary, summary.dump(2) + '\n');
  man.outputs = {o.out};
  man.write(o.out);
  std::cout << "trained " << outcomes.size() - n_failed << "/" << outcomes.size() << " users"
            << (h.ablation_int ? " (-Int)" : "") << " -> " << o.out << '\n';
  if (!outcomes.empty() && 10 * n_failed > outcomes.size()) {
    log(LogLevel::error, std::to_string(n_failed) + " of " + std::to_string(outcomes.size()) + " users failed");
    return kExitFailure;
  }
  return kExitOk;
}

inline void check_fractions(const std::vector<double>& fr) {
  for (double f : fr)
    if (!(f > 0.0 && f < 1.0)) throw UsageError("train fractions must lie in (0, 1)");
}

inline int cmd_evaluate(const Options& o, Manifest& man) {
  if (o.models.empty() && o.corpus.empty()) throw UsageError("evaluate needs --models or --corpus");
  Protocol protocol;
  if (!o.train_fractions.empty()) protocol.train_fractions = o.train_fractions;
  check_fractions(protocol.train_fractions);
  protocol.w_reg_grid = o.wreg_grid;
  for (double w : protocol.w_reg_grid)
    if (!(w >= 0.0)) throw UsageError("w_reg values must be >= 0");
  protocol.ablation = !o.no_ablation;
  protocol.random_baseline = !o.no_random;
  protocol.random_trials = o.random_trials;
  if (protocol.random_trials <= 0) throw UsageError("--random-trials must be positive");

  ExperimentResult res;
  if (!o.corpus.empty()) {
    // retrain per grid point; hyper comes from --hyper, else from the models
    Hyperparams h;
    if (!o.hyper.empty()) {
      h = hyper_from(o, man);
    } else if (!o.models.empty()) {
      load_models(o.models, h);
      man.inputs.push_back(o.models);
      if (o.seed_set) h.seed = o.seed;
    } else if (o.seed_set) {
      h.seed = o.seed;
    }
    man.seed = h.seed;
    const Corpus corpus = load_corpus(o.corpus);
    man.inputs.push_back(o.corpus);
    res = run_experiment(corpus, h, protocol, o.jobs);
  } else {
    if (!o.wreg_grid.empty()) throw UsageError("--wreg-grid retrains and needs --corpus");
    Hyperparams h;
    const auto users = load_models(o.models, h);
    if (o.seed_set) h.seed = o.seed;
    man.seed = h.seed;
    man.inputs.push_back(o.models);
    res = evaluate_trained(users, h, protocol);
  }
  write_text(o.report, to_json(res).dump(2) + '\n');
  man.outputs = {o.report};
  man.write(o.report);
  std::cout << format_table(res.reports);
  if (!res.failed_users.empty()) std::cout << res.failed_users.size() << " user trainings failed\n";
  return kExitOk;
}

inline int cmd_analyze(const Options& o, Manifest& man) {
  const auto mode = parse_mode(o.mode);
  const Corpus corpus = load_corpus(o.corpus);
  man.inputs.push_back(o.corpus);
  man.seed = o.seed;
  const auto rep = verify_postulates(corpus, o.seed, mode);
  write_text(o.report, to_json(rep).dump(2) + '\n');
  man.outputs = {o.report};
  man.write(o.report);
  std::cout << format_postulates(rep);
  return kExitOk;
}

inline int cmd_synth(const Options& o, Manifest& man) {
  SynthConfig cfg;
  if (!o.config.empty()) {
    cfg = parse_config<SynthConfig>(o.config, SynthConfig::from_json);
    man.config_paths.push_back(o.config);
    man.inputs.push_back(o.config);
  }
  if (o.seed_set) cfg.seed = o.seed;
  try {
    cfg.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  man.seed = cfg.seed;
  const auto data = generate(cfg);
  write_synth(data, o.out);
  man.outputs = {o.out};
  man.write(o.out);
  std::cout << "wrote " << data.users.size() << " synthetic users (seed " << cfg.seed << ") -> " << o.out << '\n';
  return kExitOk;
}

// ---------------------------------------------------------------------------
// Entry point

inline int run(int argc, const char* const* argv) {
  CLI::App app{"driftcast: protest-declaration prediction from status and interaction streams"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);
  Options o;

  auto seed_opt = [&](CLI::App* sub, const std::string& help) {
    sub->add_option_function<std::uint64_t>(
        "--seed",
        [&](const std::uint64_t& s) {
          o.seed = s;
          o.seed_set = true;
        },
        help);
  };
  auto jobs_opt = [&](CLI::App* sub) {
    sub->add_option("--jobs,-j", o.jobs, "Worker threads for per-user training")->check(CLI::PositiveNumber);
  };

  auto* ingest = app.add_subcommand("ingest", "Build a corpus directory from posts and interactions JSONL");
  ingest->add_option("--posts", o.posts, "Posts JSONL (user_id, ts, text, optional label)")
      ->required()
      ->check(CLI::ExistingFile);
  ingest->add_option("--interactions", o.interactions, "Interactions JSONL (src, dst, ts, text)")
      ->required()
      ->check(CLI::ExistingFile);
  ingest->add_option("--config", o.config, "Corpus config JSON (vocab_cap, min_token_len)")->check(CLI::ExistingFile);
  ingest->add_option("--out", o.out, "Output corpus directory")->required();

  auto* train = app.add_subcommand("train", "Fit per-user models");
  train->add_option("--corpus", o.corpus, "Corpus directory from ingest")->required()->check(CLI::ExistingDirectory);
  train->add_option("--hyper", o.hyper, "Hyperparameter JSON (I, w_reg, eta, max_iters, tol, sigma_min, seed)")
      ->check(CLI::ExistingFile);
  train->add_option("--out", o.out, "Output models directory")->required();
  train->add_flag("--ablation-int", o.ablation_int, "Ignore interactions: drift factor fixed at 1 (-Int)");
  jobs_opt(train);
  seed_opt(train, "Override the hyperparameter seed");

  auto* evaluate_cmd = app.add_subcommand("evaluate", "Fit the discriminant and report accuracy, AUC and F1");
  evaluate_cmd->add_option("--models", o.models, "Models directory from train")->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--corpus", o.corpus, "Corpus directory; retrains full and -Int models")
      ->check(CLI::ExistingDirectory);
  evaluate_cmd->add_option("--hyper", o.hyper, "Hyperparameter JSON used when retraining")->check(CLI::ExistingFile);
  evaluate_cmd->add_option("--train-fraction", o.train_fractions, "Train fractions, comma separated (default 0.5)")
      ->delimiter(',');
  evaluate_cmd->add_option("--wreg-grid", o.wreg_grid, "w_reg values to sweep, comma separated (needs --corpus)")
      ->delimiter(',');
  evaluate_cmd->add_option("--report", o.report, "Output report JSON")->required();
  evaluate_cmd->add_flag("--no-ablation", o.no_ablation, "Skip the -Int run");
  evaluate_cmd->add_flag("--no-random", o.no_random, "Skip the random baseline");
  evaluate_cmd->add_option("--random-trials", o.random_trials, "Random baseline repetitions");
  jobs_opt(evaluate_cmd);
  seed_opt(evaluate_cmd, "Override the hyperparameter seed");

  auto* analyze = app.add_subcommand("analyze", "Test the homophily postulates with two-sample t-tests");
  analyze->add_option("--corpus", o.corpus, "Corpus directory")->required()->check(CLI::ExistingDirectory);
  analyze->add_option("--mode", o.mode, "paired or welch")->check(CLI::IsMember({"paired", "welch"}));
  analyze->add_option("--report", o.report, "Output report JSON")->capture_default_str();
  o.report = "postulates.json";
  seed_opt(analyze, "Seed for sampling negatives");

  auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted structure");
  synth->add_option("--config", o.config, "Synth config JSON")->check(CLI::ExistingFile);
  synth->add_option("--out", o.out, "Output directory")->required();
  seed_opt(synth, "Override the config seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  Manifest man;
  for (int i = 0; i < argc; ++i) man.argv.emplace_back(argv[i]);
  try {
    if (ingest->parsed()) return man.command = "ingest", cmd_ingest(o, man);
    if (train->parsed()) return man.command = "train", cmd_train(o, man);
    if (evaluate_cmd->parsed()) return man.command = "evaluate", cmd_evaluate(o, man);
    if (analyze->parsed()) return man.command = "analyze", cmd_analyze(o, man);
    if (synth->parsed()) return man.command = "synth", cmd_synth(o, man);
  } catch (const SchemaError& e) {
    log(LogLevel::error, e.what());
    return kExitUsage;
  } catch (const UsageError& e) {
    log(LogLevel::error, e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    log(LogLevel::error, e.what());
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace driftcast::cli
