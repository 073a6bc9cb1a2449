#include <cmath>
#include <fstream>
#include <iostream>
#include <limits>
#include <optional>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "CLI11.hpp"
#include "denseformer/analysis.hpp"
#include "denseformer/cli.hpp"
#include "denseformer/ops.hpp"
#include "json.hpp"

namespace denseformer {

namespace fs = std::filesystem;

void configure_allocator() {
#if defined(__GLIBC__)
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

namespace {

// Raised for argument combinations CLI11 cannot express.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

void emit(const std::string& text, const std::string& path, std::ostream& out) {
  if (path.empty()) {
    out << text;
  } else {
    write_file(path, text);
  }
}

struct TrainArgs {
  std::string config, data, out_dir, resume;
  std::optional<std::uint64_t> seed;
  std::size_t stop_after = std::numeric_limits<std::size_t>::max();
};

int cmd_train(const TrainArgs& a, std::ostream& out, std::ostream& err) {
  if (a.config.empty() && a.resume.empty()) throw UsageError("train needs --config or --resume");
  std::optional<Checkpoint> ckpt;
  RunConfig config;
  if (!a.resume.empty()) {
    ckpt.emplace(load_checkpoint(a.resume));
    config = ckpt->config;
    if (!a.config.empty() && load_run_config(a.config) != config) {
      throw UsageError("--config differs from the configuration stored in the resumed checkpoint");
    }
    if (a.seed && *a.seed != config.train.seed) throw UsageError("--seed differs from the resumed run's seed");
  } else {
    config = load_run_config(a.config);
    if (a.seed) config.train.seed = *a.seed;
  }
  const auto corpus = ByteCorpus::load(a.data, config.train.val_frac, config.train.seq_len);
  fs::create_directories(a.out_dir);

  Model<float> model = ckpt ? std::move(ckpt->model) : Model<float>(config.model, config.train.seed);
  TrainState state = ckpt ? std::move(ckpt->state) : init_train_state(model, config.train);
  const fs::path dir(a.out_dir);

  TrainHooks hooks;
  if (config.model.pattern.has_dwa()) {
    hooks.on_snapshot = [&](std::size_t step, const Model<float>& m) {
      write_file(dir / ("alphas_step" + std::to_string(step) + ".csv"), alpha_matrix_csv(alpha_matrix(m)));
    };
  }
  int code = kExitOk;
  try {
    train(model, corpus, config.train, state, hooks, a.stop_after);
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << "\n";
    code = kExitRuntime;
  }
  write_file(dir / "metrics.csv", metrics_csv(state.metrics));
  if (code != kExitOk) return code;
  save_checkpoint(dir / "checkpoint.bin", model, config.train, state);

  nlohmann::ordered_json summary;
  summary["step"] = state.step;
  summary["steps"] = config.train.steps;
  if (!state.metrics.empty()) {
    summary["train_loss"] = state.metrics.back().train_loss;
    if (state.metrics.back().val_loss) summary["val_loss"] = *state.metrics.back().val_loss;
  }
  summary["checkpoint"] = (dir / "checkpoint.bin").string();
  out << summary.dump() << "\n";
  return kExitOk;
}

struct EvalArgs {
  std::string ckpt, data;
  std::size_t batch_size = 0;
  std::size_t max_windows = 0;
};

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const auto& t = ckpt.config.train;
  const auto corpus = ByteCorpus::load(a.data, t.val_frac, t.seq_len);
  const std::size_t bs = a.batch_size ? a.batch_size : t.batch_size;
  const auto r = evaluate(ckpt.model, corpus, Split::Val, t.seq_len, bs, a.max_windows);
  nlohmann::ordered_json j;
  j["split"] = "val";
  j["tokens"] = r.tokens;
  j["loss"] = r.loss;
  j["perplexity"] = r.perplexity;
  out << j.dump() << "\n";
  return kExitOk;
}

struct BenchArgs {
  std::string config, ckpt, out_path, path = "accumulator";
  BenchOptions options;
};

int cmd_bench(BenchArgs a, std::ostream& out) {
  if (a.config.empty() == a.ckpt.empty()) throw UsageError("bench needs exactly one of --config or --ckpt");
  a.options.path = a.path == "naive" ? DwaPath::Naive : DwaPath::Accumulator;
  std::optional<Model<float>> model;
  if (!a.config.empty()) {
    const auto c = load_run_config(a.config);
    model.emplace(c.model, c.train.seed);
  } else {
    model.emplace(std::move(load_checkpoint(a.ckpt).model));
  }
  emit(bench_report_json(bench_throughput(*model, a.options)), a.out_path, out);
  return kExitOk;
}

struct AnalyzeArgs {
  std::string ckpt, data, out_path, format = "csv";
  std::vector<double> fractions{0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5};
  std::size_t batch_size = 0;
  std::size_t max_windows = 0;
  std::uint64_t seed = 0;
};

int cmd_weights(const AnalyzeArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  if (!ckpt.model.config().pattern.has_dwa()) throw UsageError("the checkpoint's model has no DWA weights");
  const auto m = alpha_matrix(ckpt.model);
  emit(a.format == "json" ? alpha_matrix_json(m) : alpha_matrix_csv(m), a.out_path, out);
  return kExitOk;
}

int cmd_prune(const AnalyzeArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  if (!ckpt.model.config().pattern.has_dwa()) throw UsageError("the checkpoint's model has no DWA weights");
  for (double f : a.fractions) {
    if (!(f >= 0.0 && f <= 1.0)) throw UsageError("prune fractions must lie in [0, 1]");
  }
  const auto& t = ckpt.config.train;
  const auto corpus = ByteCorpus::load(a.data, t.val_frac, t.seq_len);
  const auto rows = prune_sweep(ckpt.model, corpus, a.fractions, t.seq_len, a.batch_size ? a.batch_size : t.batch_size,
                                a.max_windows);
  emit(prune_sweep_csv(rows), a.out_path, out);
  return kExitOk;
}

int cmd_cossim(const AnalyzeArgs& a, std::ostream& out, std::ostream& err) {
  const auto ckpt = load_checkpoint(a.ckpt);
  const auto& cfg = ckpt.model.config();
  const std::size_t bs = a.batch_size ? a.batch_size : 8;
  TokenBatch tokens;
  if (!a.data.empty()) {
    const auto& t = ckpt.config.train;
    const auto corpus = ByteCorpus::load(a.data, t.val_frac, t.seq_len);
    auto offsets = sequential_offsets(corpus.val().size(), t.seq_len);
    offsets.resize(std::min(offsets.size(), bs));
    tokens = batch_at(corpus, Split::Val, offsets, t.seq_len).inputs;
  } else {
    tokens.batch = bs;
    tokens.seq = cfg.seq_len;
    std::mt19937_64 rng(a.seed);
    std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(cfg.vocab_size) - 1);
    tokens.ids.resize(bs * cfg.seq_len);
    for (auto& id : tokens.ids) id = pick(rng);
  }
  const auto p = cosine_profile(ckpt.model, tokens);
  if (p.zero_norm_count > 0) err << "warning: " << p.zero_norm_count << " zero-norm vectors counted as 0\n";
  emit(cosine_profile_csv(p), a.out_path, out);
  return kExitOk;
}

int cmd_rank(const AnalyzeArgs& a, std::ostream& out) {
  const auto ckpt = load_checkpoint(a.ckpt);
  if (a.out_path.empty()) throw UsageError("analyze rank needs --out <dir>");
  fs::create_directories(a.out_path);
  nlohmann::ordered_json summary = nlohmann::ordered_json::array();
  for (const auto& s : rank_spectra(ckpt.model)) {
    const auto file = fs::path(a.out_path) / ("rank_" + s.role + ".csv");
    write_file(file, rank_spectrum_csv(s));
    nlohmann::ordered_json j;
    j["role"] = s.role;
    j["matrices"] = s.matrices;
    j["values"] = s.mean_sigma.size();
    j["max_frobenius_rel_error"] = s.max_frobenius_rel_error;
    j["file"] = file.string();
    summary.push_back(std::move(j));
  }
  out << summary.dump() << "\n";
  return kExitOk;
}

int cmd_init(const std::string& config_path, const std::string& out_path, std::optional<std::uint64_t> seed,
             std::ostream& out) {
  auto config = load_run_config(config_path);
  if (seed) config.train.seed = *seed;
  const Model<float> model(config.model, config.train.seed);
  save_checkpoint(out_path, model, config.train, init_train_state(model, config.train));
  out << out_path << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"DenseFormer training and analysis tool", "denseformer"};
  app.require_subcommand(1);

  TrainArgs train_args;
  std::uint64_t train_seed = 0;
  auto* train_cmd = app.add_subcommand("train", "Train a model and write checkpoint, metrics and alpha snapshots");
  train_cmd->add_option("--config", train_args.config, "JSON run configuration")->check(CLI::ExistingFile);
  train_cmd->add_option("--data", train_args.data, "Corpus file (raw bytes)")->required()->check(CLI::ExistingFile);
  train_cmd->add_option("--out", train_args.out_dir, "Output directory")->required();
  auto* seed_opt = train_cmd->add_option("--seed", train_seed, "Overrides train.seed");
  train_cmd->add_option("--resume", train_args.resume, "Checkpoint to continue from")->check(CLI::ExistingFile);
  train_cmd->add_option("--stop-after", train_args.stop_after, "Stop once this many steps are complete");

  EvalArgs eval_args;
  auto* eval_cmd = app.add_subcommand("eval", "Validation loss and perplexity of a checkpoint");
  eval_cmd->add_option("--ckpt", eval_args.ckpt)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--data", eval_args.data)->required()->check(CLI::ExistingFile);
  eval_cmd->add_option("--batch-size", eval_args.batch_size)->check(CLI::PositiveNumber);
  eval_cmd->add_option("--max-windows", eval_args.max_windows, "Evenly spaced window subset (0 = all)");

  BenchArgs bench_args;
  auto* bench_cmd = app.add_subcommand("bench", "Forward-pass throughput with a blocks/DWA timing split");
  bench_cmd->add_option("--config", bench_args.config)->check(CLI::ExistingFile);
  bench_cmd->add_option("--ckpt", bench_args.ckpt)->check(CLI::ExistingFile);
  bench_cmd->add_option("--batch-size", bench_args.options.batch_size)->check(CLI::PositiveNumber);
  bench_cmd->add_option("--reps", bench_args.options.n_timed, "Timed forward passes (>= 5)")
      ->check(CLI::Range(std::size_t{5}, std::numeric_limits<std::size_t>::max()));
  bench_cmd->add_option("--warmup", bench_args.options.n_warmup);
  bench_cmd->add_option("--seed", bench_args.options.seed);
  bench_cmd->add_option("--path", bench_args.path)->check(CLI::IsMember({"naive", "accumulator"}));
  bench_cmd->add_option("--out", bench_args.out_path, "Write the JSON report here instead of stdout");

  AnalyzeArgs an;
  auto* analyze_cmd = app.add_subcommand("analyze", "Analyses of a checkpoint");
  analyze_cmd->require_subcommand(1);
  auto add_common = [&](CLI::App* c) {
    c->add_option("--ckpt", an.ckpt)->required()->check(CLI::ExistingFile);
    c->add_option("--out", an.out_path);
  };
  auto* weights_cmd = analyze_cmd->add_subcommand("weights", "Alpha matrix export");
  add_common(weights_cmd);
  weights_cmd->add_option("--format", an.format)->check(CLI::IsMember({"csv", "json"}));
  auto* prune_cmd = analyze_cmd->add_subcommand("prune", "Magnitude-pruning sweep over alpha");
  add_common(prune_cmd);
  prune_cmd->add_option("--data", an.data)->required()->check(CLI::ExistingFile);
  prune_cmd->add_option("--fractions", an.fractions)->delimiter(',');
  prune_cmd->add_option("--batch-size", an.batch_size)->check(CLI::PositiveNumber);
  prune_cmd->add_option("--max-windows", an.max_windows);
  auto* cossim_cmd = analyze_cmd->add_subcommand("cossim", "Cosine similarity of each Y_i to the embeddings");
  add_common(cossim_cmd);
  cossim_cmd->add_option("--data", an.data, "Use validation windows instead of random tokens")
      ->check(CLI::ExistingFile);
  cossim_cmd->add_option("--batch-size", an.batch_size)->check(CLI::PositiveNumber);
  cossim_cmd->add_option("--seed", an.seed);
  auto* rank_cmd = analyze_cmd->add_subcommand("rank", "Singular-value spectra per matrix role");
  add_common(rank_cmd);

  std::string init_config, init_out;
  std::uint64_t init_seed = 0;
  auto* init_cmd = app.add_subcommand("init", "Write an untrained checkpoint");
  init_cmd->add_option("--config", init_config)->required()->check(CLI::ExistingFile);
  init_cmd->add_option("--out", init_out)->required();
  auto* init_seed_opt = init_cmd->add_option("--seed", init_seed);

  std::size_t corpus_bytes = 0;
  std::uint64_t corpus_seed = 0;
  std::string corpus_out;
  auto* corpus_cmd = app.add_subcommand("make-corpus", "Write a deterministic synthetic text corpus");
  corpus_cmd->add_option("--bytes", corpus_bytes)->required()->check(CLI::PositiveNumber);
  corpus_cmd->add_option("--seed", corpus_seed);
  corpus_cmd->add_option("--out", corpus_out)->required();

  try {
    app.parse(std::vector<std::string>(args.rbegin(), args.rend()));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*train_cmd) {
      if (*seed_opt) train_args.seed = train_seed;
      return cmd_train(train_args, out, err);
    }
    if (*eval_cmd) return cmd_eval(eval_args, out);
    if (*bench_cmd) return cmd_bench(bench_args, out);
    if (*weights_cmd) return cmd_weights(an, out);
    if (*prune_cmd) return cmd_prune(an, out);
    if (*cossim_cmd) return cmd_cossim(an, out, err);
    if (*rank_cmd) return cmd_rank(an, out);
    if (*init_cmd) {
      return cmd_init(init_config, init_out,
                      *init_seed_opt ? std::optional<std::uint64_t>(init_seed) : std::nullopt, out);
    }
    if (*corpus_cmd) {
      write_file(corpus_out, synthetic_text(corpus_bytes, corpus_seed));
      return kExitOk;
    }
  } catch (const UsageError& e) {
    err << "usage error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitUsage;
}

}  // namespace denseformer
