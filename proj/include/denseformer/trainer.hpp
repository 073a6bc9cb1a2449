#pragma once

// Training loop: AdamW with decoupled weight decay, linear warmup into a
// cosine decay, and optionally delayed training of the DWA weights.

#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "denseformer/corpus.hpp"
#include "denseformer/model.hpp"

namespace denseformer {

struct TrainConfig {
  std::size_t steps = 2000;
  std::size_t batch_size = 32;
  std::size_t seq_len = 128;
  double lr_max = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double warmup_frac = 0.05;
  // First 0-based iteration whose update touches alpha; >= steps freezes it.
  std::size_t dwa_train_start = 0;
  // Validation on a fixed subset of eval_batches batches every eval_every
  // steps (0 disables); the last step always evaluates the full split.
  std::size_t eval_every = 100;
  std::size_t eval_batches = 4;
  std::size_t snapshot_every = 0;
  double val_frac = 0.1;
  std::uint64_t seed = 0;

  std::size_t warmup_steps() const;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

// Learning rate at schedule position step in [0, steps]. Update number s
// (1-based) uses lr_at(s).
double lr_at(std::size_t step, const TrainConfig& config);

inline bool decays(ParamRole role) { return role == ParamRole::Matrix; }

template <typename T>
struct AdamSlot {
  std::vector<T> m, v;
  std::uint64_t t = 0;
};

struct AdamParams {
  double beta1 = 0.9, beta2 = 0.95, eps = 1e-8, weight_decay = 0.0;

  static AdamParams from(const TrainConfig& c, bool decay) {
    return {c.beta1, c.beta2, c.eps, decay ? c.weight_decay : 0.0};
  }
};

// One AdamW update of a single parameter:
//   theta <- theta - lr * (mhat / (sqrt(vhat) + eps) + wd * theta)
// Arithmetic runs in double and is stored back as T.
template <typename T>
void adamw_update(std::span<T> theta, std::span<const T> grad, AdamSlot<T>& slot, double lr, const AdamParams& hp);

struct TrainingAborted : std::runtime_error {
  TrainingAborted(std::size_t step, const std::string& what);
  std::size_t step;
};

class AdamW {
 public:
  AdamW() = default;
  explicit AdamW(const std::vector<NamedParameter<float>>& params);

  // Applies one update to every parameter except alphas when
  // alphas_trainable is false; their gradients are dropped and their slots
  // stay untouched. Missing gradients count as zero.
  void step(const std::vector<NamedParameter<float>>& params, double lr, const TrainConfig& config,
            bool alphas_trainable);

  std::vector<std::string>& names() { return names_; }
  const std::vector<std::string>& names() const { return names_; }
  std::vector<AdamSlot<float>>& slots() { return slots_; }
  const std::vector<AdamSlot<float>>& slots() const { return slots_; }

 private:
  std::vector<std::string> names_;
  std::vector<AdamSlot<float>> slots_;
};

struct MetricsRow {
  std::size_t step = 0;
  double lr = 0.0;
  double train_loss = 0.0;
  std::optional<double> val_loss;
};

struct EvalResult {
  double loss = 0.0;
  double perplexity = 0.0;
  std::size_t tokens = 0;
};

// Mean token cross-entropy over the non-overlapping windows of the split
// (or the first max_windows of an evenly spaced subset of them). No tape
// is recorded.
EvalResult evaluate(const Model<float>& model, const ByteCorpus& corpus, Split split, std::size_t seq,
                    std::size_t batch_size, std::size_t max_windows = 0);

// Everything needed to continue a run bit-identically.
struct TrainState {
  std::size_t step = 0;  // completed updates
  std::mt19937_64 rng;
  AdamW optimizer;
  std::vector<MetricsRow> metrics;
};

TrainState init_train_state(const Model<float>& model, const TrainConfig& config);

struct TrainHooks {
  std::function<void(std::size_t step, const Model<float>&)> on_snapshot;
  std::function<void(const MetricsRow&)> on_step;
};

// Advances the run until state.step reaches min(stop_after, config.steps).
// Throws TrainingAborted on a non-finite loss or gradient.
void train(Model<float>& model, const ByteCorpus& corpus, const TrainConfig& config, TrainState& state,
           const TrainHooks& hooks = {}, std::size_t stop_after = std::numeric_limits<std::size_t>::max());

std::vector<MetricsRow> train(Model<float>& model, const ByteCorpus& corpus, const TrainConfig& config);

std::string metrics_csv(std::span<const MetricsRow> rows);

}  // namespace denseformer
