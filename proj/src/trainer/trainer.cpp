#include "denseformer/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "denseformer/ops.hpp"

namespace denseformer {

std::size_t TrainConfig::warmup_steps() const {
  return static_cast<std::size_t>(std::ceil(warmup_frac * static_cast<double>(steps)));
}

void TrainConfig::validate() const {
  if (steps < 1) throw std::invalid_argument("steps must be >= 1");
  if (batch_size < 1) throw std::invalid_argument("batch_size must be >= 1");
  if (seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
  if (!(lr_max >= 0.0)) throw std::invalid_argument("lr_max must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0)) throw std::invalid_argument("beta1 must lie in [0, 1)");
  if (!(beta2 >= 0.0 && beta2 < 1.0)) throw std::invalid_argument("beta2 must lie in [0, 1)");
  if (!(eps > 0.0)) throw std::invalid_argument("eps must be > 0");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("weight_decay must be >= 0");
  if (!(warmup_frac >= 0.0 && warmup_frac < 1.0)) throw std::invalid_argument("warmup_frac must lie in [0, 1)");
  if (!(val_frac > 0.0 && val_frac < 1.0)) throw std::invalid_argument("val_frac must lie in (0, 1)");
  if (eval_batches < 1) throw std::invalid_argument("eval_batches must be >= 1");
}

double lr_at(std::size_t step, const TrainConfig& config) {
  const std::size_t total = config.steps;
  const std::size_t warm = config.warmup_steps();
  if (step < warm) return config.lr_max * static_cast<double>(step) / static_cast<double>(warm);
  if (step >= total) return 0.0;
  const double progress = static_cast<double>(step - warm) / static_cast<double>(total - warm);
  return std::max(0.0, config.lr_max * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

template <typename T>
void adamw_update(std::span<T> theta, std::span<const T> grad, AdamSlot<T>& slot, double lr, const AdamParams& hp) {
  if (grad.size() != theta.size()) throw std::invalid_argument("adamw_update: gradient size mismatch");
  if (slot.m.empty()) {
    slot.m.assign(theta.size(), T(0));
    slot.v.assign(theta.size(), T(0));
  }
  slot.t += 1;
  const double bc1 = 1.0 - std::pow(hp.beta1, static_cast<double>(slot.t));
  const double bc2 = 1.0 - std::pow(hp.beta2, static_cast<double>(slot.t));
  for (std::size_t i = 0; i < theta.size(); ++i) {
    const double g = grad[i];
    const double m = hp.beta1 * static_cast<double>(slot.m[i]) + (1.0 - hp.beta1) * g;
    const double v = hp.beta2 * static_cast<double>(slot.v[i]) + (1.0 - hp.beta2) * g * g;
    slot.m[i] = static_cast<T>(m);
    slot.v[i] = static_cast<T>(v);
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    const double th = theta[i];
    theta[i] = static_cast<T>(th - lr * (mhat / (std::sqrt(vhat) + hp.eps) + hp.weight_decay * th));
  }
}

template void adamw_update<float>(std::span<float>, std::span<const float>, AdamSlot<float>&, double,
                                  const AdamParams&);
template void adamw_update<double>(std::span<double>, std::span<const double>, AdamSlot<double>&, double,
                                   const AdamParams&);

TrainingAborted::TrainingAborted(std::size_t s, const std::string& what)
    : std::runtime_error("training aborted at step " + std::to_string(s) + ": " + what), step(s) {}

AdamW::AdamW(const std::vector<NamedParameter<float>>& params) {
  for (const auto& p : params) {
    names_.push_back(p.name);
    slots_.emplace_back();
  }
}

void AdamW::step(const std::vector<NamedParameter<float>>& params, double lr, const TrainConfig& config,
                 bool alphas_trainable) {
  if (params.size() != slots_.size()) throw std::logic_error("AdamW: parameter list changed");
  std::vector<float> zeros;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    if (p.name != names_[i]) throw std::logic_error("AdamW: parameter order changed at " + p.name);
    if (p.role == ParamRole::Alpha && !alphas_trainable) continue;
    Tensor<float> t = p.tensor;
    std::span<const float> g;
    if (t.has_grad()) {
      g = t.grad();
    } else {
      zeros.assign(t.size(), 0.0f);
      g = zeros;
    }
    adamw_update<float>(t.data(), g, slots_[i], lr, AdamParams::from(config, decays(p.role)));
  }
}

EvalResult evaluate(const Model<float>& model, const ByteCorpus& corpus, Split split, std::size_t seq,
                    std::size_t batch_size, std::size_t max_windows) {
  const auto data = corpus.split(split);
  auto offsets = sequential_offsets(data.size(), seq);
  if (offsets.empty()) throw std::invalid_argument(std::string("evaluate: ") + split_name(split) + " split is empty");
  if (batch_size == 0) throw std::invalid_argument("evaluate: batch_size must be >= 1");
  if (max_windows > 0 && max_windows < offsets.size()) {
    std::vector<std::size_t> subset(max_windows);
    for (std::size_t i = 0; i < max_windows; ++i) subset[i] = offsets[i * offsets.size() / max_windows];
    offsets = std::move(subset);
  }
  double total = 0.0;
  std::size_t tokens = 0;
  auto tape = ag::Tape<float>::inference();
  for (std::size_t start = 0; start < offsets.size(); start += batch_size) {
    const std::size_t n = std::min(batch_size, offsets.size() - start);
    const auto batch = batch_at(corpus, split, std::span(offsets).subspan(start, n), seq);
    const auto loss = model.loss(tape, batch.inputs, batch.targets);
    total += static_cast<double>(loss.item()) * static_cast<double>(batch.targets.size());
    tokens += batch.targets.size();
  }
  EvalResult r;
  r.loss = total / static_cast<double>(tokens);
  r.perplexity = std::exp(r.loss);
  r.tokens = tokens;
  return r;
}

TrainState init_train_state(const Model<float>& model, const TrainConfig& config) {
  TrainState s;
  // Decorrelate the data stream from the parameter draw of the same seed.
  s.rng.seed(config.seed ^ 0x9e3779b97f4a7c15ULL);
  s.optimizer = AdamW(model.parameters());
  return s;
}

void train(Model<float>& model, const ByteCorpus& corpus, const TrainConfig& config, TrainState& state,
           const TrainHooks& hooks, std::size_t stop_after) {
  config.validate();
  if (config.seq_len > model.config().seq_len) {
    throw std::invalid_argument("train.seq_len exceeds model.seq_len");
  }
  const auto params = model.parameters();
  const std::size_t end = std::min(stop_after, config.steps);
  while (state.step < end) {
    const std::size_t iteration = state.step;
    const std::size_t s = iteration + 1;
    MetricsRow row;
    row.step = s;
    row.lr = lr_at(s, config);
    try {
      const auto batch = next_batch(corpus, Split::Train, config.batch_size, config.seq_len, state.rng);
      ag::Tape<float> tape;
      auto loss = model.loss(tape, batch.inputs, batch.targets);
      tape.backward(loss);
      row.train_loss = loss.item();
      for (const auto& p : params) {
        if (p.tensor.has_grad()) ag::check_finite<float>(p.tensor.grad(), p.name.c_str());
      }
    } catch (const ag::NonFiniteError& e) {
      throw TrainingAborted(s, e.what());
    }
    state.optimizer.step(params, row.lr, config, iteration >= config.dwa_train_start);
    model.zero_grad();
    for (const auto& p : params) {
      try {
        ag::check_finite<float>(p.tensor.data(), p.name.c_str());
      } catch (const ag::NonFiniteError& e) {
        throw TrainingAborted(s, e.what());
      }
    }

    if (s == config.steps) {
      row.val_loss = evaluate(model, corpus, Split::Val, config.seq_len, config.batch_size).loss;
    } else if (config.eval_every > 0 && s % config.eval_every == 0) {
      row.val_loss = evaluate(model, corpus, Split::Val, config.seq_len, config.batch_size,
                              config.eval_batches * config.batch_size)
                         .loss;
    }
    state.metrics.push_back(row);
    state.step = s;
    if (hooks.on_step) hooks.on_step(row);
    if (hooks.on_snapshot && config.snapshot_every > 0 && s % config.snapshot_every == 0) {
      hooks.on_snapshot(s, model);
    }
  }
}

std::vector<MetricsRow> train(Model<float>& model, const ByteCorpus& corpus, const TrainConfig& config) {
  auto state = init_train_state(model, config);
  train(model, corpus, config, state);
  return state.metrics;
}

std::string metrics_csv(std::span<const MetricsRow> rows) {
  std::string out = "step,lr,train_loss,val_loss\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%zu,%.9g,%.9g,", r.step, r.lr, r.train_loss);
    out += buf;
    if (r.val_loss) {
      std::snprintf(buf, sizeof buf, "%.9g", *r.val_loss);
      out += buf;
    }
    out += '\n';
  }
  return out;
}

}  // namespace denseformer
