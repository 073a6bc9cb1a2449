#include "denseformer/model.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <optional>
#include <random>
#include <stdexcept>

#include "denseformer/accumulator.hpp"
#include "denseformer/ops.hpp"

namespace denseformer {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

template <typename T>
Tensor<T> normal_tensor(ag::Shape shape, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> values(ag::numel_of(shape));
  for (T& v : values) v = static_cast<T>(dist(rng));
  return Tensor<T>::from(std::move(shape), std::move(values), true);
}

template <typename T>
void copy_capture(std::vector<std::vector<T>>& dst, const Tensor<T>& t) {
  dst.emplace_back(t.data().begin(), t.data().end());
}

}  // namespace

template <typename T>
bool AlphaSet<T>::active(std::size_t i, std::size_t j) const {
  if (!has_row(i)) return false;
  const auto& src = *sources[i];
  return std::binary_search(src.begin(), src.end(), j);
}

template <typename T>
T AlphaSet<T>::value(std::size_t i, std::size_t j) const {
  if (has_row(i)) {
    const auto& src = *sources[i];
    for (std::size_t m = 0; m < src.size(); ++m) {
      if (src[m] == j) return rows[i].data()[m];
    }
  }
  throw std::out_of_range("alpha(" + std::to_string(i) + "," + std::to_string(j) + ") is not an active weight");
}

template <typename T>
void AlphaSet<T>::set(std::size_t i, std::size_t j, T v) {
  if (has_row(i)) {
    const auto& src = *sources[i];
    for (std::size_t m = 0; m < src.size(); ++m) {
      if (src[m] == j) {
        rows[i].data()[m] = v;
        return;
      }
    }
  }
  throw std::out_of_range("alpha(" + std::to_string(i) + "," + std::to_string(j) + ") is not an active weight");
}

template <typename T>
std::size_t AlphaSet<T>::count() const {
  std::size_t n = 0;
  for (const auto& s : sources) {
    if (s) n += s->size();
  }
  return n;
}

template <typename T>
AlphaSet<T> init_alphas(const ModelConfig& config) {
  AlphaSet<T> set;
  set.depth = config.depth;
  set.sources.assign(config.depth + 1, std::nullopt);
  set.rows.resize(config.depth + 1);
  for (std::size_t i = 1; i <= config.depth; ++i) {
    auto src = dwa_sources(config.pattern, i, config.depth);
    if (!src) continue;
    std::vector<T> w(src->size(), T(0));
    w.back() = T(1);  // sources are ascending and always end with i itself
    const std::size_t n = w.size();
    set.rows[i] = Tensor<T>::from({n}, std::move(w), true);
    set.sources[i] = std::move(src);
  }
  return set;
}

template <typename T>
Tensor<T> block_forward(Tape<T>& tape, const Tensor<T>& x, const BlockParams<T>& p, const ModelConfig& config) {
  if (x.rank() != 3 || x.extent(2) != config.hidden()) {
    throw ag::ShapeError("block_forward: expected [batch, seq, " + std::to_string(config.hidden()) + "], got " +
                         ag::shape_str(x.shape()));
  }
  const std::size_t heads = config.n_heads;
  std::vector<std::size_t> positions(x.extent(1));
  std::iota(positions.begin(), positions.end(), std::size_t{0});

  auto h = ag::layer_norm(tape, x, p.ln1_gain, p.ln1_bias);
  auto qkv = ag::matmul(tape, h, p.w_qkv);
  auto q = ag::rope_rotate(tape, ag::split_heads(tape, qkv, heads, 0, 3), positions);
  auto k = ag::rope_rotate(tape, ag::split_heads(tape, qkv, heads, 1, 3), positions);
  auto v = ag::split_heads(tape, qkv, heads, 2, 3);
  const T score_scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(config.head_dim)));
  auto att = ag::softmax_causal(tape, ag::bmm(tape, q, k, ag::Transpose::Yes), score_scale);
  auto a = ag::matmul(tape, ag::merge_heads(tape, ag::bmm(tape, att, v), heads), p.w_proj);
  auto skip1 = p.gain_attn.defined() ? ag::scale_by(tape, x, p.gain_attn) : x;
  auto x1 = ag::add(tape, skip1, a);

  auto h2 = ag::layer_norm(tape, x1, p.ln2_gain, p.ln2_bias);
  auto m = ag::matmul(tape, ag::gelu(tape, ag::matmul(tape, h2, p.w_up)), p.w_down);
  auto skip2 = p.gain_mlp.defined() ? ag::scale_by(tape, x1, p.gain_mlp) : x1;
  return ag::add(tape, skip2, m);
}

template <typename T>
Model<T>::Model(const ModelConfig& config, std::uint64_t seed) : config_(config) {
  config_.validate();
  const std::size_t hidden = config_.hidden();
  const std::size_t inner = config_.mlp_ratio * hidden;
  const double resid_std = kInitStd / std::sqrt(2.0 * static_cast<double>(config_.depth));
  std::mt19937_64 rng(seed);

  // Draw order is independent of the pattern so that every variant built
  // from one seed shares its block parameters.
  wte_ = normal_tensor<T>({config_.vocab_size, hidden}, kInitStd, rng);
  blocks_.resize(config_.depth);
  for (auto& b : blocks_) {
    b.ln1_gain = Tensor<T>::full({hidden}, T(1), true);
    b.ln1_bias = Tensor<T>::zeros({hidden}, true);
    b.w_qkv = normal_tensor<T>({hidden, 3 * hidden}, kInitStd, rng);
    b.w_proj = normal_tensor<T>({hidden, hidden}, resid_std, rng);
    b.ln2_gain = Tensor<T>::full({hidden}, T(1), true);
    b.ln2_bias = Tensor<T>::zeros({hidden}, true);
    b.w_up = normal_tensor<T>({hidden, inner}, kInitStd, rng);
    b.w_down = normal_tensor<T>({inner, hidden}, resid_std, rng);
    if (config_.pattern.variant == Variant::SkipsWithGains) {
      b.gain_attn = Tensor<T>::scalar(T(1), true);
      b.gain_mlp = Tensor<T>::scalar(T(1), true);
    }
  }
  lnf_gain_ = Tensor<T>::full({hidden}, T(1), true);
  lnf_bias_ = Tensor<T>::zeros({hidden}, true);
  if (!config_.tie_embeddings) lm_head_ = normal_tensor<T>({config_.vocab_size, hidden}, kInitStd, rng);
  alphas_ = init_alphas<T>(config_);
}

template <typename T>
std::vector<NamedParameter<T>> Model<T>::parameters() const {
  std::vector<NamedParameter<T>> out;
  out.push_back({"wte", wte_, ParamRole::Matrix});
  for (std::size_t i = 0; i < blocks_.size(); ++i) {
    const auto& b = blocks_[i];
    const std::string prefix = "blocks." + std::to_string(i + 1) + ".";
    out.push_back({prefix + "ln1.gain", b.ln1_gain, ParamRole::Norm});
    out.push_back({prefix + "ln1.bias", b.ln1_bias, ParamRole::Norm});
    out.push_back({prefix + "attn.w_qkv", b.w_qkv, ParamRole::Matrix});
    out.push_back({prefix + "attn.w_proj", b.w_proj, ParamRole::Matrix});
    out.push_back({prefix + "ln2.gain", b.ln2_gain, ParamRole::Norm});
    out.push_back({prefix + "ln2.bias", b.ln2_bias, ParamRole::Norm});
    out.push_back({prefix + "mlp.w_up", b.w_up, ParamRole::Matrix});
    out.push_back({prefix + "mlp.w_down", b.w_down, ParamRole::Matrix});
    if (b.gain_attn.defined()) out.push_back({prefix + "gain_attn", b.gain_attn, ParamRole::Gain});
    if (b.gain_mlp.defined()) out.push_back({prefix + "gain_mlp", b.gain_mlp, ParamRole::Gain});
  }
  out.push_back({"ln_f.gain", lnf_gain_, ParamRole::Norm});
  out.push_back({"ln_f.bias", lnf_bias_, ParamRole::Norm});
  if (!config_.tie_embeddings) out.push_back({"lm_head", lm_head_, ParamRole::Matrix});
  for (std::size_t i = 1; i <= alphas_.depth; ++i) {
    if (alphas_.has_row(i)) out.push_back({"dwa." + std::to_string(i) + ".alpha", alphas_.rows[i], ParamRole::Alpha});
  }
  return out;
}

template <typename T>
Tensor<T> Model<T>::forward(Tape<T>& tape, const TokenBatch& tokens, const ForwardOptions& options,
                            StreamCapture<T>* capture) const {
  if (tokens.batch == 0 || tokens.seq == 0 || tokens.ids.size() != tokens.batch * tokens.seq) {
    throw ag::ShapeError("forward: token batch is empty or inconsistent");
  }
  if (tokens.seq > config_.seq_len) {
    throw ag::ShapeError("forward: sequence of " + std::to_string(tokens.seq) + " exceeds seq_len " +
                         std::to_string(config_.seq_len));
  }
  const std::size_t depth = config_.depth;
  ForwardTimings* timings = options.timings;

  auto x0 = ag::embedding(tape, wte_, tokens.ids, tokens.batch, tokens.seq);
  if (capture) {
    capture->x.clear();
    capture->y.clear();
    copy_capture(capture->x, x0);
    copy_capture(capture->y, x0);
  }

  auto run_block = [&](std::size_t i, const Tensor<T>& in) {
    const auto start = Clock::now();
    auto out = block_forward(tape, in, blocks_[i - 1], config_);
    if (timings) timings->block_seconds += seconds_since(start);
    if (capture) copy_capture(capture->x, out);
    return out;
  };

  Tensor<T> y = x0;
  if (!config_.pattern.has_dwa()) {
    for (std::size_t i = 1; i <= depth; ++i) {
      y = run_block(i, y);
      if (capture) copy_capture(capture->y, y);
    }
  } else if (options.path == DwaPath::Naive) {
    std::vector<Tensor<T>> xs{x0};
    for (std::size_t i = 1; i <= depth; ++i) {
      auto x = run_block(i, y);
      const auto start = Clock::now();
      xs.push_back(x);
      if (alphas_.has_row(i)) {
        std::vector<Tensor<T>> selected;
        for (std::size_t j : *alphas_.sources[i]) selected.push_back(xs[j]);
        y = ag::weighted_sum<T>(tape, selected, alphas_.rows[i]);
      } else {
        y = x;
      }
      if (timings) timings->dwa_seconds += seconds_since(start);
      if (capture) copy_capture(capture->y, y);
    }
  } else {
    const auto start = Clock::now();
    const std::size_t k = config_.pattern.dilation();
    const auto capacities = dilation_groups(depth, k);
    std::vector<std::optional<ag::SliceAccumulator<T>>> groups(k);
    for (std::size_t g = 0; g < k; ++g) {
      if (capacities[g] > 0) groups[g].emplace(capacities[g], x0.shape());
    }
    std::vector<Tensor<T>> views(k);
    views[0] = groups[0]->push_at(tape, 0, x0);
    if (timings) timings->dwa_seconds += seconds_since(start);
    std::vector<std::size_t> slots;
    for (std::size_t i = 1; i <= depth; ++i) {
      auto x = run_block(i, y);
      const auto dwa_start = Clock::now();
      const std::size_t g = i % k;
      views[g] = groups[g]->push_at(tape, i / k, x);
      if (alphas_.has_row(i)) {
        slots.clear();
        for (std::size_t j : *alphas_.sources[i]) slots.push_back(j / k);
        y = ag::weighted_sum_slots(tape, views[g], alphas_.rows[i], slots, x.shape());
      } else {
        y = x;
      }
      if (timings) timings->dwa_seconds += seconds_since(dwa_start);
      if (capture) copy_capture(capture->y, y);
    }
  }

  auto h = ag::layer_norm(tape, y, lnf_gain_, lnf_bias_);
  return ag::matmul(tape, h, output_head(), ag::Transpose::Yes);
}

template <typename T>
Tensor<T> Model<T>::loss(Tape<T>& tape, const TokenBatch& tokens, std::span<const std::int32_t> targets,
                         const ForwardOptions& options) const {
  auto logits = forward(tape, tokens, options);
  return ag::cross_entropy(tape, logits, targets);
}

template <typename T>
Model<T> Model<T>::clone() const {
  Model m;
  m.config_ = config_;
  m.wte_ = wte_.clone();
  if (lm_head_.defined()) m.lm_head_ = lm_head_.clone();
  m.blocks_.reserve(blocks_.size());
  for (const auto& b : blocks_) {
    BlockParams<T> c;
    c.ln1_gain = b.ln1_gain.clone();
    c.ln1_bias = b.ln1_bias.clone();
    c.w_qkv = b.w_qkv.clone();
    c.w_proj = b.w_proj.clone();
    c.ln2_gain = b.ln2_gain.clone();
    c.ln2_bias = b.ln2_bias.clone();
    c.w_up = b.w_up.clone();
    c.w_down = b.w_down.clone();
    if (b.gain_attn.defined()) c.gain_attn = b.gain_attn.clone();
    if (b.gain_mlp.defined()) c.gain_mlp = b.gain_mlp.clone();
    m.blocks_.push_back(std::move(c));
  }
  m.lnf_gain_ = lnf_gain_.clone();
  m.lnf_bias_ = lnf_bias_.clone();
  m.alphas_.depth = alphas_.depth;
  m.alphas_.sources = alphas_.sources;
  m.alphas_.rows.resize(alphas_.rows.size());
  for (std::size_t i = 0; i < alphas_.rows.size(); ++i) {
    if (alphas_.rows[i].defined()) m.alphas_.rows[i] = alphas_.rows[i].clone();
  }
  return m;
}

template <typename T>
void Model<T>::zero_grad() {
  for (auto& p : parameters()) p.tensor.clear_grad();
}

template struct AlphaSet<float>;
template struct AlphaSet<double>;
template AlphaSet<float> init_alphas<float>(const ModelConfig&);
template AlphaSet<double> init_alphas<double>(const ModelConfig&);
template Tensor<float> block_forward<float>(Tape<float>&, const Tensor<float>&, const BlockParams<float>&,
                                            const ModelConfig&);
template Tensor<double> block_forward<double>(Tape<double>&, const Tensor<double>&, const BlockParams<double>&,
                                              const ModelConfig&);
template class Model<float>;
template class Model<double>;

}  // namespace denseformer
