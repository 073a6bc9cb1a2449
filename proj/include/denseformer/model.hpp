#pragma once

// DenseFormer language model.
//
//   X_0 = Embedding(tokens), Y_0 = X_0
//   X_i = B_i(Y_{i-1})                               i = 1..d
//   Y_i = sum_{j in sources(i)} alpha_{i,j} X_j      (or X_i on pass-through)
//   logits = ln_f(Y_d) . W_head^T
//
// Blocks are pre-norm: x + Attn(LN(x)), then + MLP(LN(.)), causal multi-head
// attention with rotary positions and a GELU MLP. The DWA step runs on either
// a plain list of X_j (naive path) or grouped slice accumulators (one per
// residue class mod k); both give identical forward values.

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "denseformer/config.hpp"
#include "denseformer/pattern.hpp"
#include "denseformer/tensor.hpp"

namespace denseformer {

using ag::Tape;
using ag::Tensor;

inline constexpr double kInitStd = 0.02;

enum class DwaPath { Naive, Accumulator };

struct TokenBatch {
  std::vector<std::int32_t> ids;  // row-major [batch, seq]
  std::size_t batch = 0;
  std::size_t seq = 0;
};

struct ForwardTimings {
  double block_seconds = 0.0;
  double dwa_seconds = 0.0;
};

struct ForwardOptions {
  DwaPath path = DwaPath::Accumulator;
  ForwardTimings* timings = nullptr;
};

// Copies of X_0..X_d and Y_0..Y_d taken during a forward pass.
template <typename T>
struct StreamCapture {
  std::vector<std::vector<T>> x;
  std::vector<std::vector<T>> y;
};

enum class ParamRole { Matrix, Norm, Alpha, Gain };

template <typename T>
struct NamedParameter {
  std::string name;
  Tensor<T> tensor;
  ParamRole role;
};

template <typename T>
struct BlockParams {
  Tensor<T> ln1_gain, ln1_bias;
  Tensor<T> w_qkv;   // [hidden, 3*hidden]
  Tensor<T> w_proj;  // [hidden, hidden]
  Tensor<T> ln2_gain, ln2_bias;
  Tensor<T> w_up;    // [hidden, mlp_ratio*hidden]
  Tensor<T> w_down;  // [mlp_ratio*hidden, hidden]
  Tensor<T> gain_attn, gain_mlp;  // defined only for SkipsWithGains
};

// DWA weights. rows[i] holds alpha_{i,j} for j in sources[i] (ascending);
// index 0 and pass-through depths hold no row.
template <typename T>
struct AlphaSet {
  std::size_t depth = 0;
  std::vector<ActiveIndices> sources;
  std::vector<Tensor<T>> rows;

  bool has_row(std::size_t i) const { return i < sources.size() && sources[i].has_value(); }
  bool active(std::size_t i, std::size_t j) const;
  T value(std::size_t i, std::size_t j) const;
  void set(std::size_t i, std::size_t j, T v);
  std::size_t count() const;
};

template <typename T>
AlphaSet<T> init_alphas(const ModelConfig& config);

template <typename T>
Tensor<T> block_forward(Tape<T>& tape, const Tensor<T>& x, const BlockParams<T>& params, const ModelConfig& config);

template <typename T>
class Model {
 public:
  Model(const ModelConfig& config, std::uint64_t seed);
  Model(Model&&) noexcept = default;
  Model& operator=(Model&&) noexcept = default;
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;

  const ModelConfig& config() const { return config_; }

  Tensor<T>& token_embedding() { return wte_; }
  const Tensor<T>& token_embedding() const { return wte_; }
  // The embedding table itself when embeddings are tied.
  const Tensor<T>& output_head() const { return config_.tie_embeddings ? wte_ : lm_head_; }
  std::vector<BlockParams<T>>& blocks() { return blocks_; }
  const std::vector<BlockParams<T>>& blocks() const { return blocks_; }
  AlphaSet<T>& alphas() { return alphas_; }
  const AlphaSet<T>& alphas() const { return alphas_; }

  // Stable order: embedding, blocks, final norm, head, DWA rows.
  std::vector<NamedParameter<T>> parameters() const;

  Tensor<T> forward(Tape<T>& tape, const TokenBatch& tokens, const ForwardOptions& options = {},
                    StreamCapture<T>* capture = nullptr) const;
  Tensor<T> loss(Tape<T>& tape, const TokenBatch& tokens, std::span<const std::int32_t> targets,
                 const ForwardOptions& options = {}) const;

  Model clone() const;
  void zero_grad();

 private:
  Model() = default;

  ModelConfig config_;
  Tensor<T> wte_;
  Tensor<T> lm_head_;
  std::vector<BlockParams<T>> blocks_;
  Tensor<T> lnf_gain_, lnf_bias_;
  AlphaSet<T> alphas_;
};

extern template class Model<float>;
extern template class Model<double>;

}  // namespace denseformer
