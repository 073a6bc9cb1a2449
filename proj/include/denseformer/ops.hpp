#pragma once

// Differentiable ops. Every op takes the tape first; with a disabled tape (or
// no grad-requiring input) nothing is recorded. Forward outputs are checked
// for NaN/Inf and raise NonFiniteError naming the op.

#include <cstdint>
#include <span>
#include <vector>

#include "denseformer/tensor.hpp"

namespace denseformer::ag {

enum class Transpose { No, Yes };

inline constexpr double kLayerNormEps = 1e-5;
inline constexpr double kRopeBase = 10000.0;

// a: [m,k] or [b,m,k] (rows flattened); b: [k,n], or [n,k] with Transpose::Yes.
template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, Transpose tb = Transpose::No);

// Batched product over the leading axis: a [N,m,k] x b [N,k,n] (or [N,n,k]).
template <typename T>
Tensor<T> bmm(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, Transpose tb = Transpose::No);

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

// Elementwise product of equal shapes.
template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b);

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor);

// x * g where g is a learnable single-element tensor.
template <typename T>
Tensor<T> scale_by(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain);

template <typename T>
Tensor<T> exp(Tape<T>& tape, const Tensor<T>& x);

// Exact (erf) GELU.
template <typename T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x);

template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     double eps = kLayerNormEps);

// Rotates consecutive pairs of the last axis of x ([seq,hd] or [N,seq,hd]) by
// positions[t] * base^(-2i/hd). positions has one entry per sequence step.
template <typename T>
Tensor<T> rope_rotate(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> positions,
                      double base = kRopeBase);

// Row-wise softmax of scale*scores over the last axis with the strict upper
// triangle masked out. scores: [seq,seq] or [N,seq,seq].
template <typename T>
Tensor<T> softmax_causal(Tape<T>& tape, const Tensor<T>& scores, T scale = T(1));

// Mean negative log-likelihood of targets under softmax(logits); logits are
// [rows, vocab] with any leading axes flattened into rows.
template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::int32_t> targets);

// Row gather: table [vocab, hidden] -> [batch, seq, hidden].
template <typename T>
Tensor<T> embedding(Tape<T>& tape, const Tensor<T>& table, std::span<const std::int32_t> ids, std::size_t batch,
                    std::size_t seq);

// x [B,T,parts*H*hd] -> part `part` as [B*H, T, hd].
template <typename T>
Tensor<T> split_heads(Tape<T>& tape, const Tensor<T>& x, std::size_t n_heads, std::size_t part, std::size_t parts);

// x [B*H, T, hd] -> [B, T, H*hd].
template <typename T>
Tensor<T> merge_heads(Tape<T>& tape, const Tensor<T>& x, std::size_t n_heads);

// sum_j w[j] * xs[j], accumulated in ascending j.
template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, std::span<const Tensor<T>> xs, const Tensor<T>& w);

// sum_m w[m] * stacked[slots[m]] over a stacked [n, ...] tensor; the result
// takes `out_shape`. Same accumulation order as weighted_sum.
template <typename T>
Tensor<T> weighted_sum_slots(Tape<T>& tape, const Tensor<T>& stacked, const Tensor<T>& w,
                             std::span<const std::size_t> slots, const Shape& out_shape);

// Throws NonFiniteError if any value is NaN/Inf.
template <typename T>
void check_finite(std::span<const T> values, const char* what);

}  // namespace denseformer::ag
