#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <algorithm>
#include <string>
#include <vector>

#include "denseformer/model.hpp"
#include "denseformer/pattern.hpp"
#include "denseformer/tensor.hpp"

namespace dft {

using denseformer::ag::Shape;
using denseformer::ag::Tape;
using denseformer::ag::Tensor;

template <typename T = double>
Tensor<T> random_tensor(const Shape& shape, std::mt19937_64& rng, double stddev = 1.0, bool requires_grad = true) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<T> v(denseformer::ag::numel_of(shape));
  for (auto& x : v) x = static_cast<T>(dist(rng));
  return Tensor<T>::from(shape, std::move(v), requires_grad);
}

// Fixed random projection so that grad checks see a non-trivial upstream
// gradient: sum(x * r).
template <typename T>
Tensor<T> project(Tape<T>& tape, const Tensor<T>& x, std::uint64_t seed);

inline denseformer::TokenBatch random_tokens(std::size_t batch, std::size_t seq, std::size_t vocab,
                                             std::mt19937_64& rng) {
  denseformer::TokenBatch t;
  t.batch = batch;
  t.seq = seq;
  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(vocab) - 1);
  for (std::size_t i = 0; i < batch * seq; ++i) t.ids.push_back(pick(rng));
  return t;
}

inline denseformer::ModelConfig micro_config(std::size_t depth, denseformer::SparsityPattern pattern) {
  denseformer::ModelConfig c;
  c.depth = depth;
  c.n_heads = 2;
  c.head_dim = 4;
  c.vocab_size = 11;
  c.seq_len = 4;
  c.pattern = pattern;
  return c;
}

// All patterns exercised by the structural tests at a given depth.
std::vector<denseformer::SparsityPattern> all_patterns(std::size_t depth);

inline double rel_diff(double a, double b) {
  const double scale = std::max({std::fabs(a), std::fabs(b), 1e-12});
  return std::fabs(a - b) / scale;
}

// Max over elements of |a-b| / max(max|a|, tiny).
double max_rel_diff(std::span<const float> a, std::span<const float> b);
double max_rel_diff(std::span<const double> a, std::span<const double> b);

std::filesystem::path temp_dir(const std::string& name);

// Reference filter for DWA masks: keep the list X_0..X_i, a module exists
// after block i when p divides i, and it reads entry j when (i - j) is a
// multiple of k.
denseformer::ActiveIndices listing_filter(std::size_t i, std::size_t k, std::size_t p);

// Singular values of a row-major 3x3 matrix from the roots of the
// characteristic polynomial of A^T A (closed-form trigonometric solution),
// descending.
std::vector<double> gram_singular_values_3x3(std::span<const double> a);

}  // namespace dft
