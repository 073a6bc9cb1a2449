#pragma once

#include <cstddef>
#include <string>

namespace denseformer {

enum class Variant {
  Transformer,     // no DWA
  Full,            // dilation 1, period 1
  KxP,             // dilation k, period p
  LastK,           // X_0 plus the last k block outputs (current block included)
  ConnectToLast,   // single DWA after the final block over X_0..X_d
  SkipsWithGains,  // no DWA; one learned scalar per skip connection
};

struct SparsityPattern {
  Variant variant = Variant::Full;
  std::size_t k = 1;  // dilation for KxP, window length for LastK
  std::size_t p = 1;  // period for KxP

  static SparsityPattern transformer() { return {Variant::Transformer, 1, 1}; }
  static SparsityPattern full() { return {Variant::Full, 1, 1}; }
  static SparsityPattern kxp(std::size_t k, std::size_t p) { return {Variant::KxP, k, p}; }
  static SparsityPattern last_k(std::size_t k) { return {Variant::LastK, k, 1}; }
  static SparsityPattern connect_to_last() { return {Variant::ConnectToLast, 1, 1}; }
  static SparsityPattern skips_with_gains() { return {Variant::SkipsWithGains, 1, 1}; }

  bool has_dwa() const { return variant != Variant::Transformer && variant != Variant::SkipsWithGains; }
  // Residue-class grouping used by the accumulator path.
  std::size_t dilation() const { return variant == Variant::KxP ? k : 1; }
  void validate() const;
  std::string describe() const;

  friend bool operator==(const SparsityPattern&, const SparsityPattern&) = default;
};

const char* variant_name(Variant v);
Variant parse_variant(const std::string& name);

struct ModelConfig {
  std::size_t depth = 6;
  std::size_t n_heads = 4;
  std::size_t head_dim = 32;
  std::size_t vocab_size = 256;
  std::size_t seq_len = 128;
  std::size_t mlp_ratio = 4;
  SparsityPattern pattern = SparsityPattern::full();
  bool tie_embeddings = true;

  std::size_t hidden() const { return n_heads * head_dim; }
  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace denseformer
