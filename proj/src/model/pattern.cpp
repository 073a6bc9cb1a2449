#include "denseformer/pattern.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace denseformer {

const char* variant_name(Variant v) {
  switch (v) {
    case Variant::Transformer: return "transformer";
    case Variant::Full: return "full";
    case Variant::KxP: return "kxp";
    case Variant::LastK: return "last_k";
    case Variant::ConnectToLast: return "connect_to_last";
    case Variant::SkipsWithGains: return "skips_with_gains";
  }
  return "?";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Transformer, Variant::Full, Variant::KxP, Variant::LastK, Variant::ConnectToLast,
                    Variant::SkipsWithGains}) {
    if (name == variant_name(v)) return v;
  }
  throw std::invalid_argument("unknown pattern variant \"" + name + "\"");
}

void SparsityPattern::validate() const {
  if (k < 1) throw std::invalid_argument("pattern.k must be >= 1");
  if (p < 1) throw std::invalid_argument("pattern.p must be >= 1");
}

std::string SparsityPattern::describe() const {
  switch (variant) {
    case Variant::KxP: return std::to_string(k) + "x" + std::to_string(p);
    case Variant::LastK: return "last_" + std::to_string(k);
    default: return variant_name(variant);
  }
}

void ModelConfig::validate() const {
  if (depth < 1) throw std::invalid_argument("depth must be >= 1");
  if (n_heads < 1) throw std::invalid_argument("n_heads must be >= 1");
  if (head_dim < 2 || head_dim % 2 != 0) throw std::invalid_argument("head_dim must be even and >= 2");
  if (vocab_size < 1) throw std::invalid_argument("vocab_size must be >= 1");
  if (seq_len < 1) throw std::invalid_argument("seq_len must be >= 1");
  if (mlp_ratio < 1) throw std::invalid_argument("mlp_ratio must be >= 1");
  pattern.validate();
}

ActiveIndices active_indices(std::size_t i, std::size_t k, std::size_t p) {
  if (k == 0 || p == 0) throw std::invalid_argument("active_indices: k and p must be >= 1");
  if (i % p != 0) return std::nullopt;
  std::vector<std::size_t> out;
  for (std::size_t j = i % k; j <= i; j += k) out.push_back(j);
  return out;
}

ActiveIndices dwa_sources(const SparsityPattern& pattern, std::size_t i, std::size_t depth) {
  switch (pattern.variant) {
    case Variant::Transformer:
    case Variant::SkipsWithGains:
      return std::nullopt;
    case Variant::Full:
      return active_indices(i, 1, 1);
    case Variant::KxP:
      return active_indices(i, pattern.k, pattern.p);
    case Variant::LastK: {
      std::vector<std::size_t> out{0};
      const std::size_t first = i + 1 > pattern.k ? i + 1 - pattern.k : 1;
      for (std::size_t j = std::max<std::size_t>(first, 1); j <= i; ++j) out.push_back(j);
      return out;
    }
    case Variant::ConnectToLast: {
      if (i != depth) return std::nullopt;
      return active_indices(i, 1, 1);
    }
  }
  return std::nullopt;
}

std::vector<std::size_t> dilation_groups(std::size_t depth, std::size_t k) {
  if (k == 0) throw std::invalid_argument("dilation_groups: k must be >= 1");
  std::vector<std::size_t> caps(k, (depth + 1) / k);
  for (std::size_t g = 0; g < (depth + 1) % k; ++g) caps[g] += 1;
  return caps;
}

std::size_t param_count_added(std::size_t depth, const SparsityPattern& pattern) {
  if (pattern.variant == Variant::Full) return depth * (depth + 3) / 2;
  if (pattern.variant == Variant::SkipsWithGains) return 2 * depth;
  std::size_t count = 0;
  for (std::size_t i = 1; i <= depth; ++i) {
    if (auto row = dwa_sources(pattern, i, depth)) count += row->size();
  }
  return count;
}

}  // namespace denseformer
