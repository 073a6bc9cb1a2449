#pragma once

// Byte-level corpus: every byte is a token id in [0, 256). The last val_frac
// of the file is the validation split.

#include <cstdint>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "denseformer/model.hpp"

namespace denseformer {

inline constexpr std::size_t kByteVocab = 256;

enum class Split { Train, Val };

const char* split_name(Split s);

class ByteCorpus {
 public:
  // Throws std::invalid_argument if the data is shorter than
  // 10 * (seq_len + 1) bytes or val_frac leaves either split empty.
  ByteCorpus(std::vector<std::uint8_t> bytes, double val_frac, std::size_t seq_len);

  static ByteCorpus load(const std::filesystem::path& path, double val_frac, std::size_t seq_len);

  std::span<const std::uint8_t> split(Split s) const;
  std::span<const std::uint8_t> train() const { return split(Split::Train); }
  std::span<const std::uint8_t> val() const { return split(Split::Val); }
  std::size_t vocab_size() const { return kByteVocab; }
  std::size_t size() const { return bytes_.size(); }

 private:
  std::vector<std::uint8_t> bytes_;
  std::size_t train_len_ = 0;
};

// targets[b, t] = raw[b, t + 1]; inputs.ids holds raw[b, 0..seq).
struct Batch {
  TokenBatch inputs;
  std::vector<std::int32_t> targets;
};

// Window of seq + 1 tokens starting at offset; positions past the end of
// the split wrap to its start.
void fill_window(std::span<const std::uint8_t> split, std::size_t offset, std::size_t seq, std::int32_t* inputs,
                 std::int32_t* targets);

// batch_size windows at offsets drawn uniformly (with replacement) from the
// split. Offsets are drawn in row order, one per window.
Batch next_batch(const ByteCorpus& corpus, Split split, std::size_t batch_size, std::size_t seq,
                 std::mt19937_64& rng);

// Start offsets of the non-overlapping windows that tile the split with
// stride seq; every target position is covered exactly once.
std::vector<std::size_t> sequential_offsets(std::size_t split_len, std::size_t seq);

Batch batch_at(const ByteCorpus& corpus, Split split, std::span<const std::size_t> offsets, std::size_t seq);

// Deterministic English-like text used when no corpus file is at hand: a
// seeded vocabulary with Zipfian word frequencies, word-to-word successor
// preferences, sentences and paragraphs.
std::string synthetic_text(std::size_t n_bytes, std::uint64_t seed);

}  // namespace denseformer
