#include "denseformer/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iterator>
#include <stdexcept>
#include <string>

namespace denseformer {

const char* split_name(Split s) { return s == Split::Train ? "train" : "val"; }

ByteCorpus::ByteCorpus(std::vector<std::uint8_t> bytes, double val_frac, std::size_t seq_len)
    : bytes_(std::move(bytes)) {
  if (!(val_frac > 0.0 && val_frac < 1.0)) {
    throw std::invalid_argument("val_frac must lie in (0, 1), got " + std::to_string(val_frac));
  }
  const std::size_t min_len = 10 * (seq_len + 1);
  if (bytes_.size() <= min_len) {
    throw std::invalid_argument("corpus too small: " + std::to_string(bytes_.size()) + " bytes, need more than " +
                                std::to_string(min_len));
  }
  const auto val_len = static_cast<std::size_t>(std::llround(val_frac * static_cast<double>(bytes_.size())));
  if (val_len == 0 || val_len >= bytes_.size()) {
    throw std::invalid_argument("val_frac leaves an empty split");
  }
  train_len_ = bytes_.size() - val_len;
}

ByteCorpus ByteCorpus::load(const std::filesystem::path& path, double val_frac, std::size_t seq_len) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open corpus file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw std::runtime_error("error reading corpus file " + path.string());
  return ByteCorpus(std::move(bytes), val_frac, seq_len);
}

std::span<const std::uint8_t> ByteCorpus::split(Split s) const {
  std::span<const std::uint8_t> all(bytes_);
  return s == Split::Train ? all.first(train_len_) : all.subspan(train_len_);
}

void fill_window(std::span<const std::uint8_t> split, std::size_t offset, std::size_t seq, std::int32_t* inputs,
                 std::int32_t* targets) {
  if (split.empty()) throw std::invalid_argument("fill_window: empty split");
  const std::size_t n = split.size();
  std::size_t pos = offset % n;
  for (std::size_t t = 0; t <= seq; ++t) {
    const auto token = static_cast<std::int32_t>(split[pos]);
    if (t < seq) inputs[t] = token;
    if (t > 0) targets[t - 1] = token;
    pos = pos + 1 == n ? 0 : pos + 1;
  }
}

namespace {

Batch empty_batch(std::size_t batch_size, std::size_t seq) {
  Batch b;
  b.inputs.batch = batch_size;
  b.inputs.seq = seq;
  b.inputs.ids.resize(batch_size * seq);
  b.targets.resize(batch_size * seq);
  return b;
}

}  // namespace

Batch next_batch(const ByteCorpus& corpus, Split split, std::size_t batch_size, std::size_t seq,
                 std::mt19937_64& rng) {
  const auto data = corpus.split(split);
  const std::size_t hi = data.size() > seq + 1 ? data.size() - (seq + 1) : data.size() - 1;
  std::uniform_int_distribution<std::size_t> pick(0, hi);
  Batch b = empty_batch(batch_size, seq);
  for (std::size_t r = 0; r < batch_size; ++r) {
    fill_window(data, pick(rng), seq, b.inputs.ids.data() + r * seq, b.targets.data() + r * seq);
  }
  return b;
}

std::vector<std::size_t> sequential_offsets(std::size_t split_len, std::size_t seq) {
  std::vector<std::size_t> out;
  if (seq == 0) return out;
  for (std::size_t o = 0; o + seq < split_len; o += seq) out.push_back(o);
  return out;
}

Batch batch_at(const ByteCorpus& corpus, Split split, std::span<const std::size_t> offsets, std::size_t seq) {
  const auto data = corpus.split(split);
  Batch b = empty_batch(offsets.size(), seq);
  for (std::size_t r = 0; r < offsets.size(); ++r) {
    fill_window(data, offsets[r], seq, b.inputs.ids.data() + r * seq, b.targets.data() + r * seq);
  }
  return b;
}

std::string synthetic_text(std::size_t n_bytes, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  static const char* const kOnsets[] = {"b", "c", "d", "f", "g", "h", "l", "m", "n", "p", "r", "s", "t", "v", "w",
                                        "br", "ch", "cl", "dr", "gr", "pl", "sh", "st", "th", "tr", ""};
  static const char* const kVowels[] = {"a", "e", "i", "o", "u", "ea", "ou", "ai", "ee", "y"};
  static const char* const kCodas[] = {"", "", "", "n", "r", "s", "t", "l", "nd", "st", "ng", "rk", "m"};
  auto pick = [&](auto& arr) {
    const std::size_t n = std::size(arr);
    return std::string(arr[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  };

  constexpr std::size_t kWords = 2000;
  constexpr std::size_t kSuccessors = 12;
  std::vector<std::string> words;
  words.reserve(kWords);
  for (std::size_t w = 0; w < kWords; ++w) {
    // Frequent words are short, as in natural text.
    const std::size_t max_syl = w < 50 ? 1 : (w < 400 ? 2 : 3);
    const std::size_t syl = std::uniform_int_distribution<std::size_t>(1, max_syl)(rng);
    std::string s;
    for (std::size_t k = 0; k < syl; ++k) s += pick(kOnsets) + pick(kVowels) + pick(kCodas);
    words.push_back(s);
  }

  // Zipfian unigram and a per-word successor table mixing a few preferred
  // followers with the unigram.
  std::vector<double> zipf(kWords);
  for (std::size_t w = 0; w < kWords; ++w) zipf[w] = 1.0 / static_cast<double>(w + 1);
  std::discrete_distribution<std::size_t> unigram(zipf.begin(), zipf.end());
  std::vector<std::vector<std::size_t>> successors(kWords);
  for (auto& row : successors) {
    for (std::size_t k = 0; k < kSuccessors; ++k) row.push_back(unigram(rng));
  }
  std::uniform_real_distribution<double> coin(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> succ_pick(0, kSuccessors - 1);
  std::uniform_int_distribution<int> sentence_len(4, 18);
  std::uniform_int_distribution<int> paragraph_len(3, 8);

  std::string out;
  out.reserve(n_bytes + 256);
  while (out.size() < n_bytes) {
    const int sentences = paragraph_len(rng);
    for (int s = 0; s < sentences && out.size() < n_bytes; ++s) {
      const int len = sentence_len(rng);
      std::size_t w = unigram(rng);
      for (int t = 0; t < len; ++t) {
        std::string word = words[w];
        if (t == 0) word[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(word[0])));
        out += word;
        if (t + 1 < len) {
          out += (t > 2 && coin(rng) < 0.08) ? ", " : " ";
        }
        w = coin(rng) < 0.7 ? successors[w][succ_pick(rng)] : unigram(rng);
      }
      out += coin(rng) < 0.85 ? ". " : (coin(rng) < 0.5 ? "? " : "! ");
    }
    out.back() = '\n';
    out += '\n';
  }
  out.resize(n_bytes);
  return out;
}

}  // namespace denseformer
