#pragma once

// Post-hoc analyses of trained models: DWA weight matrices, magnitude
// pruning, cosine similarity to the embeddings, singular-value spectra and
// forward throughput.

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "denseformer/corpus.hpp"
#include "denseformer/model.hpp"

namespace denseformer {

// Row i-1 holds alpha_{i,j} for j = 0..d; inactive cells are empty. Depths
// without a DWA module have an all-empty row.
struct AlphaMatrix {
  std::size_t depth = 0;
  std::vector<std::vector<std::optional<float>>> cells;

  std::size_t active_count() const;
  friend bool operator==(const AlphaMatrix&, const AlphaMatrix&) = default;
};

// Throws std::invalid_argument for patterns without DWA.
AlphaMatrix alpha_matrix(const Model<float>& model);

// CSV header "depth,src0,...,src<d>"; values use 9 significant digits so
// float values survive the round trip bit for bit.
std::string alpha_matrix_csv(const AlphaMatrix& m);
std::string alpha_matrix_json(const AlphaMatrix& m);
AlphaMatrix parse_alpha_matrix_csv(const std::string& text);
AlphaMatrix parse_alpha_matrix_json(const std::string& text);

// Writes the values into the model; the active-cell set must equal the
// model's mask.
void load_alpha_matrix(Model<float>& model, const AlphaMatrix& m);

struct PruneResult {
  Model<float> model;
  std::vector<std::pair<std::size_t, std::size_t>> zeroed;  // (i, j)
};

// Zeroes the floor(f * count) active alphas of smallest magnitude, diagonal
// included; ties break by (i, j). The input model is left untouched.
PruneResult prune_by_magnitude(const Model<float>& model, double fraction);

struct PruneSweepRow {
  double fraction = 0.0;
  std::size_t pruned = 0;
  double loss = 0.0;
  double perplexity = 0.0;
};

std::vector<PruneSweepRow> prune_sweep(const Model<float>& model, const ByteCorpus& corpus,
                                       std::span<const double> fractions, std::size_t seq, std::size_t batch_size,
                                       std::size_t max_windows = 0);
std::string prune_sweep_csv(std::span<const PruneSweepRow> rows);

struct CosineProfile {
  std::vector<double> similarity;  // depths 0..d
  std::size_t zero_norm_count = 0;
};

// Mean over batch and positions of cos(Y_i[b,t,:], X_0[b,t,:]); a zero-norm
// vector contributes 0 and is counted.
CosineProfile cosine_profile(const Model<float>& model, const TokenBatch& batch);
std::string cosine_profile_csv(const CosineProfile& p);

// One-sided Jacobi (Hestenes) iteration until every column pair satisfies
// |<u_p, u_q>| <= 1e-12 * |u_p| |u_q|. Returns min(rows, cols) values in
// descending order.
std::vector<double> singular_values(std::span<const double> data, std::size_t rows, std::size_t cols);
// Throws ag::ShapeError unless the tensor is 2-D.
std::vector<double> singular_values(const Tensor<float>& matrix);

struct RankSpectrum {
  std::string role;  // qkv, proj, up, down, embedding, head
  std::size_t matrices = 0;
  std::vector<double> mean_sigma;
  // max over matrices of |sum sigma^2 - ||A||_F^2| / ||A||_F^2
  double max_frobenius_rel_error = 0.0;
};

std::vector<RankSpectrum> rank_spectra(const Model<float>& model);
std::string rank_spectrum_csv(const RankSpectrum& s);

struct BenchReport {
  std::string model;
  std::size_t batch_size = 0;
  std::size_t seq_len = 0;
  std::size_t n_timed = 0;
  double forward_median = 0.0;  // seconds per forward pass
  double forward_iqr = 0.0;
  double dwa_median = 0.0;
  double dwa_iqr = 0.0;
  double block_median = 0.0;
  double batches_per_second = 0.0;
};

struct BenchOptions {
  std::size_t batch_size = 64;
  std::size_t n_warmup = 2;
  std::size_t n_timed = 10;
  std::uint64_t seed = 0;
  DwaPath path = DwaPath::Accumulator;
};

// Times full-sequence inference forward passes on random tokens.
BenchReport bench_throughput(const Model<float>& model, const BenchOptions& options);
std::string bench_report_json(const BenchReport& r);

// Median and interquartile range with linear interpolation between order
// statistics.
double median(std::vector<double> v);
double interquartile_range(std::vector<double> v);

}  // namespace denseformer
