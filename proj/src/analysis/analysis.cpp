#include "denseformer/analysis.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <random>
#include <sstream>
#include <stdexcept>

#include "denseformer/ops.hpp"
#include "denseformer/trainer.hpp"
#include "json.hpp"

namespace denseformer {

namespace {

std::string fmt_g9(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::string fmt_g17(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

float parse_float(const std::string& s) {
  const char* begin = s.c_str();
  char* end = nullptr;
  const float v = std::strtof(begin, &end);
  if (end == begin || *end != '\0') throw std::invalid_argument("alpha matrix: bad number \"" + s + "\"");
  return v;
}

}  // namespace

std::size_t AlphaMatrix::active_count() const {
  std::size_t n = 0;
  for (const auto& row : cells) {
    for (const auto& c : row) n += c.has_value();
  }
  return n;
}

AlphaMatrix alpha_matrix(const Model<float>& model) {
  const auto& cfg = model.config();
  if (!cfg.pattern.has_dwa()) {
    throw std::invalid_argument("model with pattern " + cfg.pattern.describe() + " has no DWA weights");
  }
  const auto& alphas = model.alphas();
  AlphaMatrix m;
  m.depth = cfg.depth;
  m.cells.assign(cfg.depth, std::vector<std::optional<float>>(cfg.depth + 1));
  for (std::size_t i = 1; i <= cfg.depth; ++i) {
    if (!alphas.has_row(i)) continue;
    const auto& src = *alphas.sources[i];
    for (std::size_t m_idx = 0; m_idx < src.size(); ++m_idx) {
      m.cells[i - 1][src[m_idx]] = alphas.rows[i].data()[m_idx];
    }
  }
  return m;
}

std::string alpha_matrix_csv(const AlphaMatrix& m) {
  std::string out = "depth";
  for (std::size_t j = 0; j <= m.depth; ++j) out += ",src" + std::to_string(j);
  out += '\n';
  for (std::size_t i = 0; i < m.cells.size(); ++i) {
    out += std::to_string(i + 1);
    for (const auto& c : m.cells[i]) {
      out += ',';
      if (c) out += fmt_g9(*c);
    }
    out += '\n';
  }
  return out;
}

AlphaMatrix parse_alpha_matrix_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw std::invalid_argument("alpha matrix: empty CSV");
  const auto header = split_cells(line);
  if (header.size() < 2 || header[0] != "depth") throw std::invalid_argument("alpha matrix: bad CSV header");
  AlphaMatrix m;
  m.depth = header.size() - 2;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    auto cells = split_cells(line);
    if (cells.size() != header.size()) {
      throw std::invalid_argument("alpha matrix: row has " + std::to_string(cells.size()) + " cells, expected " +
                                  std::to_string(header.size()));
    }
    if (cells[0] != std::to_string(m.cells.size() + 1)) throw std::invalid_argument("alpha matrix: rows out of order");
    std::vector<std::optional<float>> row;
    for (std::size_t c = 1; c < cells.size(); ++c) {
      row.push_back(cells[c].empty() ? std::nullopt : std::optional<float>(parse_float(cells[c])));
    }
    m.cells.push_back(std::move(row));
  }
  if (m.cells.size() != m.depth) throw std::invalid_argument("alpha matrix: row count does not match header");
  return m;
}

std::string alpha_matrix_json(const AlphaMatrix& m) {
  nlohmann::ordered_json j;
  j["depth"] = m.depth;
  auto rows = nlohmann::ordered_json::array();
  for (const auto& row : m.cells) {
    auto r = nlohmann::ordered_json::array();
    for (const auto& c : row) {
      if (c) {
        r.push_back(static_cast<double>(*c));
      } else {
        r.push_back(nullptr);
      }
    }
    rows.push_back(std::move(r));
  }
  j["rows"] = std::move(rows);
  return j.dump(2) + "\n";
}

AlphaMatrix parse_alpha_matrix_json(const std::string& text) {
  const auto j = nlohmann::json::parse(text);
  AlphaMatrix m;
  m.depth = j.at("depth").get<std::size_t>();
  for (const auto& r : j.at("rows")) {
    if (r.size() != m.depth + 1) throw std::invalid_argument("alpha matrix: JSON row of wrong length");
    std::vector<std::optional<float>> row;
    for (const auto& c : r) {
      row.push_back(c.is_null() ? std::nullopt : std::optional<float>(static_cast<float>(c.get<double>())));
    }
    m.cells.push_back(std::move(row));
  }
  if (m.cells.size() != m.depth) throw std::invalid_argument("alpha matrix: JSON row count does not match depth");
  return m;
}

void load_alpha_matrix(Model<float>& model, const AlphaMatrix& m) {
  auto& alphas = model.alphas();
  if (m.depth != model.config().depth) throw std::invalid_argument("alpha matrix depth does not match the model");
  for (std::size_t i = 1; i <= m.depth; ++i) {
    for (std::size_t j = 0; j <= m.depth; ++j) {
      const auto& c = m.cells[i - 1][j];
      if (c.has_value() != alphas.active(i, j)) {
        throw std::invalid_argument("alpha matrix cell (" + std::to_string(i) + "," + std::to_string(j) +
                                    ") does not match the model's pattern");
      }
      if (c) alphas.set(i, j, *c);
    }
  }
}

PruneResult prune_by_magnitude(const Model<float>& model, double fraction) {
  if (!(fraction >= 0.0 && fraction <= 1.0)) throw std::invalid_argument("prune fraction must lie in [0, 1]");
  PruneResult r{model.clone(), {}};
  auto& alphas = r.model.alphas();
  struct Cell {
    float magnitude;
    std::size_t i, j;
  };
  std::vector<Cell> cells;
  for (std::size_t i = 1; i <= alphas.depth; ++i) {
    if (!alphas.has_row(i)) continue;
    for (std::size_t j : *alphas.sources[i]) cells.push_back({std::fabs(alphas.value(i, j)), i, j});
  }
  std::sort(cells.begin(), cells.end(), [](const Cell& a, const Cell& b) {
    if (a.magnitude != b.magnitude) return a.magnitude < b.magnitude;
    return a.i != b.i ? a.i < b.i : a.j < b.j;
  });
  // The small slack keeps products such as 0.3 * 10 from flooring to 2.
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(cells.size()) + 1e-9));
  for (std::size_t c = 0; c < n; ++c) {
    alphas.set(cells[c].i, cells[c].j, 0.0f);
    r.zeroed.emplace_back(cells[c].i, cells[c].j);
  }
  std::sort(r.zeroed.begin(), r.zeroed.end());
  return r;
}

std::vector<PruneSweepRow> prune_sweep(const Model<float>& model, const ByteCorpus& corpus,
                                       std::span<const double> fractions, std::size_t seq, std::size_t batch_size,
                                       std::size_t max_windows) {
  std::vector<PruneSweepRow> rows;
  for (double f : fractions) {
    auto pruned = prune_by_magnitude(model, f);
    const auto e = evaluate(pruned.model, corpus, Split::Val, seq, batch_size, max_windows);
    rows.push_back({f, pruned.zeroed.size(), e.loss, e.perplexity});
  }
  return rows;
}

std::string prune_sweep_csv(std::span<const PruneSweepRow> rows) {
  std::string out = "fraction,pruned,loss,perplexity\n";
  for (const auto& r : rows) {
    out += fmt_g9(r.fraction) + "," + std::to_string(r.pruned) + "," + fmt_g17(r.loss) + "," + fmt_g17(r.perplexity) +
           "\n";
  }
  return out;
}

CosineProfile cosine_profile(const Model<float>& model, const TokenBatch& batch) {
  StreamCapture<float> capture;
  auto tape = ag::Tape<float>::inference();
  model.forward(tape, batch, {}, &capture);
  const std::size_t width = model.config().hidden();
  const auto& x0 = capture.y.front();
  const std::size_t vectors = x0.size() / width;
  CosineProfile p;
  for (const auto& y : capture.y) {
    double total = 0.0;
    for (std::size_t v = 0; v < vectors; ++v) {
      double dot = 0.0, na = 0.0, nb = 0.0;
      for (std::size_t c = 0; c < width; ++c) {
        const double a = y[v * width + c];
        const double b = x0[v * width + c];
        dot += a * b;
        na += a * a;
        nb += b * b;
      }
      if (na == 0.0 || nb == 0.0) {
        ++p.zero_norm_count;
        continue;
      }
      total += std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0);
    }
    p.similarity.push_back(total / static_cast<double>(vectors));
  }
  return p;
}

std::string cosine_profile_csv(const CosineProfile& p) {
  std::string out = "depth,cosine\n";
  for (std::size_t i = 0; i < p.similarity.size(); ++i) {
    out += std::to_string(i) + "," + fmt_g17(p.similarity[i]) + "\n";
  }
  return out;
}

std::vector<double> singular_values(std::span<const double> data, std::size_t rows, std::size_t cols) {
  if (data.size() != rows * cols) throw std::invalid_argument("singular_values: data size does not match shape");
  // Orthogonalize the columns of A (or of A^T, whichever has fewer).
  const bool transpose = cols > rows;
  const std::size_t m = transpose ? cols : rows;
  const std::size_t n = transpose ? rows : cols;
  std::vector<std::vector<double>> u(n, std::vector<double>(m));
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) {
      if (transpose) {
        u[r][c] = data[r * cols + c];
      } else {
        u[c][r] = data[r * cols + c];
      }
    }
  }
  constexpr double kTol = 1e-12;
  constexpr int kMaxSweeps = 100;
  bool converged = n < 2;
  for (int sweep = 0; sweep < kMaxSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        double alpha = 0.0, beta = 0.0, gamma = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
          alpha += u[p][k] * u[p][k];
          beta += u[q][k] * u[q][k];
          gamma += u[p][k] * u[q][k];
        }
        if (gamma == 0.0 || std::fabs(gamma) <= kTol * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t k = 0; k < m; ++k) {
          const double up = u[p][k], uq = u[q][k];
          u[p][k] = c * up - s * uq;
          u[q][k] = s * up + c * uq;
        }
      }
    }
  }
  if (!converged) throw std::runtime_error("singular_values: Jacobi iteration did not converge");
  std::vector<double> sigma(n);
  for (std::size_t p = 0; p < n; ++p) {
    double norm = 0.0;
    for (double v : u[p]) norm += v * v;
    sigma[p] = std::sqrt(norm);
  }
  std::sort(sigma.begin(), sigma.end(), std::greater<>());
  return sigma;
}

std::vector<double> singular_values(const Tensor<float>& matrix) {
  if (matrix.rank() != 2) {
    throw ag::ShapeError("singular_values: expected a 2-D matrix, got " + ag::shape_str(matrix.shape()));
  }
  std::vector<double> data(matrix.data().begin(), matrix.data().end());
  return singular_values(data, matrix.extent(0), matrix.extent(1));
}

std::vector<RankSpectrum> rank_spectra(const Model<float>& model) {
  std::vector<std::pair<std::string, std::vector<Tensor<float>>>> groups = {
      {"qkv", {}}, {"proj", {}}, {"up", {}}, {"down", {}}, {"embedding", {model.token_embedding()}}};
  for (const auto& b : model.blocks()) {
    groups[0].second.push_back(b.w_qkv);
    groups[1].second.push_back(b.w_proj);
    groups[2].second.push_back(b.w_up);
    groups[3].second.push_back(b.w_down);
  }
  if (!model.config().tie_embeddings) groups.push_back({"head", {model.output_head()}});

  std::vector<RankSpectrum> out;
  for (const auto& [role, mats] : groups) {
    RankSpectrum s;
    s.role = role;
    s.matrices = mats.size();
    for (const auto& a : mats) {
      const auto sigma = singular_values(a);
      if (s.mean_sigma.empty()) s.mean_sigma.assign(sigma.size(), 0.0);
      double fro = 0.0, sum_sq = 0.0;
      for (float v : a.data()) fro += static_cast<double>(v) * v;
      for (std::size_t r = 0; r < sigma.size(); ++r) {
        s.mean_sigma[r] += sigma[r];
        sum_sq += sigma[r] * sigma[r];
      }
      if (fro > 0.0) s.max_frobenius_rel_error = std::max(s.max_frobenius_rel_error, std::fabs(sum_sq - fro) / fro);
    }
    for (double& v : s.mean_sigma) v /= static_cast<double>(mats.size());
    out.push_back(std::move(s));
  }
  return out;
}

std::string rank_spectrum_csv(const RankSpectrum& s) {
  std::string out = "rank,sigma\n";
  for (std::size_t r = 0; r < s.mean_sigma.size(); ++r) {
    out += std::to_string(r + 1) + "," + fmt_g17(s.mean_sigma[r]) + "\n";
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("median of an empty sample");
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

namespace {

double quantile_sorted(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

}  // namespace

double interquartile_range(std::vector<double> v) {
  if (v.empty()) throw std::invalid_argument("interquartile range of an empty sample");
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, 0.75) - quantile_sorted(v, 0.25);
}

BenchReport bench_throughput(const Model<float>& model, const BenchOptions& options) {
  if (options.n_timed < 5) throw std::invalid_argument("bench: n_timed must be >= 5");
  if (options.batch_size < 1) throw std::invalid_argument("bench: batch_size must be >= 1");
  const auto& cfg = model.config();
  TokenBatch tokens;
  tokens.batch = options.batch_size;
  tokens.seq = cfg.seq_len;
  std::mt19937_64 rng(options.seed);
  std::uniform_int_distribution<std::int32_t> pick(0, static_cast<std::int32_t>(cfg.vocab_size) - 1);
  tokens.ids.resize(tokens.batch * tokens.seq);
  for (auto& t : tokens.ids) t = pick(rng);

  std::vector<double> total, dwa, blocks;
  auto tape = ag::Tape<float>::inference();
  for (std::size_t rep = 0; rep < options.n_warmup + options.n_timed; ++rep) {
    ForwardTimings timings;
    ForwardOptions fo;
    fo.path = options.path;
    fo.timings = &timings;
    const auto start = std::chrono::steady_clock::now();
    model.forward(tape, tokens, fo);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (rep < options.n_warmup) continue;
    total.push_back(elapsed);
    dwa.push_back(timings.dwa_seconds);
    blocks.push_back(timings.block_seconds);
  }
  BenchReport r;
  r.model = "d=" + std::to_string(cfg.depth) + " " + cfg.pattern.describe();
  r.batch_size = options.batch_size;
  r.seq_len = cfg.seq_len;
  r.n_timed = options.n_timed;
  r.forward_median = median(total);
  r.forward_iqr = interquartile_range(total);
  r.dwa_median = median(dwa);
  r.dwa_iqr = interquartile_range(dwa);
  r.block_median = median(blocks);
  r.batches_per_second = 1.0 / r.forward_median;
  return r;
}

std::string bench_report_json(const BenchReport& r) {
  nlohmann::ordered_json j;
  j["model"] = r.model;
  j["batch_size"] = r.batch_size;
  j["seq_len"] = r.seq_len;
  j["n_timed"] = r.n_timed;
  j["batches_per_second"] = r.batches_per_second;
  j["forward_time_median"] = r.forward_median;
  j["forward_time_iqr"] = r.forward_iqr;
  j["block_time_median"] = r.block_median;
  j["dwa_time"] = r.dwa_median;
  j["dwa_time_iqr"] = r.dwa_iqr;
  return j.dump(2) + "\n";
}

}  // namespace denseformer
