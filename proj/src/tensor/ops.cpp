#include "denseformer/ops.hpp"

#include <Eigen/Core>
#include <unsupported/Eigen/SpecialFunctions>
#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace denseformer::ag {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
using ArrMap = Eigen::Map<Eigen::Array<T, Eigen::Dynamic, 1>>;
template <typename T>
using ConstArrMap = Eigen::Map<const Eigen::Array<T, Eigen::Dynamic, 1>>;

template <typename T>
using NodePtr = std::shared_ptr<Node<T>>;

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <typename T>
Tensor<T> finish(Tensor<T> out, const char* op) {
  check_finite<T>(out.data(), op);
  return out;
}

// Rows of the last axis: (rows, width).
template <typename T>
std::pair<std::size_t, std::size_t> rows_by_last(const Tensor<T>& x) {
  const std::size_t width = x.shape().back();
  return {width == 0 ? 0 : x.size() / width, width};
}

}  // namespace

template <typename T>
void check_finite(std::span<const T> values, const char* what) {
  for (std::size_t i = 0; i < values.size(); ++i) {
    if (!std::isfinite(values[i])) {
      throw NonFiniteError(std::string("non-finite value in output of ") + what + " at flat index " +
                           std::to_string(i));
    }
  }
}

template <typename T>
Tensor<T> matmul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, Transpose tb) {
  if (a.rank() < 2 || b.rank() != 2) {
    throw ShapeError("matmul: expected rank-2/3 left and rank-2 right operand, got " + shape_str(a.shape()) + " x " +
                     shape_str(b.shape()));
  }
  const bool bt = tb == Transpose::Yes;
  const std::size_t k = a.shape().back();
  const std::size_t m = a.size() / k;
  const std::size_t bk = bt ? b.extent(1) : b.extent(0);
  const std::size_t n = bt ? b.extent(0) : b.extent(1);
  if (bk != k) {
    throw ShapeError("matmul: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()) +
                     (bt ? "^T" : ""));
  }
  Shape out_shape = a.shape();
  out_shape.back() = n;
  auto out = Tensor<T>::zeros(out_shape);
  {
    ConstMatMap<T> A(a.data().data(), m, k);
    ConstMatMap<T> B(b.data().data(), b.extent(0), b.extent(1));
    MatMap<T> C(out.data().data(), m, n);
    if (bt) {
      C.noalias() = A * B.transpose();
    } else {
      C.noalias() = A * B;
    }
  }
  if (tape.wants({&a, &b})) {
    NodePtr<T> an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
    tape.record(out, {a.id(), b.id()}, [an, bn, on, m, k, n, bt] {
      ConstMatMap<T> dC(on->grad.data(), m, n);
      ConstMatMap<T> B(bn->values(), bn->shape[0], bn->shape[1]);
      ConstMatMap<T> A(an->values(), m, k);
      if (an->requires_grad) {
        MatMap<T> dA(an->grad_buffer().data(), m, k);
        if (bt) {
          dA.noalias() += dC * B;
        } else {
          dA.noalias() += dC * B.transpose();
        }
      }
      if (bn->requires_grad) {
        MatMap<T> dB(bn->grad_buffer().data(), bn->shape[0], bn->shape[1]);
        if (bt) {
          dB.noalias() += dC.transpose() * A;
        } else {
          dB.noalias() += A.transpose() * dC;
        }
      }
    });
  }
  return finish(std::move(out), "matmul");
}

template <typename T>
Tensor<T> bmm(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b, Transpose tb) {
  if (a.rank() != 3 || b.rank() != 3 || a.extent(0) != b.extent(0)) {
    throw ShapeError("bmm: expected [N,m,k] x [N,k,n], got " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const bool bt = tb == Transpose::Yes;
  const std::size_t batch = a.extent(0), m = a.extent(1), k = a.extent(2);
  const std::size_t br = b.extent(1), bc = b.extent(2);
  const std::size_t n = bt ? br : bc;
  if ((bt ? bc : br) != k) {
    throw ShapeError("bmm: inner extents differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  auto out = Tensor<T>::zeros({batch, m, n});
  for (std::size_t s = 0; s < batch; ++s) {
    ConstMatMap<T> A(a.data().data() + s * m * k, m, k);
    ConstMatMap<T> B(b.data().data() + s * br * bc, br, bc);
    MatMap<T> C(out.data().data() + s * m * n, m, n);
    if (bt) {
      C.noalias() = A * B.transpose();
    } else {
      C.noalias() = A * B;
    }
  }
  if (tape.wants({&a, &b})) {
    NodePtr<T> an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
    tape.record(out, {a.id(), b.id()}, [an, bn, on, batch, m, k, n, br, bc, bt] {
      T* da = an->requires_grad ? an->grad_buffer().data() : nullptr;
      T* db = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
      for (std::size_t s = 0; s < batch; ++s) {
        ConstMatMap<T> dC(on->grad.data() + s * m * n, m, n);
        ConstMatMap<T> A(an->values() + s * m * k, m, k);
        ConstMatMap<T> B(bn->values() + s * br * bc, br, bc);
        if (da) {
          MatMap<T> dA(da + s * m * k, m, k);
          if (bt) {
            dA.noalias() += dC * B;
          } else {
            dA.noalias() += dC * B.transpose();
          }
        }
        if (db) {
          MatMap<T> dB(db + s * br * bc, br, bc);
          if (bt) {
            dB.noalias() += dC.transpose() * A;
          } else {
            dB.noalias() += A.transpose() * dC;
          }
        }
      }
    });
  }
  return finish(std::move(out), "bmm");
}

template <typename T>
Tensor<T> add(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  auto out = Tensor<T>::zeros(a.shape());
  const T* pa = a.data().data();
  const T* pb = b.data().data();
  T* po = out.data().data();
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i];
  if (tape.wants({&a, &b})) {
    NodePtr<T> an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
    tape.record(out, {a.id(), b.id()}, [an, bn, on, n] {
      const T* g = on->grad.data();
      for (Node<T>* in : {an.get(), bn.get()}) {
        if (!in->requires_grad) continue;
        T* d = in->grad_buffer().data();
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i];
      }
    });
  }
  return finish(std::move(out), "add");
}

template <typename T>
Tensor<T> mul(Tape<T>& tape, const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  auto out = Tensor<T>::zeros(a.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
  if (tape.wants({&a, &b})) {
    NodePtr<T> an = a.node_ptr(), bn = b.node_ptr(), on = out.node_ptr();
    tape.record(out, {a.id(), b.id()}, [an, bn, on, n] {
      const T* g = on->grad.data();
      if (an->requires_grad) {
        T* d = an->grad_buffer().data();
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * bn->values()[i];
      }
      if (bn->requires_grad) {
        T* d = bn->grad_buffer().data();
        for (std::size_t i = 0; i < n; ++i) d[i] += g[i] * an->values()[i];
      }
    });
  }
  return finish(std::move(out), "mul");
}

template <typename T>
Tensor<T> scale(Tape<T>& tape, const Tensor<T>& x, T factor) {
  auto out = Tensor<T>::zeros(x.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * factor;
  if (tape.wants({&x})) {
    NodePtr<T> xn = x.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id()}, [xn, on, n, factor] {
      T* d = xn->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) d[i] += on->grad[i] * factor;
    });
  }
  return finish(std::move(out), "scale");
}

template <typename T>
Tensor<T> scale_by(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain) {
  if (gain.size() != 1) throw ShapeError("scale_by: gain must hold one value, got " + shape_str(gain.shape()));
  const T g = gain.data()[0];
  auto out = Tensor<T>::zeros(x.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] * g;
  if (tape.wants({&x, &gain})) {
    NodePtr<T> xn = x.node_ptr(), gn = gain.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id(), gain.id()}, [xn, gn, on, n] {
      const T* dy = on->grad.data();
      if (xn->requires_grad) {
        const T gv = gn->values()[0];
        T* d = xn->grad_buffer().data();
        for (std::size_t i = 0; i < n; ++i) d[i] += dy[i] * gv;
      }
      if (gn->requires_grad) {
        double acc = 0.0;
        for (std::size_t i = 0; i < n; ++i) acc += static_cast<double>(dy[i]) * xn->values()[i];
        gn->grad_buffer()[0] += static_cast<T>(acc);
      }
    });
  }
  return finish(std::move(out), "scale_by");
}

template <typename T>
Tensor<T> exp(Tape<T>& tape, const Tensor<T>& x) {
  auto out = Tensor<T>::zeros(x.shape());
  const std::size_t n = out.size();
  for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::exp(x.data()[i]);
  if (tape.wants({&x})) {
    NodePtr<T> xn = x.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id()}, [xn, on, n] {
      T* d = xn->grad_buffer().data();
      for (std::size_t i = 0; i < n; ++i) d[i] += on->grad[i] * on->values()[i];
    });
  }
  return finish(std::move(out), "exp");
}

template <typename T>
Tensor<T> gelu(Tape<T>& tape, const Tensor<T>& x) {
  const T inv_sqrt2 = static_cast<T>(1.0 / std::numbers::sqrt2);
  auto out = Tensor<T>::zeros(x.shape());
  const std::size_t n = out.size();
  ConstArrMap<T> X(x.data().data(), static_cast<Eigen::Index>(n));
  ArrMap<T> Y(out.data().data(), static_cast<Eigen::Index>(n));
  Y = T(0.5) * X * (T(1) + (X * inv_sqrt2).erf());
  if (tape.wants({&x})) {
    NodePtr<T> xn = x.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id()}, [xn, on, n, inv_sqrt2] {
      const T inv_sqrt_2pi = static_cast<T>(0.5 * std::numbers::inv_sqrtpi * std::numbers::sqrt2);
      const auto len = static_cast<Eigen::Index>(n);
      ConstArrMap<T> X(xn->values(), len);
      ConstArrMap<T> dY(on->grad.data(), len);
      ArrMap<T> dX(xn->grad_buffer().data(), len);
      dX += dY * (T(0.5) * (T(1) + (X * inv_sqrt2).erf()) + X * inv_sqrt_2pi * (T(-0.5) * X.square()).exp());
    });
  }
  return finish(std::move(out), "gelu");
}

template <typename T>
Tensor<T> sum(Tape<T>& tape, const Tensor<T>& x) {
  double acc = 0.0;
  for (T v : x.data()) acc += v;
  auto out = Tensor<T>::scalar(static_cast<T>(acc));
  if (tape.wants({&x})) {
    NodePtr<T> xn = x.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id()}, [xn, on] {
      const T g = on->grad[0];
      for (T& d : xn->grad_buffer()) d += g;
    });
  }
  return finish(std::move(out), "sum");
}

template <typename T>
Tensor<T> layer_norm(Tape<T>& tape, const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, double eps) {
  const auto [rows, width] = rows_by_last(x);
  if (width == 0) throw ShapeError("layer_norm: zero hidden extent");
  if (gain.size() != width || bias.size() != width) {
    throw ShapeError("layer_norm: affine size does not match hidden extent " + std::to_string(width));
  }
  auto out = Tensor<T>::zeros(x.shape());
  std::vector<T> mean(rows), rstd(rows);
  const T* px = x.data().data();
  const T* pg = gain.data().data();
  const T* pb = bias.data().data();
  T* po = out.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = px + r * width;
    double s = 0.0;
    for (std::size_t j = 0; j < width; ++j) s += row[j];
    const double mu = s / static_cast<double>(width);
    double v = 0.0;
    for (std::size_t j = 0; j < width; ++j) {
      const double c = row[j] - mu;
      v += c * c;
    }
    v /= static_cast<double>(width);
    mean[r] = static_cast<T>(mu);
    rstd[r] = static_cast<T>(1.0 / std::sqrt(v + eps));
    T* orow = po + r * width;
    for (std::size_t j = 0; j < width; ++j) orow[j] = (row[j] - mean[r]) * rstd[r] * pg[j] + pb[j];
  }
  if (tape.wants({&x, &gain, &bias})) {
    NodePtr<T> xn = x.node_ptr(), gn = gain.node_ptr(), bn = bias.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id(), gain.id(), bias.id()},
                [xn, gn, bn, on, rows, width, mean = std::move(mean), rstd = std::move(rstd)] {
                  const T* px = xn->values();
                  const T* pg = gn->values();
                  const T* dy = on->grad.data();
                  T* dx = xn->requires_grad ? xn->grad_buffer().data() : nullptr;
                  T* dg = gn->requires_grad ? gn->grad_buffer().data() : nullptr;
                  T* db = bn->requires_grad ? bn->grad_buffer().data() : nullptr;
                  std::vector<T> xhat(width), dxhat(width);
                  for (std::size_t r = 0; r < rows; ++r) {
                    const T* row = px + r * width;
                    const T* g = dy + r * width;
                    double m1 = 0.0, m2 = 0.0;
                    for (std::size_t j = 0; j < width; ++j) {
                      xhat[j] = (row[j] - mean[r]) * rstd[r];
                      dxhat[j] = g[j] * pg[j];
                      m1 += dxhat[j];
                      m2 += static_cast<double>(dxhat[j]) * xhat[j];
                    }
                    m1 /= static_cast<double>(width);
                    m2 /= static_cast<double>(width);
                    if (dx) {
                      T* d = dx + r * width;
                      for (std::size_t j = 0; j < width; ++j) {
                        d[j] += rstd[r] * (dxhat[j] - static_cast<T>(m1) - xhat[j] * static_cast<T>(m2));
                      }
                    }
                    if (dg) {
                      for (std::size_t j = 0; j < width; ++j) dg[j] += g[j] * xhat[j];
                    }
                    if (db) {
                      for (std::size_t j = 0; j < width; ++j) db[j] += g[j];
                    }
                  }
                });
  }
  return finish(std::move(out), "layer_norm");
}

template <typename T>
Tensor<T> rope_rotate(Tape<T>& tape, const Tensor<T>& x, std::span<const std::size_t> positions, double base) {
  if (x.rank() < 2) throw ShapeError("rope_rotate: expected [seq,hd] or [N,seq,hd], got " + shape_str(x.shape()));
  const std::size_t hd = x.shape().back();
  const std::size_t seq = x.shape()[x.rank() - 2];
  if (hd % 2 != 0) throw ShapeError("rope_rotate: head_dim must be even, got " + std::to_string(hd));
  if (positions.size() != seq) throw ShapeError("rope_rotate: need one position per sequence step");
  const std::size_t half = hd / 2;
  std::vector<T> cos_t(seq * half), sin_t(seq * half);
  for (std::size_t t = 0; t < seq; ++t) {
    for (std::size_t i = 0; i < half; ++i) {
      const double angle =
          static_cast<double>(positions[t]) * std::pow(base, -2.0 * static_cast<double>(i) / static_cast<double>(hd));
      cos_t[t * half + i] = static_cast<T>(std::cos(angle));
      sin_t[t * half + i] = static_cast<T>(std::sin(angle));
    }
  }
  const std::size_t slices = x.size() / (seq * hd);
  auto out = Tensor<T>::zeros(x.shape());
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::size_t s = 0; s < slices; ++s) {
    for (std::size_t t = 0; t < seq; ++t) {
      const std::size_t base_idx = (s * seq + t) * hd;
      for (std::size_t i = 0; i < half; ++i) {
        const T c = cos_t[t * half + i], sn = sin_t[t * half + i];
        const T x0 = px[base_idx + 2 * i], x1 = px[base_idx + 2 * i + 1];
        po[base_idx + 2 * i] = x0 * c - x1 * sn;
        po[base_idx + 2 * i + 1] = x0 * sn + x1 * c;
      }
    }
  }
  if (tape.wants({&x})) {
    NodePtr<T> xn = x.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id()}, [xn, on, slices, seq, hd, half, cos_t = std::move(cos_t), sin_t = std::move(sin_t)] {
      const T* dy = on->grad.data();
      T* dx = xn->grad_buffer().data();
      for (std::size_t s = 0; s < slices; ++s) {
        for (std::size_t t = 0; t < seq; ++t) {
          const std::size_t base_idx = (s * seq + t) * hd;
          for (std::size_t i = 0; i < half; ++i) {
            const T c = cos_t[t * half + i], sn = sin_t[t * half + i];
            const T g0 = dy[base_idx + 2 * i], g1 = dy[base_idx + 2 * i + 1];
            dx[base_idx + 2 * i] += g0 * c + g1 * sn;
            dx[base_idx + 2 * i + 1] += g1 * c - g0 * sn;
          }
        }
      }
    });
  }
  return finish(std::move(out), "rope_rotate");
}

template <typename T>
Tensor<T> softmax_causal(Tape<T>& tape, const Tensor<T>& scores, T scale) {
  if (scores.rank() < 2 || scores.shape().back() != scores.shape()[scores.rank() - 2]) {
    throw ShapeError("softmax_causal: expected square score matrices, got " + shape_str(scores.shape()));
  }
  const std::size_t seq = scores.shape().back();
  const std::size_t mats = scores.size() / (seq * seq);
  auto out = Tensor<T>::zeros(scores.shape());
  const T* ps = scores.data().data();
  T* po = out.data().data();
  for (std::size_t m = 0; m < mats; ++m) {
    for (std::size_t r = 0; r < seq; ++r) {
      const auto len = static_cast<Eigen::Index>(r + 1);
      ConstArrMap<T> row(ps + (m * seq + r) * seq, len);
      ArrMap<T> orow(po + (m * seq + r) * seq, len);
      const T mx = row.maxCoeff() * scale;
      orow = (row * scale - mx).exp();
      orow *= T(1) / orow.sum();
    }
  }
  if (tape.wants({&scores})) {
    NodePtr<T> sn = scores.node_ptr(), on = out.node_ptr();
    tape.record(out, {scores.id()}, [sn, on, mats, seq, scale] {
      const T* p = on->values();
      const T* dp = on->grad.data();
      T* ds = sn->grad_buffer().data();
      for (std::size_t m = 0; m < mats; ++m) {
        for (std::size_t r = 0; r < seq; ++r) {
          const std::size_t off = (m * seq + r) * seq;
          const auto len = static_cast<Eigen::Index>(r + 1);
          ConstArrMap<T> P(p + off, len);
          ConstArrMap<T> dP(dp + off, len);
          ArrMap<T> dS(ds + off, len);
          const T dot = (dP * P).sum();
          dS += scale * P * (dP - dot);
        }
      }
    });
  }
  return finish(std::move(out), "softmax_causal");
}

template <typename T>
Tensor<T> cross_entropy(Tape<T>& tape, const Tensor<T>& logits, std::span<const std::int32_t> targets) {
  const auto [rows, vocab] = rows_by_last(logits);
  if (rows == 0 || vocab == 0) throw ShapeError("cross_entropy: empty logits");
  if (targets.size() != rows) {
    throw ShapeError("cross_entropy: " + std::to_string(targets.size()) + " targets for " + std::to_string(rows) +
                     " rows");
  }
  for (std::int32_t t : targets) {
    if (t < 0 || static_cast<std::size_t>(t) >= vocab) {
      throw std::out_of_range("cross_entropy: target " + std::to_string(t) + " outside vocab of " +
                              std::to_string(vocab));
    }
  }
  std::vector<T> lse(rows);
  double total = 0.0;
  const T* pl = logits.data().data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* row = pl + r * vocab;
    const T mx = *std::max_element(row, row + vocab);
    double s = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) s += std::exp(static_cast<double>(row[j] - mx));
    const double l = static_cast<double>(mx) + std::log(s);
    lse[r] = static_cast<T>(l);
    total += l - static_cast<double>(row[targets[r]]);
  }
  auto out = Tensor<T>::scalar(static_cast<T>(total / static_cast<double>(rows)));
  if (tape.wants({&logits})) {
    NodePtr<T> ln = logits.node_ptr(), on = out.node_ptr();
    std::vector<std::int32_t> tgt(targets.begin(), targets.end());
    tape.record(out, {logits.id()}, [ln, on, rows, vocab, lse = std::move(lse), tgt = std::move(tgt)] {
      const T g = on->grad[0] / static_cast<T>(rows);
      const T* pl = ln->values();
      T* d = ln->grad_buffer().data();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* row = pl + r * vocab;
        T* drow = d + r * vocab;
        for (std::size_t j = 0; j < vocab; ++j) drow[j] += g * std::exp(row[j] - lse[r]);
        drow[tgt[r]] -= g;
      }
    });
  }
  return finish(std::move(out), "cross_entropy");
}

template <typename T>
Tensor<T> embedding(Tape<T>& tape, const Tensor<T>& table, std::span<const std::int32_t> ids, std::size_t batch,
                    std::size_t seq) {
  if (table.rank() != 2) throw ShapeError("embedding: table must be [vocab, hidden]");
  if (ids.size() != batch * seq) throw ShapeError("embedding: id count does not match batch x seq");
  const std::size_t vocab = table.extent(0), hidden = table.extent(1);
  for (std::int32_t id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= vocab) {
      throw std::out_of_range("embedding: token " + std::to_string(id) + " outside vocab of " + std::to_string(vocab));
    }
  }
  auto out = Tensor<T>::zeros({batch, seq, hidden});
  for (std::size_t i = 0; i < ids.size(); ++i) {
    std::copy_n(table.data().data() + static_cast<std::size_t>(ids[i]) * hidden, hidden,
                out.data().data() + i * hidden);
  }
  if (tape.wants({&table})) {
    NodePtr<T> tn = table.node_ptr(), on = out.node_ptr();
    std::vector<std::int32_t> idv(ids.begin(), ids.end());
    tape.record(out, {table.id()}, [tn, on, hidden, idv = std::move(idv)] {
      T* d = tn->grad_buffer().data();
      for (std::size_t i = 0; i < idv.size(); ++i) {
        T* dst = d + static_cast<std::size_t>(idv[i]) * hidden;
        const T* g = on->grad.data() + i * hidden;
        for (std::size_t j = 0; j < hidden; ++j) dst[j] += g[j];
      }
    });
  }
  return finish(std::move(out), "embedding");
}

template <typename T>
Tensor<T> split_heads(Tape<T>& tape, const Tensor<T>& x, std::size_t n_heads, std::size_t part, std::size_t parts) {
  if (x.rank() != 3 || n_heads == 0 || parts == 0 || part >= parts || x.extent(2) % (parts * n_heads) != 0) {
    throw ShapeError("split_heads: cannot split " + shape_str(x.shape()) + " into " + std::to_string(parts) + "x" +
                     std::to_string(n_heads) + " heads");
  }
  const std::size_t batch = x.extent(0), seq = x.extent(1), width = x.extent(2);
  const std::size_t hd = width / (parts * n_heads);
  const std::size_t offset = part * n_heads * hd;
  auto out = Tensor<T>::zeros({batch * n_heads, seq, hd});
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t t = 0; t < seq; ++t) {
        std::copy_n(px + (b * seq + t) * width + offset + h * hd, hd, po + ((b * n_heads + h) * seq + t) * hd);
      }
    }
  }
  if (tape.wants({&x})) {
    NodePtr<T> xn = x.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id()}, [xn, on, batch, seq, width, n_heads, hd, offset] {
      T* dx = xn->grad_buffer().data();
      const T* g = on->grad.data();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < n_heads; ++h) {
          for (std::size_t t = 0; t < seq; ++t) {
            T* dst = dx + (b * seq + t) * width + offset + h * hd;
            const T* src = g + ((b * n_heads + h) * seq + t) * hd;
            for (std::size_t j = 0; j < hd; ++j) dst[j] += src[j];
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> merge_heads(Tape<T>& tape, const Tensor<T>& x, std::size_t n_heads) {
  if (x.rank() != 3 || n_heads == 0 || x.extent(0) % n_heads != 0) {
    throw ShapeError("merge_heads: cannot merge " + shape_str(x.shape()) + " with " + std::to_string(n_heads) +
                     " heads");
  }
  const std::size_t batch = x.extent(0) / n_heads, seq = x.extent(1), hd = x.extent(2);
  const std::size_t width = n_heads * hd;
  auto out = Tensor<T>::zeros({batch, seq, width});
  const T* px = x.data().data();
  T* po = out.data().data();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t h = 0; h < n_heads; ++h) {
      for (std::size_t t = 0; t < seq; ++t) {
        std::copy_n(px + ((b * n_heads + h) * seq + t) * hd, hd, po + (b * seq + t) * width + h * hd);
      }
    }
  }
  if (tape.wants({&x})) {
    NodePtr<T> xn = x.node_ptr(), on = out.node_ptr();
    tape.record(out, {x.id()}, [xn, on, batch, seq, width, n_heads, hd] {
      T* dx = xn->grad_buffer().data();
      const T* g = on->grad.data();
      for (std::size_t b = 0; b < batch; ++b) {
        for (std::size_t h = 0; h < n_heads; ++h) {
          for (std::size_t t = 0; t < seq; ++t) {
            T* dst = dx + ((b * n_heads + h) * seq + t) * hd;
            const T* src = g + (b * seq + t) * width + h * hd;
            for (std::size_t j = 0; j < hd; ++j) dst[j] += src[j];
          }
        }
      }
    });
  }
  return out;
}

namespace {

// out = w[0]*src[0]; out += w[m]*src[m] for m = 1.. (ascending).
template <typename T>
void accumulate_weighted(T* out, std::size_t n, std::span<const T* const> srcs, const T* w) {
  const T* s0 = srcs[0];
  const T w0 = w[0];
  for (std::size_t e = 0; e < n; ++e) out[e] = s0[e] * w0;
  for (std::size_t m = 1; m < srcs.size(); ++m) {
    const T* s = srcs[m];
    const T wm = w[m];
    for (std::size_t e = 0; e < n; ++e) out[e] += wm * s[e];
  }
}

template <typename T>
void weighted_backward(const T* dy, std::size_t n, std::span<const T* const> srcs, std::span<T* const> dsrcs,
                       const T* w, T* dw) {
  for (std::size_t m = 0; m < srcs.size(); ++m) {
    if (T* d = dsrcs[m]) {
      const T wm = w[m];
      for (std::size_t e = 0; e < n; ++e) d[e] += wm * dy[e];
    }
    if (dw) {
      double acc = 0.0;
      const T* s = srcs[m];
      for (std::size_t e = 0; e < n; ++e) acc += static_cast<double>(s[e]) * dy[e];
      dw[m] += static_cast<T>(acc);
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> weighted_sum(Tape<T>& tape, std::span<const Tensor<T>> xs, const Tensor<T>& w) {
  if (xs.empty()) throw ShapeError("weighted_sum: empty input list");
  if (w.size() != xs.size()) {
    throw ShapeError("weighted_sum: " + std::to_string(w.size()) + " weights for " + std::to_string(xs.size()) +
                     " inputs");
  }
  for (const auto& x : xs) require_same_shape(x, xs[0], "weighted_sum");
  const std::size_t n = xs[0].size();
  auto out = Tensor<T>::zeros(xs[0].shape());
  std::vector<const T*> srcs;
  srcs.reserve(xs.size());
  for (const auto& x : xs) srcs.push_back(x.data().data());
  accumulate_weighted<T>(out.data().data(), n, srcs, w.data().data());

  const bool record = tape.wants(xs) || tape.wants({&w});
  if (record) {
    std::vector<NodePtr<T>> in_nodes;
    std::vector<std::uint64_t> ids;
    for (const auto& x : xs) {
      in_nodes.push_back(x.node_ptr());
      ids.push_back(x.id());
    }
    ids.push_back(w.id());
    NodePtr<T> wn = w.node_ptr(), on = out.node_ptr();
    tape.record(out, std::move(ids), [in_nodes = std::move(in_nodes), wn, on, n] {
      std::vector<const T*> srcs;
      std::vector<T*> dsrcs;
      for (const auto& in : in_nodes) {
        srcs.push_back(in->values());
        dsrcs.push_back(in->requires_grad ? in->grad_buffer().data() : nullptr);
      }
      T* dw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
      weighted_backward<T>(on->grad.data(), n, srcs, dsrcs, wn->values(), dw);
    });
  }
  return finish(std::move(out), "weighted_sum");
}

template <typename T>
Tensor<T> weighted_sum_slots(Tape<T>& tape, const Tensor<T>& stacked, const Tensor<T>& w,
                             std::span<const std::size_t> slots, const Shape& out_shape) {
  if (slots.empty()) throw ShapeError("weighted_sum_slots: empty slot list");
  if (w.size() != slots.size()) throw ShapeError("weighted_sum_slots: weight count differs from slot count");
  const std::size_t n_slots = stacked.extent(0);
  const std::size_t n = stacked.size() / n_slots;
  if (numel_of(out_shape) != n) throw ShapeError("weighted_sum_slots: output shape does not match slot size");
  std::vector<const T*> srcs;
  for (std::size_t s : slots) {
    if (s >= n_slots) {
      throw std::out_of_range("weighted_sum_slots: slot " + std::to_string(s) + " beyond " + std::to_string(n_slots));
    }
    srcs.push_back(stacked.data().data() + s * n);
  }
  auto out = Tensor<T>::zeros(out_shape);
  accumulate_weighted<T>(out.data().data(), n, srcs, w.data().data());
  if (tape.wants({&stacked, &w})) {
    NodePtr<T> sn = stacked.node_ptr(), wn = w.node_ptr(), on = out.node_ptr();
    std::vector<std::size_t> sl(slots.begin(), slots.end());
    tape.record(out, {stacked.id(), w.id()}, [sn, wn, on, n, sl = std::move(sl)] {
      std::vector<const T*> srcs;
      std::vector<T*> dsrcs;
      T* dbase = sn->requires_grad ? sn->grad_buffer().data() : nullptr;
      for (std::size_t s : sl) {
        srcs.push_back(sn->values() + s * n);
        dsrcs.push_back(dbase ? dbase + s * n : nullptr);
      }
      T* dw = wn->requires_grad ? wn->grad_buffer().data() : nullptr;
      weighted_backward<T>(on->grad.data(), n, srcs, dsrcs, wn->values(), dw);
    });
  }
  return finish(std::move(out), "weighted_sum_slots");
}

#define DENSEFORMER_INSTANTIATE_OPS(T)                                                                             \
  template void check_finite<T>(std::span<const T>, const char*);                                                  \
  template Tensor<T> matmul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, Transpose);                           \
  template Tensor<T> bmm<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, Transpose);                              \
  template Tensor<T> add<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> mul<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                         \
  template Tensor<T> scale<T>(Tape<T>&, const Tensor<T>&, T);                                                      \
  template Tensor<T> scale_by<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&);                                    \
  template Tensor<T> exp<T>(Tape<T>&, const Tensor<T>&);                                                           \
  template Tensor<T> gelu<T>(Tape<T>&, const Tensor<T>&);                                                          \
  template Tensor<T> sum<T>(Tape<T>&, const Tensor<T>&);                                                           \
  template Tensor<T> layer_norm<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, double);        \
  template Tensor<T> rope_rotate<T>(Tape<T>&, const Tensor<T>&, std::span<const std::size_t>, double);             \
  template Tensor<T> softmax_causal<T>(Tape<T>&, const Tensor<T>&, T);                                             \
  template Tensor<T> cross_entropy<T>(Tape<T>&, const Tensor<T>&, std::span<const std::int32_t>);                  \
  template Tensor<T> embedding<T>(Tape<T>&, const Tensor<T>&, std::span<const std::int32_t>, std::size_t,          \
                                  std::size_t);                                                                    \
  template Tensor<T> split_heads<T>(Tape<T>&, const Tensor<T>&, std::size_t, std::size_t, std::size_t);            \
  template Tensor<T> merge_heads<T>(Tape<T>&, const Tensor<T>&, std::size_t);                                      \
  template Tensor<T> weighted_sum<T>(Tape<T>&, std::span<const Tensor<T>>, const Tensor<T>&);                      \
  template Tensor<T> weighted_sum_slots<T>(Tape<T>&, const Tensor<T>&, const Tensor<T>&,                           \
                                           std::span<const std::size_t>, const Shape&);

DENSEFORMER_INSTANTIATE_OPS(float)
DENSEFORMER_INSTANTIATE_OPS(double)

#undef DENSEFORMER_INSTANTIATE_OPS

}  // namespace denseformer::ag
