#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "nef/errors.hpp"
#include "nef/rng.hpp"
#include "nef/tape.hpp"
#include "nef/tensor.hpp"

namespace nef {

// The parametric eigenfunction: input projection, a stack of pre-norm
// transformer blocks with linear self-attention, and a linear head whose
// columns are kept orthonormal from the outside (orthogonalize_head after
// every optimizer step). Everything is bias-free; the normalization layers
// are scale-only RMS norms. Instantiate with T = float for training runs and
// T = double for gradient checks.
template <typename T>
struct EigenModel {
  struct Block {
    Tensor<T> norm1;  // (1, d)
    Tensor<T> wq, wk, wv, wo;  // (d, d)
    Tensor<T> norm2;  // (1, d)
    Tensor<T> w1;  // (d, 4d)
    Tensor<T> w2;  // (4d, d)
  };

  std::int64_t n_blocks = 0;
  std::int64_t d = 0;  // block width
  std::int64_t k = 0;  // output dimension
  std::int64_t c = 0;  // input feature channels
  Tensor<T> w_in;      // (c, d)
  std::vector<Block> blocks;
  Tensor<T> w_head;    // (d, K), columns orthonormal

  // Parameter list in the fixed serialization order: w_in; per block norm1,
  // wq, wk, wv, wo, norm2, w1, w2; w_head.
  std::vector<Tensor<T>*> parameters() {
    std::vector<Tensor<T>*> out;
    out.push_back(&w_in);
    for (Block& b : blocks)
      for (Tensor<T>* p : {&b.norm1, &b.wq, &b.wk, &b.wv, &b.wo, &b.norm2, &b.w1, &b.w2})
        out.push_back(p);
    out.push_back(&w_head);
    return out;
  }
  std::vector<const Tensor<T>*> parameters() const {
    auto list = const_cast<EigenModel*>(this)->parameters();
    return {list.begin(), list.end()};
  }
};

// Cosine decay from tau_start to tau_end over total_steps.
struct TemperatureSchedule {
  double tau_start = 1.0;
  double tau_end = 0.3;
  std::int64_t total_steps = 1;

  double at(std::int64_t t) const {
    if (t < 0 || t > total_steps)
      throw ConfigError("temperature: step " + std::to_string(t) + " outside [0, " +
                        std::to_string(total_steps) + "]");
    double phase = static_cast<double>(t) / static_cast<double>(total_steps);
    return tau_end + (tau_start - tau_end) * (1.0 + std::cos(M_PI * phase)) / 2.0;
  }
};

namespace detail {
constexpr double kNormEps = 1e-6;

template <typename T>
void fill_uniform(Tensor<T>& w, std::int64_t fan_in, CounterRng& rng) {
  double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
  for (auto& x : w.data) x = static_cast<T>(rng.uniform(-bound, bound));
}
}  // namespace detail

// Replaces w_head by the orthonormal factor of its QR decomposition
// (modified Gram-Schmidt, run twice for stability). The R diagonal is a
// column norm, hence nonnegative, so an already-orthonormal head is a fixed
// point and no sign flips occur. A column that projects to (numerically)
// nothing means the head lost rank.
template <typename T>
void orthogonalize_head(EigenModel<T>& m) {
  Tensor<T>& w = m.w_head;
  for (int pass = 0; pass < 2; ++pass) {
    for (std::int64_t j = 0; j < w.cols; ++j) {
      for (std::int64_t i = 0; i < j; ++i) {
        double dot = 0.0;
        for (std::int64_t r = 0; r < w.rows; ++r)
          dot += static_cast<double>(w.at(r, i)) * static_cast<double>(w.at(r, j));
        for (std::int64_t r = 0; r < w.rows; ++r)
          w.at(r, j) -= static_cast<T>(dot) * w.at(r, i);
      }
      double norm2 = 0.0;
      for (std::int64_t r = 0; r < w.rows; ++r)
        norm2 += static_cast<double>(w.at(r, j)) * static_cast<double>(w.at(r, j));
      if (norm2 < 1e-24)
        throw NumericError("orthogonalize_head: head is rank-deficient at column " +
                           std::to_string(j));
      T inv = static_cast<T>(1.0 / std::sqrt(norm2));
      for (std::int64_t r = 0; r < w.rows; ++r) w.at(r, j) *= inv;
    }
  }
}

// Fresh model with 1/sqrt(fan_in) uniform weights, unit norm scales, and an
// orthonormal head. Draw order is the parameters() order, so construction is
// reproducible from the seed alone.
template <typename T>
EigenModel<T> init_model(std::int64_t n_blocks, std::int64_t d, std::int64_t k,
                         std::int64_t c, CounterRng& rng) {
  if (n_blocks < 0) throw ConfigError("model: n_blocks must be non-negative");
  if (d < 1 || k < 1 || c < 1) throw ConfigError("model: d, K, c must be positive");
  if (d < k)
    throw ConfigError("model: width " + std::to_string(d) + " cannot hold " +
                      std::to_string(k) + " orthonormal head columns");
  EigenModel<T> m;
  m.n_blocks = n_blocks;
  m.d = d;
  m.k = k;
  m.c = c;
  m.w_in = Tensor<T>(c, d);
  detail::fill_uniform(m.w_in, c, rng);
  m.blocks.resize(static_cast<std::size_t>(n_blocks));
  for (auto& b : m.blocks) {
    b.norm1 = Tensor<T>(1, d);
    for (auto& x : b.norm1.data) x = T(1);
    for (Tensor<T>* w : {&b.wq, &b.wk, &b.wv, &b.wo}) {
      *w = Tensor<T>(d, d);
      detail::fill_uniform(*w, d, rng);
    }
    b.norm2 = Tensor<T>(1, d);
    for (auto& x : b.norm2.data) x = T(1);
    b.w1 = Tensor<T>(d, 4 * d);
    detail::fill_uniform(b.w1, d, rng);
    b.w2 = Tensor<T>(4 * d, d);
    detail::fill_uniform(b.w2, 4 * d, rng);
  }
  m.w_head = Tensor<T>(d, k);
  detail::fill_uniform(m.w_head, d, rng);
  orthogonalize_head(m);
  return m;
}

template <typename To, typename From>
EigenModel<To> model_cast(const EigenModel<From>& src) {
  EigenModel<To> dst;
  dst.n_blocks = src.n_blocks;
  dst.d = src.d;
  dst.k = src.k;
  dst.c = src.c;
  auto copy = [](const Tensor<From>& f) {
    Tensor<To> t(f.rows, f.cols);
    for (std::size_t i = 0; i < f.data.size(); ++i) t.data[i] = static_cast<To>(f.data[i]);
    return t;
  };
  dst.w_in = copy(src.w_in);
  dst.blocks.resize(src.blocks.size());
  for (std::size_t i = 0; i < src.blocks.size(); ++i) {
    dst.blocks[i].norm1 = copy(src.blocks[i].norm1);
    dst.blocks[i].wq = copy(src.blocks[i].wq);
    dst.blocks[i].wk = copy(src.blocks[i].wk);
    dst.blocks[i].wv = copy(src.blocks[i].wv);
    dst.blocks[i].wo = copy(src.blocks[i].wo);
    dst.blocks[i].norm2 = copy(src.blocks[i].norm2);
    dst.blocks[i].w1 = copy(src.blocks[i].w1);
    dst.blocks[i].w2 = copy(src.blocks[i].w2);
  }
  dst.w_head = copy(src.w_head);
  return dst;
}

// Model parameters registered on a tape, in parameters() order.
template <typename T>
struct StagedModel {
  using Id = typename Tape<T>::Id;
  struct Block {
    Id norm1, wq, wk, wv, wo, norm2, w1, w2;
  };
  Id w_in;
  std::vector<Block> blocks;
  Id w_head;
  std::vector<Id> all;
  std::int64_t c = 0;
};

template <typename T>
StagedModel<T> stage_model(Tape<T>& tape, const EigenModel<T>& m, bool trainable) {
  StagedModel<T> s;
  s.c = m.c;
  s.w_in = tape.input(m.w_in, trainable);
  s.all.push_back(s.w_in);
  for (const auto& b : m.blocks) {
    typename StagedModel<T>::Block sb;
    sb.norm1 = tape.input(b.norm1, trainable);
    sb.wq = tape.input(b.wq, trainable);
    sb.wk = tape.input(b.wk, trainable);
    sb.wv = tape.input(b.wv, trainable);
    sb.wo = tape.input(b.wo, trainable);
    sb.norm2 = tape.input(b.norm2, trainable);
    sb.w1 = tape.input(b.w1, trainable);
    sb.w2 = tape.input(b.w2, trainable);
    for (auto id : {sb.norm1, sb.wq, sb.wk, sb.wv, sb.wo, sb.norm2, sb.w1, sb.w2})
      s.all.push_back(id);
    s.blocks.push_back(sb);
  }
  s.w_head = tape.input(m.w_head, trainable);
  s.all.push_back(s.w_head);
  return s;
}

namespace detail {

// x / sqrt(mean_j x_j^2 + eps) per row, then per-column scale
template <typename T>
typename Tape<T>::Id rms_norm(Tape<T>& tape, typename Tape<T>::Id x,
                              typename Tape<T>::Id gamma) {
  auto ms = tape.row_mean(tape.mul(x, x));
  auto inv = tape.rsqrt_shift(ms, static_cast<T>(kNormEps));
  return tape.mul_rows(tape.mul_cols(x, inv), gamma);
}

// tokens (n, d) -> (n, d); one head, phi = elu + 1:
// out_t = (phi(q_t) S) / (phi(q_t) z), S = phi(K)^T V, z = col_sum(phi(K))
template <typename T>
typename Tape<T>::Id linear_attention(Tape<T>& tape, typename Tape<T>::Id x,
                                      const typename StagedModel<T>::Block& b) {
  auto q = tape.elu_plus_one(tape.matmul(x, b.wq));
  auto k = tape.elu_plus_one(tape.matmul(x, b.wk));
  auto v = tape.matmul(x, b.wv);
  auto s = tape.matmul(tape.transpose(k), v);           // (d, d)
  auto z = tape.transpose(tape.col_sum(k));             // (d, 1)
  auto num = tape.matmul(q, s);                         // (n, d)
  auto den = tape.matmul(q, z);                         // (n, 1); phi > 0 keeps it positive
  return tape.matmul(tape.div_cols(num, den), b.wo);
}

}  // namespace detail

// Block stack for one image's tokens (n, c) -> (n, d). Attention never
// crosses image boundaries, so multi-image batches are built per image and
// concatenated by the caller.
template <typename T>
typename Tape<T>::Id build_prehead(Tape<T>& tape, const StagedModel<T>& sm,
                                   typename Tape<T>::Id tokens) {
  const Tensor<T>& v = tape.value(tokens);
  if (v.cols != sm.c)
    throw DimensionError("model: expected " + std::to_string(sm.c) +
                         " feature channels, got " + std::to_string(v.cols));
  auto x = tape.matmul(tokens, sm.w_in);
  for (const auto& b : sm.blocks) {
    x = tape.add(x, detail::linear_attention(tape, detail::rms_norm(tape, x, b.norm1), b));
    auto h = detail::rms_norm(tape, x, b.norm2);
    x = tape.add(x, tape.matmul(tape.relu(tape.matmul(h, b.w1)), b.w2));
  }
  return x;
}

template <typename T>
typename Tape<T>::Id build_logits(Tape<T>& tape, const StagedModel<T>& sm,
                                  std::span<const typename Tape<T>::Id> image_tokens) {
  if (image_tokens.empty()) throw DimensionError("model: empty image batch");
  std::vector<typename Tape<T>::Id> parts;
  parts.reserve(image_tokens.size());
  for (auto tokens : image_tokens) parts.push_back(build_prehead(tape, sm, tokens));
  auto pre = parts.size() == 1 ? parts[0] : tape.concat_rows(parts);
  return tape.matmul(pre, sm.w_head);
}

// Standard Gumbel noise, one draw per logit entry, row-major.
template <typename T>
Tensor<T> sample_gumbel(std::int64_t rows, std::int64_t cols, CounterRng& rng) {
  Tensor<T> g(rows, cols);
  for (auto& x : g.data) x = static_cast<T>(rng.gumbel());
  return g;
}

// Training head: softmax((logits + g)/tau), optional straight-through hard
// one-hot, then the unit-mean-square batch normalization. The noise tensor
// is passed in, so a frozen draw makes the whole forward a pure function of
// the parameters (what grad_check needs).
template <typename T>
typename Tape<T>::Id build_train_psi(Tape<T>& tape, const StagedModel<T>& sm,
                                     std::span<const typename Tape<T>::Id> image_tokens,
                                     T tau, const Tensor<T>& gumbel_noise, bool hard) {
  if (!(tau > T(0))) throw ConfigError("model: temperature must be positive");
  auto logits = build_logits(tape, sm, image_tokens);
  const Tensor<T>& lv = tape.value(logits);
  if (!gumbel_noise.same_shape(lv))
    throw DimensionError("model: gumbel noise " + gumbel_noise.shape_str() +
                         " does not match logits " + lv.shape_str());
  auto y = tape.softmax_rows(tape.add(logits, tape.constant(gumbel_noise)), tau);
  if (hard) {
    // forward the one-hot argmax, backprop through the soft sample
    const Tensor<T>& yv = tape.value(y);
    Tensor<T> bridge = Tensor<T>::zeros(yv.rows, yv.cols);
    for (std::int64_t i = 0; i < yv.rows; ++i) {
      std::int64_t arg = 0;
      for (std::int64_t j = 1; j < yv.cols; ++j)
        if (yv.at(i, j) > yv.at(i, arg)) arg = j;
      bridge.at(i, arg) = T(1);
      for (std::int64_t j = 0; j < yv.cols; ++j) bridge.at(i, j) -= yv.at(i, j);
    }
    y = tape.add(y, tape.constant(bridge));
  }
  return tape.l2_batchnorm(y);
}

// Value-level wrappers. Inference drops the Gumbel stage and the batch
// normalization and returns raw logits; it runs one image at a time, so
// batching cannot change results.

template <typename T>
Tensor<T> forward_prehead(const EigenModel<T>& m, const Tensor<T>& tokens) {
  Tape<T> tape;
  auto sm = stage_model(tape, m, false);
  return tape.value(build_prehead(tape, sm, tape.constant(tokens)));
}

template <typename T>
Tensor<T> forward_infer(const EigenModel<T>& m, const Tensor<T>& tokens) {
  Tape<T> tape;
  auto sm = stage_model(tape, m, false);
  typename Tape<T>::Id ids[] = {tape.constant(tokens)};
  return tape.value(build_logits(tape, sm, std::span<const typename Tape<T>::Id>(ids)));
}

template <typename T>
Tensor<T> forward_train(const EigenModel<T>& m, std::span<const Tensor<T>> image_tokens,
                        T tau, CounterRng& rng, bool hard = false) {
  Tape<T> tape;
  auto sm = stage_model(tape, m, false);
  std::vector<typename Tape<T>::Id> ids;
  std::int64_t rows = 0;
  for (const auto& t : image_tokens) {
    ids.push_back(tape.constant(t));
    rows += t.rows;
  }
  Tensor<T> noise = sample_gumbel<T>(rows, m.k, rng);
  return tape.value(build_train_psi(tape, sm, std::span<const typename Tape<T>::Id>(ids),
                                    tau, noise, hard));
}

// Max |off-diagonal of W^T W| and max |diagonal - 1|, for invariant checks.
template <typename T>
std::pair<double, double> head_orthonormality_error(const EigenModel<T>& m) {
  double off = 0.0, diag = 0.0;
  for (std::int64_t i = 0; i < m.w_head.cols; ++i)
    for (std::int64_t j = 0; j < m.w_head.cols; ++j) {
      double dot = 0.0;
      for (std::int64_t r = 0; r < m.w_head.rows; ++r)
        dot += static_cast<double>(m.w_head.at(r, i)) * static_cast<double>(m.w_head.at(r, j));
      if (i == j)
        diag = std::max(diag, std::abs(dot - 1.0));
      else
        off = std::max(off, std::abs(dot));
    }
  return {off, diag};
}

}  // namespace nef
