#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "nef/errors.hpp"
#include "nef/tensor.hpp"

namespace nef {

// Define-by-run reverse-mode tape. Each op appends a node holding the forward
// value and a closure that pushes this node's gradient into its inputs.
// Creation order is a topological order, so backward() is a single reverse
// scan. Graphs are built fresh every step and never reused.
//
// Instantiate with T = float for training and T = double for gradient checks.
template <typename T>
class Tape {
 public:
  using Id = std::int32_t;

  Id input(Tensor<T> value, bool requires_grad) {
    value.check_finite("input");
    return emit(std::move(value), requires_grad, nullptr);
  }

  Id constant(Tensor<T> value) { return input(std::move(value), false); }

  Id scalar(T v) { return constant(Tensor<T>(1, 1, {v})); }

  const Tensor<T>& value(Id id) const { return node(id).value; }

  bool requires_grad(Id id) const { return node(id).requires_grad; }

  // Gradient accumulated by the last backward(); zeros if none reached it.
  Tensor<T> grad(Id id) const {
    const Node& n = node(id);
    if (n.grad.size() == 0) return Tensor<T>::zeros(n.value.rows, n.value.cols);
    return n.grad;
  }

  std::int64_t size() const { return static_cast<std::int64_t>(nodes_.size()); }

  // root must be scalar (1, 1); seeds d root / d root = 1 and sweeps the tape
  // in reverse creation order.
  void backward(Id root) {
    Node& r = node(root);
    if (r.value.rows != 1 || r.value.cols != 1)
      throw DimensionError("backward: root must be a scalar, got " + r.value.shape_str());
    for (Node& n : nodes_) n.grad = Tensor<T>();
    r.grad = Tensor<T>(1, 1, {T(1)});
    for (Id id = root; id >= 0; --id) {
      Node& n = node(id);
      if (n.grad.size() == 0 || !n.backprop) continue;
      n.backprop(*this);
    }
  }

  // ---- elementwise ----

  Id add(Id a, Id b) {
    const Tensor<T>&va = value(a), &vb = value(b);
    detail::expect_shape(va.same_shape(vb),
                         "add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] += vb.data[i];
    return emit(std::move(out), requires_grad(a) || requires_grad(b),
                [a, b](Tape& t, Id self) {
                  const Tensor<T>& g = t.node(self).grad;
                  t.accumulate(a, g);
                  t.accumulate(b, g);
                });
  }

  Id sub(Id a, Id b) {
    const Tensor<T>&va = value(a), &vb = value(b);
    detail::expect_shape(va.same_shape(vb),
                         "sub: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] -= vb.data[i];
    return emit(std::move(out), requires_grad(a) || requires_grad(b),
                [a, b](Tape& t, Id self) {
                  const Tensor<T>& g = t.node(self).grad;
                  t.accumulate(a, g);
                  Tensor<T> neg = g;
                  for (auto& x : neg.data) x = -x;
                  t.accumulate(b, neg);
                });
  }

  Id mul(Id a, Id b) {
    const Tensor<T>&va = value(a), &vb = value(b);
    detail::expect_shape(va.same_shape(vb),
                         "mul: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor<T> out = va;
    for (std::size_t i = 0; i < out.data.size(); ++i) out.data[i] *= vb.data[i];
    return emit(std::move(out), requires_grad(a) || requires_grad(b),
                [a, b](Tape& t, Id self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.requires_grad(a)) {
                    Tensor<T> ga = g;
                    const Tensor<T>& vb2 = t.value(b);
                    for (std::size_t i = 0; i < ga.data.size(); ++i) ga.data[i] *= vb2.data[i];
                    t.accumulate(a, ga);
                  }
                  if (t.requires_grad(b)) {
                    Tensor<T> gb = g;
                    const Tensor<T>& va2 = t.value(a);
                    for (std::size_t i = 0; i < gb.data.size(); ++i) gb.data[i] *= va2.data[i];
                    t.accumulate(b, gb);
                  }
                });
  }

  Id scale(Id a, T s) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x *= s;
    return emit(std::move(out), requires_grad(a), [a, s](Tape& t, Id self) {
      Tensor<T> g = t.node(self).grad;
      for (auto& x : g.data) x *= s;
      t.accumulate(a, g);
    });
  }

  Id add_scalar(Id a, T s) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x += s;
    return emit(std::move(out), requires_grad(a), [a](Tape& t, Id self) {
      t.accumulate(a, t.node(self).grad);
    });
  }

  Id relu(Id a) {
    Tensor<T> out = value(a);
    for (auto& x : out.data) x = x > T(0) ? x : T(0);
    return emit(std::move(out), requires_grad(a), [a](Tape& t, Id self) {
      Tensor<T> g = t.node(self).grad;
      const Tensor<T>& v = t.value(a);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (v.data[i] <= T(0)) g.data[i] = T(0);
      t.accumulate(a, g);
    });
  }

  // elu(x) + 1: x + 1 for x > 0, exp(x) otherwise. Strictly positive, which
  // keeps linear-attention denominators away from zero.
  Id elu_plus_one(Id a) {
    Tensor<T> out = value(a);
    for (auto& x : out.data)
      x = x > T(0) ? x + T(1) : static_cast<T>(std::exp(static_cast<double>(x)));
    return emit(std::move(out), requires_grad(a), [a](Tape& t, Id self) {
      Tensor<T> g = t.node(self).grad;
      const Tensor<T>& v = t.value(a);
      for (std::size_t i = 0; i < g.data.size(); ++i)
        if (v.data[i] <= T(0))
          g.data[i] *= static_cast<T>(std::exp(static_cast<double>(v.data[i])));
      t.accumulate(a, g);
    });
  }

  // 1 / sqrt(x + shift), elementwise
  Id rsqrt_shift(Id a, T shift) {
    Tensor<T> out = value(a);
    for (auto& x : out.data)
      x = static_cast<T>(1.0 / std::sqrt(static_cast<double>(x) + static_cast<double>(shift)));
    return emit(std::move(out), requires_grad(a), [a](Tape& t, Id self) {
      const Node& n = t.node(self);
      Tensor<T> g = n.grad;
      for (std::size_t i = 0; i < g.data.size(); ++i) {
        T y = n.value.data[i];
        g.data[i] *= T(-0.5) * y * y * y;
      }
      t.accumulate(a, g);
    });
  }

  // ---- linear algebra ----

  Id matmul(Id a, Id b) {
    Tensor<T> out = matmul_values(value(a), value(b));
    return emit(std::move(out), requires_grad(a) || requires_grad(b),
                [a, b](Tape& t, Id self) {
                  const Tensor<T>& g = t.node(self).grad;
                  if (t.requires_grad(a))
                    t.accumulate(a, matmul_values(g, transpose_values(t.value(b))));
                  if (t.requires_grad(b))
                    t.accumulate(b, matmul_values(transpose_values(t.value(a)), g));
                });
  }

  Id transpose(Id a) {
    return emit(transpose_values(value(a)), requires_grad(a), [a](Tape& t, Id self) {
      t.accumulate(a, transpose_values(t.node(self).grad));
    });
  }

  // ---- reductions ----

  Id row_sum(Id a) { return row_reduce(a, false); }
  Id row_mean(Id a) { return row_reduce(a, true); }
  Id col_sum(Id a) { return col_reduce(a, false); }
  Id col_mean(Id a) { return col_reduce(a, true); }

  Id sum_all(Id a) {
    const Tensor<T>& v = value(a);
    T acc(0);
    for (const T& x : v.data) acc += x;
    return emit(Tensor<T>(1, 1, {acc}), requires_grad(a), [a](Tape& t, Id self) {
      T g = t.node(self).grad.data[0];
      const Tensor<T>& v2 = t.value(a);
      t.accumulate(a, Tensor<T>::full(v2.rows, v2.cols, g));
    });
  }

  // ---- shape surgery ----

  Id concat_rows(std::span<const Id> parts) {
    if (parts.empty()) throw DimensionError("concat_rows: no inputs");
    std::int64_t cols = value(parts[0]).cols;
    std::int64_t rows = 0;
    bool rg = false;
    for (Id p : parts) {
      const Tensor<T>& v = value(p);
      detail::expect_shape(v.cols == cols, "concat_rows: column mismatch");
      rows += v.rows;
      rg = rg || requires_grad(p);
    }
    Tensor<T> out(rows, cols);
    std::int64_t at = 0;
    for (Id p : parts) {
      const Tensor<T>& v = value(p);
      std::copy(v.data.begin(), v.data.end(), out.data.begin() + at * cols);
      at += v.rows;
    }
    std::vector<Id> owned(parts.begin(), parts.end());
    return emit(std::move(out), rg, [owned = std::move(owned)](Tape& t, Id self) {
      const Tensor<T>& g = t.node(self).grad;
      std::int64_t r0 = 0;
      for (Id p : owned) {
        const Tensor<T>& v = t.value(p);
        if (t.requires_grad(p)) {
          Tensor<T> gp(v.rows, v.cols);
          std::copy(g.data.begin() + r0 * g.cols, g.data.begin() + (r0 + v.rows) * g.cols,
                    gp.data.begin());
          t.accumulate(p, gp);
        }
        r0 += v.rows;
      }
    });
  }

  Id slice_rows(Id a, std::int64_t begin, std::int64_t end) {
    const Tensor<T>& v = value(a);
    detail::expect_shape(begin >= 0 && begin < end && end <= v.rows,
                         "slice_rows: range [" + std::to_string(begin) + ", " +
                             std::to_string(end) + ") out of " + v.shape_str());
    Tensor<T> out(end - begin, v.cols);
    std::copy(v.data.begin() + begin * v.cols, v.data.begin() + end * v.cols, out.data.begin());
    return emit(std::move(out), requires_grad(a), [a, begin](Tape& t, Id self) {
      const Tensor<T>& g = t.node(self).grad;
      const Tensor<T>& v2 = t.value(a);
      Tensor<T> ga(v2.rows, v2.cols);
      std::copy(g.data.begin(), g.data.end(), ga.data.begin() + begin * v2.cols);
      t.accumulate(a, ga);
    });
  }

  Id gather_rows(Id a, std::vector<std::int64_t> idx) {
    const Tensor<T>& v = value(a);
    for (std::int64_t i : idx)
      detail::expect_shape(i >= 0 && i < v.rows,
                           "gather_rows: index " + std::to_string(i) + " out of " + v.shape_str());
    Tensor<T> out(static_cast<std::int64_t>(idx.size()), v.cols);
    for (std::size_t r = 0; r < idx.size(); ++r)
      std::copy(v.row_ptr(idx[r]), v.row_ptr(idx[r]) + v.cols, out.row_ptr(static_cast<std::int64_t>(r)));
    return emit(std::move(out), requires_grad(a), [a, idx = std::move(idx)](Tape& t, Id self) {
      const Tensor<T>& g = t.node(self).grad;
      const Tensor<T>& v2 = t.value(a);
      Tensor<T> ga(v2.rows, v2.cols);
      for (std::size_t r = 0; r < idx.size(); ++r) {
        const T* src = g.row_ptr(static_cast<std::int64_t>(r));
        T* dst = ga.row_ptr(idx[r]);
        for (std::int64_t j = 0; j < g.cols; ++j) dst[j] += src[j];
      }
      t.accumulate(a, ga);
    });
  }

  // ---- broadcasts ----

  // (m, n) / (m, 1), row-wise
  Id div_cols(Id a, Id col) {
    const Tensor<T>&va = value(a), &vc = value(col);
    detail::expect_shape(vc.rows == va.rows && vc.cols == 1,
                         "div_cols: expected " + std::to_string(va.rows) + "x1, got " +
                             vc.shape_str());
    Tensor<T> out = va;
    for (std::int64_t i = 0; i < va.rows; ++i) {
      T d = vc.data[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < va.cols; ++j) out.at(i, j) /= d;
    }
    return emit(std::move(out), requires_grad(a) || requires_grad(col),
                [a, col](Tape& t, Id self) {
                  const Node& n = t.node(self);
                  const Tensor<T>& g = n.grad;
                  const Tensor<T>& vc2 = t.value(col);
                  if (t.requires_grad(a)) {
                    Tensor<T> ga = g;
                    for (std::int64_t i = 0; i < ga.rows; ++i) {
                      T d = vc2.data[static_cast<std::size_t>(i)];
                      for (std::int64_t j = 0; j < ga.cols; ++j) ga.at(i, j) /= d;
                    }
                    t.accumulate(a, ga);
                  }
                  if (t.requires_grad(col)) {
                    // d out_ij / d c_i = -a_ij / c_i^2 = -out_ij / c_i
                    Tensor<T> gc(vc2.rows, 1);
                    for (std::int64_t i = 0; i < g.rows; ++i) {
                      T acc(0);
                      for (std::int64_t j = 0; j < g.cols; ++j)
                        acc += g.at(i, j) * n.value.at(i, j);
                      gc.data[static_cast<std::size_t>(i)] =
                          -acc / vc2.data[static_cast<std::size_t>(i)];
                    }
                    t.accumulate(col, gc);
                  }
                });
  }

  // (m, n) * (m, 1), row-wise
  Id mul_cols(Id a, Id col) {
    const Tensor<T>&va = value(a), &vc = value(col);
    detail::expect_shape(vc.rows == va.rows && vc.cols == 1,
                         "mul_cols: expected " + std::to_string(va.rows) + "x1, got " +
                             vc.shape_str());
    Tensor<T> out = va;
    for (std::int64_t i = 0; i < va.rows; ++i) {
      T s = vc.data[static_cast<std::size_t>(i)];
      for (std::int64_t j = 0; j < va.cols; ++j) out.at(i, j) *= s;
    }
    return emit(std::move(out), requires_grad(a) || requires_grad(col),
                [a, col](Tape& t, Id self) {
                  const Tensor<T>& g = t.node(self).grad;
                  const Tensor<T>& va2 = t.value(a);
                  const Tensor<T>& vc2 = t.value(col);
                  if (t.requires_grad(a)) {
                    Tensor<T> ga = g;
                    for (std::int64_t i = 0; i < ga.rows; ++i) {
                      T s = vc2.data[static_cast<std::size_t>(i)];
                      for (std::int64_t j = 0; j < ga.cols; ++j) ga.at(i, j) *= s;
                    }
                    t.accumulate(a, ga);
                  }
                  if (t.requires_grad(col)) {
                    Tensor<T> gc(vc2.rows, 1);
                    for (std::int64_t i = 0; i < g.rows; ++i) {
                      T acc(0);
                      for (std::int64_t j = 0; j < g.cols; ++j) acc += g.at(i, j) * va2.at(i, j);
                      gc.data[static_cast<std::size_t>(i)] = acc;
                    }
                    t.accumulate(col, gc);
                  }
                });
  }

  // (m, n) * (1, n), column-wise
  Id mul_rows(Id a, Id row) {
    const Tensor<T>&va = value(a), &vr = value(row);
    detail::expect_shape(vr.cols == va.cols && vr.rows == 1,
                         "mul_rows: expected 1x" + std::to_string(va.cols) + ", got " +
                             vr.shape_str());
    Tensor<T> out = va;
    for (std::int64_t i = 0; i < va.rows; ++i)
      for (std::int64_t j = 0; j < va.cols; ++j) out.at(i, j) *= vr.data[static_cast<std::size_t>(j)];
    return emit(std::move(out), requires_grad(a) || requires_grad(row),
                [a, row](Tape& t, Id self) {
                  const Tensor<T>& g = t.node(self).grad;
                  const Tensor<T>& va2 = t.value(a);
                  const Tensor<T>& vr2 = t.value(row);
                  if (t.requires_grad(a)) {
                    Tensor<T> ga = g;
                    for (std::int64_t i = 0; i < ga.rows; ++i)
                      for (std::int64_t j = 0; j < ga.cols; ++j)
                        ga.at(i, j) *= vr2.data[static_cast<std::size_t>(j)];
                    t.accumulate(a, ga);
                  }
                  if (t.requires_grad(row)) {
                    Tensor<T> gr(1, vr2.cols);
                    for (std::int64_t i = 0; i < g.rows; ++i)
                      for (std::int64_t j = 0; j < g.cols; ++j)
                        gr.data[static_cast<std::size_t>(j)] += g.at(i, j) * va2.at(i, j);
                    t.accumulate(row, gr);
                  }
                });
  }

  // ---- nonlinear structured ops ----

  // row-wise softmax of x / temperature
  Id softmax_rows(Id a, T temperature) {
    if (!(temperature > T(0))) throw ConfigError("softmax_rows: temperature must be positive");
    const Tensor<T>& v = value(a);
    Tensor<T> out(v.rows, v.cols);
    for (std::int64_t i = 0; i < v.rows; ++i) {
      T m = v.at(i, 0) / temperature;
      for (std::int64_t j = 1; j < v.cols; ++j) m = std::max(m, v.at(i, j) / temperature);
      T z(0);
      for (std::int64_t j = 0; j < v.cols; ++j) {
        T e = static_cast<T>(std::exp(static_cast<double>(v.at(i, j) / temperature - m)));
        out.at(i, j) = e;
        z += e;
      }
      for (std::int64_t j = 0; j < v.cols; ++j) out.at(i, j) /= z;
    }
    return emit(std::move(out), requires_grad(a), [a, temperature](Tape& t, Id self) {
      const Node& n = t.node(self);
      const Tensor<T>& g = n.grad;
      const Tensor<T>& y = n.value;
      Tensor<T> ga(g.rows, g.cols);
      for (std::int64_t i = 0; i < g.rows; ++i) {
        T dot(0);
        for (std::int64_t j = 0; j < g.cols; ++j) dot += g.at(i, j) * y.at(i, j);
        for (std::int64_t j = 0; j < g.cols; ++j)
          ga.at(i, j) = y.at(i, j) * (g.at(i, j) - dot) / temperature;
      }
      t.accumulate(a, ga);
    });
  }

  // Normalizes every column of a (B, K) batch to unit mean square:
  // out[b, j] = x[b, j] / sqrt(eps + mean_b x[b, j]^2). This is the layer that
  // realizes the unit-trace constraint on the eigenfunction outputs. With
  // eps = 0 a zero column is a degenerate-normalization error.
  Id l2_batchnorm(Id a, T eps = T(1e-12)) {
    const Tensor<T>& v = value(a);
    detail::expect_shape(v.rows >= 1, "l2_batchnorm: empty batch");
    std::vector<T> denom(static_cast<std::size_t>(v.cols));
    for (std::int64_t j = 0; j < v.cols; ++j) {
      double ms = 0.0;
      for (std::int64_t b = 0; b < v.rows; ++b) {
        double x = static_cast<double>(v.at(b, j));
        ms += x * x;
      }
      ms /= static_cast<double>(v.rows);
      double s2 = static_cast<double>(eps) + ms;
      if (s2 <= 0.0)
        throw NumericError("l2_batchnorm: degenerate normalization, column " +
                           std::to_string(j) + " has zero mean square");
      denom[static_cast<std::size_t>(j)] = static_cast<T>(std::sqrt(s2));
    }
    Tensor<T> out(v.rows, v.cols);
    for (std::int64_t b = 0; b < v.rows; ++b)
      for (std::int64_t j = 0; j < v.cols; ++j)
        out.at(b, j) = v.at(b, j) / denom[static_cast<std::size_t>(j)];
    return emit(std::move(out), requires_grad(a),
                [a, denom = std::move(denom)](Tape& t, Id self) {
                  const Node& n = t.node(self);
                  const Tensor<T>& g = n.grad;
                  const Tensor<T>& x = t.value(a);
                  std::int64_t B = x.rows, K = x.cols;
                  Tensor<T> ga(B, K);
                  for (std::int64_t j = 0; j < K; ++j) {
                    T s = denom[static_cast<std::size_t>(j)];
                    T s3 = s * s * s;
                    T dot(0);
                    for (std::int64_t b = 0; b < B; ++b) dot += g.at(b, j) * x.at(b, j);
                    for (std::int64_t b = 0; b < B; ++b)
                      ga.at(b, j) = g.at(b, j) / s -
                                    x.at(b, j) * dot / (static_cast<T>(B) * s3);
                  }
                  t.accumulate(a, ga);
                });
  }

  // Identity forward (bit-identical copy); gradient does not flow through.
  Id stop_gradient(Id a) { return emit(value(a), false, nullptr); }

 private:
  struct Node {
    Tensor<T> value;
    Tensor<T> grad;  // empty until backward reaches this node
    bool requires_grad = false;
    std::function<void(Tape&)> backprop;
  };

  Node& node(Id id) { return nodes_[static_cast<std::size_t>(id)]; }
  const Node& node(Id id) const { return nodes_[static_cast<std::size_t>(id)]; }

  void accumulate(Id id, const Tensor<T>& g) {
    Node& n = node(id);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) n.grad = Tensor<T>::zeros(n.value.rows, n.value.cols);
    add_inplace(n.grad, g);
  }

  Id row_reduce(Id a, bool mean) {
    const Tensor<T>& v = value(a);
    Tensor<T> out(v.rows, 1);
    T inv = mean ? T(1) / static_cast<T>(v.cols) : T(1);
    for (std::int64_t i = 0; i < v.rows; ++i) {
      T acc(0);
      for (std::int64_t j = 0; j < v.cols; ++j) acc += v.at(i, j);
      out.data[static_cast<std::size_t>(i)] = acc * inv;
    }
    return emit(std::move(out), requires_grad(a), [a, inv](Tape& t, Id self) {
      const Tensor<T>& g = t.node(self).grad;
      const Tensor<T>& v2 = t.value(a);
      Tensor<T> ga(v2.rows, v2.cols);
      for (std::int64_t i = 0; i < v2.rows; ++i) {
        T gi = g.data[static_cast<std::size_t>(i)] * inv;
        for (std::int64_t j = 0; j < v2.cols; ++j) ga.at(i, j) = gi;
      }
      t.accumulate(a, ga);
    });
  }

  Id col_reduce(Id a, bool mean) {
    const Tensor<T>& v = value(a);
    Tensor<T> out(1, v.cols);
    T inv = mean ? T(1) / static_cast<T>(v.rows) : T(1);
    for (std::int64_t i = 0; i < v.rows; ++i)
      for (std::int64_t j = 0; j < v.cols; ++j) out.data[static_cast<std::size_t>(j)] += v.at(i, j);
    for (auto& x : out.data) x *= inv;
    return emit(std::move(out), requires_grad(a), [a, inv](Tape& t, Id self) {
      const Tensor<T>& g = t.node(self).grad;
      const Tensor<T>& v2 = t.value(a);
      Tensor<T> ga(v2.rows, v2.cols);
      for (std::int64_t i = 0; i < v2.rows; ++i)
        for (std::int64_t j = 0; j < v2.cols; ++j)
          ga.at(i, j) = g.data[static_cast<std::size_t>(j)] * inv;
      t.accumulate(a, ga);
    });
  }

  // post: emitted value contains no NaN/Inf
  Id emit(Tensor<T> value, bool requires_grad, std::function<void(Tape&, Id)> backprop) {
    value.check_finite("op");
    Id id = static_cast<Id>(nodes_.size());
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    if (requires_grad && backprop)
      n.backprop = [id, bp = std::move(backprop)](Tape& t) { bp(t, id); };
    nodes_.push_back(std::move(n));
    return id;
  }

  std::vector<Node> nodes_;
};

}  // namespace nef
