#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "nef/errors.hpp"
#include "nef/parallel.hpp"

namespace nef {

// Dense row-major matrix. Everything the differentiable path touches is
// rank 2; vectors are (1, n) or (n, 1), scalars (1, 1). data.size() always
// equals rows * cols.
template <typename T>
struct Tensor {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<T> data;

  Tensor() = default;
  Tensor(std::int64_t r, std::int64_t c) : rows(r), cols(c) {
    if (r < 0 || c < 0) throw DimensionError("tensor: negative dimension");
    data.assign(static_cast<std::size_t>(r * c), T(0));
  }
  Tensor(std::int64_t r, std::int64_t c, std::vector<T> values)
      : rows(r), cols(c), data(std::move(values)) {
    if (static_cast<std::int64_t>(data.size()) != r * c)
      throw DimensionError("tensor: data length " + std::to_string(data.size()) +
                           " does not match shape " + std::to_string(r) + "x" +
                           std::to_string(c));
  }

  static Tensor zeros(std::int64_t r, std::int64_t c) { return Tensor(r, c); }

  static Tensor full(std::int64_t r, std::int64_t c, T v) {
    Tensor t(r, c);
    for (auto& x : t.data) x = v;
    return t;
  }

  static Tensor identity(std::int64_t n) {
    Tensor t(n, n);
    for (std::int64_t i = 0; i < n; ++i) t.data[static_cast<std::size_t>(i * n + i)] = T(1);
    return t;
  }

  static Tensor from_rows(std::initializer_list<std::initializer_list<T>> rows_in) {
    std::int64_t r = static_cast<std::int64_t>(rows_in.size());
    std::int64_t c = r == 0 ? 0 : static_cast<std::int64_t>(rows_in.begin()->size());
    Tensor t(r, c);
    std::int64_t i = 0;
    for (const auto& row : rows_in) {
      if (static_cast<std::int64_t>(row.size()) != c)
        throw DimensionError("tensor: ragged initializer rows");
      std::int64_t j = 0;
      for (T v : row) t.at(i, j++) = v;
      ++i;
    }
    return t;
  }

  std::int64_t size() const { return rows * cols; }

  T& at(std::int64_t r, std::int64_t c) {
    return data[static_cast<std::size_t>(r * cols + c)];
  }
  T at(std::int64_t r, std::int64_t c) const {
    return data[static_cast<std::size_t>(r * cols + c)];
  }

  const T* row_ptr(std::int64_t r) const { return data.data() + r * cols; }
  T* row_ptr(std::int64_t r) { return data.data() + r * cols; }

  bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }

  std::string shape_str() const {
    return "(" + std::to_string(rows) + ", " + std::to_string(cols) + ")";
  }

  void check_finite(const char* where) const {
    for (const T& v : data)
      if (!std::isfinite(static_cast<double>(v)))
        throw NumericError(std::string("non-finite value produced by ") + where);
  }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.rows = rows;
    out.cols = cols;
    out.data.resize(data.size());
    for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }
};

namespace detail {

inline void expect_shape(bool ok, const std::string& msg) {
  if (!ok) throw DimensionError(msg);
}

}  // namespace detail

// C = A * B, accumulation runs over the inner index in ascending order for
// every output row, so the result does not depend on the thread count.
template <typename T>
Tensor<T> matmul_values(const Tensor<T>& a, const Tensor<T>& b) {
  detail::expect_shape(a.cols == b.rows, "matmul: inner dimensions " + a.shape_str() +
                                             " x " + b.shape_str() + " do not agree");
  Tensor<T> out(a.rows, b.cols);
  const std::int64_t k = a.cols, n = b.cols;
  std::int64_t grain = std::max<std::int64_t>(1, (1 << 18) / std::max<std::int64_t>(1, k * n));
  parallel_for(a.rows, grain, [&](std::int64_t r0, std::int64_t r1) {
    for (std::int64_t i = r0; i < r1; ++i) {
      const T* arow = a.row_ptr(i);
      T* orow = out.row_ptr(i);
      for (std::int64_t t = 0; t < k; ++t) {
        T av = arow[t];
        if (av == T(0)) continue;
        const T* brow = b.row_ptr(t);
        for (std::int64_t j = 0; j < n; ++j) orow[j] += av * brow[j];
      }
    }
  });
  return out;
}

template <typename T>
Tensor<T> transpose_values(const Tensor<T>& a) {
  Tensor<T> out(a.cols, a.rows);
  for (std::int64_t i = 0; i < a.rows; ++i)
    for (std::int64_t j = 0; j < a.cols; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

template <typename T>
void add_inplace(Tensor<T>& dst, const Tensor<T>& src) {
  detail::expect_shape(dst.same_shape(src), "add: shape mismatch " + dst.shape_str() +
                                                " vs " + src.shape_str());
  for (std::size_t i = 0; i < dst.data.size(); ++i) dst.data[i] += src.data[i];
}

template <typename T>
double max_abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  if (!a.same_shape(b)) throw DimensionError("max_abs_diff: shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.data.size(); ++i)
    m = std::max(m, std::abs(static_cast<double>(a.data[i]) - static_cast<double>(b.data[i])));
  return m;
}

}  // namespace nef
