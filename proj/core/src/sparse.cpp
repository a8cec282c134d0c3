#include "nef/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <tuple>

namespace nef {

double SparseSymMatrix::at(std::int64_t r, std::int64_t c) const {
  for (std::int64_t i = row_begin(r); i < row_end(r); ++i)
    if (col[static_cast<std::size_t>(i)] == c) return val[static_cast<std::size_t>(i)];
  return 0.0;
}

Tensor<double> SparseSymMatrix::dense() const {
  Tensor<double> out(n, n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t i = row_begin(r); i < row_end(r); ++i)
      out.at(r, col[static_cast<std::size_t>(i)]) = val[static_cast<std::size_t>(i)];
  return out;
}

void SparseSymMatrix::validate() const {
  if (static_cast<std::int64_t>(row_ptr.size()) != n + 1)
    throw DataError("sparse: row_ptr size mismatch");
  if (row_ptr[0] != 0 || row_ptr[static_cast<std::size_t>(n)] != nnz())
    throw DataError("sparse: row_ptr bounds corrupt");
  for (std::int64_t r = 0; r < n; ++r) {
    std::int64_t prev = -1;
    for (std::int64_t i = row_begin(r); i < row_end(r); ++i) {
      std::int64_t c = col[static_cast<std::size_t>(i)];
      double v = val[static_cast<std::size_t>(i)];
      if (c < 0 || c >= n) throw DataError("sparse: column out of range");
      if (c == r) throw DataError("sparse: diagonal entry stored");
      if (c <= prev) throw DataError("sparse: columns not strictly ascending");
      if (!std::isfinite(v)) throw NumericError("sparse: non-finite value");
      if (v == 0.0) throw DataError("sparse: explicit zero stored");
      if (at(c, r) != v)
        throw DataError("sparse: asymmetry at (" + std::to_string(r) + ", " + std::to_string(c) +
                        ")");
      prev = c;
    }
  }
}

SparseSymMatrix build_symmetric_max(
    std::int64_t n, std::vector<std::tuple<std::int64_t, std::int64_t, double>> entries) {
  // mirror, sort, merge duplicates by max
  std::vector<std::tuple<std::int64_t, std::int64_t, double>> both;
  both.reserve(entries.size() * 2);
  for (const auto& [r, c, v] : entries) {
    if (r == c) throw DataError("sparse: self edge rejected");
    if (r < 0 || r >= n || c < 0 || c >= n) throw DataError("sparse: edge index out of range");
    if (!(v > 0.0)) continue;  // zero-weight edges are pruned, never stored
    both.emplace_back(r, c, v);
    both.emplace_back(c, r, v);
  }
  std::sort(both.begin(), both.end());
  SparseSymMatrix m;
  m.n = n;
  m.row_ptr.assign(static_cast<std::size_t>(n) + 1, 0);
  std::size_t i = 0;
  while (i < both.size()) {
    auto [r, c, v] = both[i];
    double best = v;
    std::size_t j = i + 1;
    while (j < both.size() && std::get<0>(both[j]) == r && std::get<1>(both[j]) == c) {
      best = std::max(best, std::get<2>(both[j]));
      ++j;
    }
    m.col.push_back(c);
    m.val.push_back(best);
    m.row_ptr[static_cast<std::size_t>(r) + 1] += 1;
    i = j;
  }
  for (std::int64_t r = 0; r < n; ++r)
    m.row_ptr[static_cast<std::size_t>(r) + 1] += m.row_ptr[static_cast<std::size_t>(r)];
  return m;
}

SparseSymMatrix normalize_adjacency(const SparseSymMatrix& a) {
  std::vector<double> degree(static_cast<std::size_t>(a.n), 0.0);
  for (std::int64_t r = 0; r < a.n; ++r)
    for (std::int64_t i = a.row_begin(r); i < a.row_end(r); ++i)
      degree[static_cast<std::size_t>(r)] += a.val[static_cast<std::size_t>(i)];
  for (std::int64_t r = 0; r < a.n; ++r)
    if (!(degree[static_cast<std::size_t>(r)] > 0.0))
      throw DataError("normalize_adjacency: isolated vertex, row " + std::to_string(r) +
                      " has zero degree");
  SparseSymMatrix out = a;
  for (std::int64_t r = 0; r < a.n; ++r) {
    double dr = degree[static_cast<std::size_t>(r)];
    for (std::int64_t i = a.row_begin(r); i < a.row_end(r); ++i) {
      double dc = degree[static_cast<std::size_t>(a.col[static_cast<std::size_t>(i)])];
      out.val[static_cast<std::size_t>(i)] =
          a.val[static_cast<std::size_t>(i)] / std::sqrt(dr * dc);
    }
  }
  return out;
}

SparseSymMatrix combine_sparse(const SparseSymMatrix& a, const SparseSymMatrix& b, double weight) {
  if (a.n != b.n) throw DimensionError("combine_sparse: dimension mismatch");
  SparseSymMatrix out;
  out.n = a.n;
  out.row_ptr.assign(static_cast<std::size_t>(a.n) + 1, 0);
  for (std::int64_t r = 0; r < a.n; ++r) {
    std::int64_t ia = a.row_begin(r), ib = b.row_begin(r);
    while (ia < a.row_end(r) || ib < b.row_end(r)) {
      std::int64_t ca = ia < a.row_end(r) ? a.col[static_cast<std::size_t>(ia)] : a.n;
      std::int64_t cb = ib < b.row_end(r) ? b.col[static_cast<std::size_t>(ib)] : a.n;
      std::int64_t c = std::min(ca, cb);
      double v = 0.0;
      if (ca == c) v += a.val[static_cast<std::size_t>(ia++)];
      if (cb == c) v += weight * b.val[static_cast<std::size_t>(ib++)];
      if (v != 0.0) {
        out.col.push_back(c);
        out.val.push_back(v);
        out.row_ptr[static_cast<std::size_t>(r) + 1] += 1;
      }
    }
  }
  for (std::int64_t r = 0; r < a.n; ++r)
    out.row_ptr[static_cast<std::size_t>(r) + 1] += out.row_ptr[static_cast<std::size_t>(r)];
  return out;
}

}  // namespace nef
