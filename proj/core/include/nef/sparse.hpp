#pragma once

#include <cstdint>
#include <vector>

#include "nef/errors.hpp"
#include "nef/tensor.hpp"

namespace nef {

// Symmetric sparse matrix in CSR form. Both (u, v) and (v, u) are stored, so
// row iteration sees the full neighborhood. Invariants: no explicit zeros,
// column indices strictly ascending within a row, values finite, and the
// pattern plus values are exactly symmetric.
struct SparseSymMatrix {
  std::int64_t n = 0;
  std::vector<std::int64_t> row_ptr;  // size n + 1
  std::vector<std::int64_t> col;
  std::vector<double> val;

  std::int64_t nnz() const { return static_cast<std::int64_t>(col.size()); }

  std::int64_t row_begin(std::int64_t r) const { return row_ptr[static_cast<std::size_t>(r)]; }
  std::int64_t row_end(std::int64_t r) const { return row_ptr[static_cast<std::size_t>(r) + 1]; }

  double at(std::int64_t r, std::int64_t c) const;

  Tensor<double> dense() const;

  // Checks every structural invariant; throws on violation. Meant for tests
  // and debug paths, not hot loops.
  void validate() const;
};

// entries: (row, col, value) triples for u != v with value > 0; both
// orientations may appear, duplicates are merged by elementwise max.
SparseSymMatrix build_symmetric_max(std::int64_t n,
                                    std::vector<std::tuple<std::int64_t, std::int64_t, double>> entries);

// D^{-1/2} A D^{-1/2} with degrees taken from row sums. A vertex with zero
// degree has no place in a normalized graph; the error names the first one.
SparseSymMatrix normalize_adjacency(const SparseSymMatrix& a);

// a + weight * b over the union pattern.
SparseSymMatrix combine_sparse(const SparseSymMatrix& a, const SparseSymMatrix& b, double weight);

}  // namespace nef
