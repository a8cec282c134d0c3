#pragma once

#include <cstdint>
#include <vector>

#include "nef/patchset.hpp"
#include "nef/sparse.hpp"
#include "nef/tensor.hpp"

namespace nef {

struct KernelConfig {
  std::int64_t k = 256;       // semantic k-NN fan-out
  std::int64_t k_tilde = 8;   // spatial-color k-NN fan-out, per image
  double alpha = 0.3;         // weight of the spatial-color term

  void validate() const;
};

namespace detail {

// Directed k-NN lists before symmetrization: row u holds at most k entries,
// the k most cosine-similar rows (self excluded, ties to the lower index),
// weighted max(0, cosine) with zero weights pruned.
std::vector<std::vector<std::pair<std::int64_t, double>>> feature_knn_directed(
    const Tensor<double>& features, std::int64_t k);

}  // namespace detail

// Semantic affinity: cosine k-NN graph over feature rows, negatives clamped
// to zero, symmetrized by elementwise max. Rows must be nonzero; k must be
// in [1, n). Every row has at most k neighbors before symmetrization and at
// most 2k after.
SparseSymMatrix build_feature_knn(const Tensor<double>& features, std::int64_t k);

// Spatial-color affinity: within each image, connect every patch to its
// k_tilde nearest neighbors in (row, col, r, g, b) space under L2, binary
// weights, ties to the lower index, symmetrized by max. Cross-image entries
// never appear, so the matrix is block-diagonal in image order. Every image
// must contribute more than k_tilde patches.
SparseSymMatrix build_pixel_knn(const Tensor<double>& coords,
                                const std::vector<std::int64_t>& image_id, std::int64_t k_tilde);

// Dense training kernel for one batch: symmetric, entries in [0, 1 + alpha].
// The semantic fan-out is clamped to min(k, B - 1); with alpha = 0 the
// spatial graph is skipped entirely (and pixel planes are not required).
// Running this on the whole dataset reproduces the densified global kernel
// bit for bit, because it is the same code path.
Tensor<double> batch_kernel(const PatchSet& batch, const KernelConfig& cfg);

// The same kernel in sparse form (useful for reports and the exact solver).
SparseSymMatrix sparse_kernel(const PatchSet& batch, const KernelConfig& cfg);

}  // namespace nef
