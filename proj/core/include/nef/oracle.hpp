#pragma once

#include <cstdint>
#include <vector>

#include "nef/rng.hpp"
#include "nef/tensor.hpp"

namespace nef {

// Exact reference pipeline the learned model is audited against. Everything
// here is double precision and deterministic.

struct EigenDecomposition {
  std::vector<double> eigenvalues;  // descending
  Tensor<double> eigenvectors;      // column j pairs with eigenvalues[j]
};

// Dense symmetric eigendecomposition via cyclic Jacobi rotations. Sweeps run
// until the off-diagonal Frobenius norm drops below 1e-10 * ||A||_F, at most
// 100 sweeps (NumericError beyond that). Eigenpairs are sorted by descending
// eigenvalue; each vector is scaled so its largest-magnitude entry is
// positive. Input asymmetry beyond 1e-8 is a data error.
EigenDecomposition eigh(const Tensor<double>& a);

struct KMeansResult {
  Tensor<double> centers;  // (n_clusters, dim)
  std::vector<std::int32_t> labels;
  double inertia = 0.0;
  std::int64_t iterations = 0;
};

// Lloyd iterations from k-means++ seeding. Converges when no center moves
// more than 1e-6 (L2) or after 300 iterations. Assignment ties go to the
// lower center index; an emptied cluster is re-seeded to the point farthest
// from its assigned center.
KMeansResult kmeans_fit(const Tensor<double>& points, std::int64_t n_clusters, CounterRng& rng);

std::vector<std::int32_t> kmeans_predict(const Tensor<double>& centers,
                                         const Tensor<double>& points);

// Classical spectral clustering: rows of the top-K eigenvectors of the kernel
// (unit-normalized by default) clustered with k-means.
std::vector<std::int32_t> spectral_cluster(const Tensor<double>& kernel, std::int64_t top_k,
                                           std::int64_t n_clusters, std::uint64_t seed,
                                           bool row_normalize = true);

// The same clustering from an existing decomposition, for callers that also
// need the eigenvalues and should not pay for a second solve.
std::vector<std::int32_t> spectral_cluster(const EigenDecomposition& eig, std::int64_t top_k,
                                           std::int64_t n_clusters, std::uint64_t seed,
                                           bool row_normalize = true);

// Pair-counting adjusted Rand index between two labelings of the same items.
// 1 for identical partitions (up to renaming), about 0 for independent ones;
// can be negative.
double adjusted_rand_index(const std::vector<std::int32_t>& a, const std::vector<std::int32_t>& b);

}  // namespace nef
