#include "nef/graph_kernel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <string>

#include "nef/parallel.hpp"

namespace nef {

void KernelConfig::validate() const {
  if (k < 1) throw ConfigError("kernel: k must be at least 1");
  if (k_tilde < 1) throw ConfigError("kernel: k_tilde must be at least 1");
  if (!(alpha >= 0.0)) throw ConfigError("kernel: alpha must be non-negative");
}

namespace detail {

std::vector<std::vector<std::pair<std::int64_t, double>>> feature_knn_directed(
    const Tensor<double>& features, std::int64_t k) {
  std::int64_t n = features.rows, c = features.cols;
  if (n < 2) throw DataError("feature_knn: need at least 2 rows");
  if (k < 1 || k >= n)
    throw ConfigError("feature_knn: k must be in [1, n), got k=" + std::to_string(k) +
                      " n=" + std::to_string(n));
  std::vector<double> norm(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::int64_t j = 0; j < c; ++j) s += features.at(i, j) * features.at(i, j);
    if (s == 0.0) throw DataError("feature_knn: zero feature row " + std::to_string(i));
    norm[static_cast<std::size_t>(i)] = std::sqrt(s);
  }
  std::vector<std::vector<std::pair<std::int64_t, double>>> out(static_cast<std::size_t>(n));
  parallel_for(n, 8, [&](std::int64_t r0, std::int64_t r1) {
    std::vector<std::pair<double, std::int64_t>> cand;
    for (std::int64_t u = r0; u < r1; ++u) {
      cand.clear();
      cand.reserve(static_cast<std::size_t>(n - 1));
      for (std::int64_t v = 0; v < n; ++v) {
        if (v == u) continue;
        double dot = 0.0;
        for (std::int64_t j = 0; j < c; ++j) dot += features.at(u, j) * features.at(v, j);
        double cos = dot / (norm[static_cast<std::size_t>(u)] * norm[static_cast<std::size_t>(v)]);
        // sort by similarity descending, ties by lower index
        cand.emplace_back(-cos, v);
      }
      std::partial_sort(cand.begin(), cand.begin() + k, cand.end());
      auto& row = out[static_cast<std::size_t>(u)];
      for (std::int64_t i = 0; i < k; ++i) {
        double w = std::max(0.0, -cand[static_cast<std::size_t>(i)].first);
        if (w > 0.0) row.emplace_back(cand[static_cast<std::size_t>(i)].second, w);
      }
    }
  });
  return out;
}

}  // namespace detail

SparseSymMatrix build_feature_knn(const Tensor<double>& features, std::int64_t k) {
  auto directed = detail::feature_knn_directed(features, k);
  std::vector<std::tuple<std::int64_t, std::int64_t, double>> edges;
  for (std::int64_t u = 0; u < features.rows; ++u)
    for (const auto& [v, w] : directed[static_cast<std::size_t>(u)]) edges.emplace_back(u, v, w);
  return build_symmetric_max(features.rows, std::move(edges));
}

SparseSymMatrix build_pixel_knn(const Tensor<double>& coords,
                                const std::vector<std::int64_t>& image_id, std::int64_t k_tilde) {
  std::int64_t n = coords.rows;
  if (coords.cols != 5) throw DimensionError("pixel_knn: coords must be (n, 5)");
  if (static_cast<std::int64_t>(image_id.size()) != n)
    throw DimensionError("pixel_knn: image_id size mismatch");
  if (k_tilde < 1) throw ConfigError("pixel_knn: k_tilde must be at least 1");

  // contiguous [begin, end) ranges per image
  std::vector<std::pair<std::int64_t, std::int64_t>> groups;
  std::int64_t begin = 0;
  for (std::int64_t i = 1; i <= n; ++i) {
    if (i == n || image_id[static_cast<std::size_t>(i)] != image_id[static_cast<std::size_t>(begin)]) {
      groups.emplace_back(begin, i);
      begin = i;
    }
  }
  for (const auto& [b, e] : groups)
    if (e - b <= k_tilde)
      throw ConfigError("pixel_knn: image " +
                        std::to_string(image_id[static_cast<std::size_t>(b)]) + " contributes " +
                        std::to_string(e - b) + " patches, need more than k_tilde=" +
                        std::to_string(k_tilde));

  std::vector<std::tuple<std::int64_t, std::int64_t, double>> edges;
  std::vector<std::pair<double, std::int64_t>> cand;
  for (const auto& [b, e] : groups) {
    for (std::int64_t u = b; u < e; ++u) {
      cand.clear();
      for (std::int64_t v = b; v < e; ++v) {
        if (v == u) continue;
        double d2 = 0.0;
        for (std::int64_t j = 0; j < 5; ++j) {
          double d = coords.at(u, j) - coords.at(v, j);
          d2 += d * d;
        }
        cand.emplace_back(d2, v);  // ascending distance, ties by lower index
      }
      std::partial_sort(cand.begin(), cand.begin() + k_tilde, cand.end());
      for (std::int64_t i = 0; i < k_tilde; ++i)
        edges.emplace_back(u, cand[static_cast<std::size_t>(i)].second, 1.0);
    }
  }
  return build_symmetric_max(n, std::move(edges));
}

SparseSymMatrix sparse_kernel(const PatchSet& batch, const KernelConfig& cfg) {
  cfg.validate();
  std::int64_t b = batch.n;
  if (b < 2) throw DataError("batch_kernel: need at least 2 patches");
  std::int64_t k_eff = std::min(cfg.k, b - 1);
  SparseSymMatrix semantic = normalize_adjacency(build_feature_knn(batch.features, k_eff));
  if (cfg.alpha == 0.0) return semantic;
  SparseSymMatrix spatial =
      normalize_adjacency(build_pixel_knn(batch.coords, batch.image_id, cfg.k_tilde));
  return combine_sparse(semantic, spatial, cfg.alpha);
}

Tensor<double> batch_kernel(const PatchSet& batch, const KernelConfig& cfg) {
  return sparse_kernel(batch, cfg).dense();
}

}  // namespace nef
