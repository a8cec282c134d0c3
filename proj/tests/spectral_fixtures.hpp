#pragma once

#include <cstdint>
#include <vector>

#include "nef/feature_io.hpp"
#include "nef/oracle.hpp"
#include "nef/rng.hpp"
#include "nef/tensor.hpp"

namespace fixtures {

// Symmetric matrix with a chosen leading spectrum: the orthonormal basis
// comes from decomposing a seeded random symmetric matrix, the remaining
// eigenvalues decay linearly from tail_max toward zero. All eigenvalues
// nonnegative when the inputs are, so the result is PSD by construction.
inline nef::Tensor<double> make_spectrum_kernel(std::int64_t n, const std::vector<double>& top,
                                                std::uint64_t seed, double tail_max = 0.05) {
  nef::CounterRng rng(seed);
  nef::Tensor<double> a(n, n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i; j < n; ++j) {
      double v = rng.uniform(-1.0, 1.0);
      a.at(i, j) = v;
      a.at(j, i) = v;
    }
  auto eg = nef::eigh(a);
  std::vector<double> lam(static_cast<std::size_t>(n), 0.0);
  for (std::size_t j = 0; j < top.size() && j < lam.size(); ++j) lam[j] = top[j];
  std::int64_t tail = n - static_cast<std::int64_t>(top.size());
  for (std::int64_t j = static_cast<std::int64_t>(top.size()); j < n; ++j)
    lam[static_cast<std::size_t>(j)] =
        tail > 0 ? tail_max * static_cast<double>(n - j) / static_cast<double>(tail + 1) : 0.0;
  nef::Tensor<double> k(n, n);
  for (std::int64_t r = 0; r < n; ++r)
    for (std::int64_t c = r; c < n; ++c) {
      double s = 0.0;
      for (std::int64_t j = 0; j < n; ++j)
        s += lam[static_cast<std::size_t>(j)] * eg.eigenvectors.at(r, j) *
             eg.eigenvectors.at(c, j);
      k.at(r, c) = s;
      k.at(c, r) = s;
    }
  return k;
}

// One-image dataset of h*w points with one-hot features (c = h*w), so a
// linear model can realize any output matrix over the points. No pixel
// planes; pair with a fixed kernel or alpha = 0.
inline nef::FeatureContainer point_container(std::int64_t h, std::int64_t w) {
  nef::FeatureContainer fc;
  fc.n_images = 1;
  fc.h = h;
  fc.w = w;
  fc.c = h * w;
  fc.patch_size = 1;
  fc.features.assign(static_cast<std::size_t>(h * w * fc.c), 0.0f);
  for (std::int64_t i = 0; i < h * w; ++i)
    fc.features[static_cast<std::size_t>(i * fc.c + i)] = 1.0f;
  return fc;
}

// |cosine| between an output column and an oracle eigenvector column.
inline double abs_cosine(const nef::Tensor<double>& psi, std::int64_t pj,
                         const nef::Tensor<double>& vecs, std::int64_t vj) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::int64_t i = 0; i < psi.rows; ++i) {
    dot += psi.at(i, pj) * vecs.at(i, vj);
    na += psi.at(i, pj) * psi.at(i, pj);
    nb += vecs.at(i, vj) * vecs.at(i, vj);
  }
  return std::abs(dot) / std::sqrt(na * nb);
}

}  // namespace fixtures
