#include "nef/patchset.hpp"

#include <cmath>
#include <numeric>
#include <string>

namespace nef {

void PatchSet::validate() const {
  if (n <= 0) throw DataError("patchset: empty");
  if (features.rows != n || features.cols != c)
    throw DimensionError("patchset: feature shape " + features.shape_str() + " does not match n=" +
                         std::to_string(n) + " c=" + std::to_string(c));
  if (coords.rows != n || coords.cols != 5)
    throw DimensionError("patchset: coords must be (n, 5), got " + coords.shape_str());
  if (static_cast<std::int64_t>(image_id.size()) != n ||
      static_cast<std::int64_t>(global_index.size()) != n)
    throw DimensionError("patchset: id arrays do not match n");
  for (std::int64_t i = 0; i < n; ++i) {
    double norm2 = 0.0;
    for (std::int64_t j = 0; j < c; ++j) {
      double v = features.at(i, j);
      if (!std::isfinite(v)) throw DataError("patchset: non-finite feature in row " + std::to_string(i));
      norm2 += v * v;
    }
    if (norm2 == 0.0)
      throw DataError("patchset: feature row " + std::to_string(i) + " is all zero");
    for (std::int64_t j = 0; j < 5; ++j) {
      double v = coords.at(i, j);
      if (!std::isfinite(v) || v < 0.0 || v > 1.0)
        throw DataError("patchset: coord outside [0, 1] in row " + std::to_string(i));
    }
    if (i > 0 && image_id[static_cast<std::size_t>(i)] < image_id[static_cast<std::size_t>(i - 1)])
      throw DataError("patchset: image ids must be non-decreasing");
  }
}

PatchSet assemble_patchset(const FeatureContainer& fc, std::span<const std::int64_t> images) {
  if (images.empty()) throw DataError("patchset: no images selected");
  for (std::size_t i = 0; i < images.size(); ++i) {
    if (images[i] < 0 || images[i] >= fc.n_images)
      throw DataError("patchset: image index " + std::to_string(images[i]) + " out of range");
    if (i > 0 && images[i] <= images[i - 1])
      throw DataError("patchset: image list must be strictly ascending");
  }
  std::int64_t per = fc.patches_per_image();
  PatchSet ps;
  ps.n = static_cast<std::int64_t>(images.size()) * per;
  ps.c = fc.c;
  ps.features = Tensor<double>(ps.n, fc.c);
  ps.coords = Tensor<double>(ps.n, 5);
  ps.image_id.resize(static_cast<std::size_t>(ps.n));
  ps.global_index.resize(static_cast<std::size_t>(ps.n));

  double rdiv = fc.h > 1 ? static_cast<double>(fc.h - 1) : 1.0;
  double cdiv = fc.w > 1 ? static_cast<double>(fc.w - 1) : 1.0;

  std::int64_t out = 0;
  for (std::int64_t img : images) {
    auto feat = fc.image_features(img);
    std::span<const float> pix;
    if (fc.has_pixels) pix = fc.image_pixels(img);
    for (std::int64_t r = 0; r < fc.h; ++r) {
      for (std::int64_t col = 0; col < fc.w; ++col) {
        std::int64_t p = r * fc.w + col;
        for (std::int64_t ch = 0; ch < fc.c; ++ch)
          ps.features.at(out, ch) = static_cast<double>(feat[static_cast<std::size_t>(p * fc.c + ch)]);
        ps.coords.at(out, 0) = static_cast<double>(r) / rdiv;
        ps.coords.at(out, 1) = static_cast<double>(col) / cdiv;
        for (std::int64_t ch = 0; ch < 3; ++ch)
          ps.coords.at(out, 2 + ch) =
              fc.has_pixels ? static_cast<double>(pix[static_cast<std::size_t>(p * 3 + ch)]) : 0.5;
        ps.image_id[static_cast<std::size_t>(out)] = img;
        ps.global_index[static_cast<std::size_t>(out)] = img * per + p;
        ++out;
      }
    }
  }
  ps.validate();
  return ps;
}

PatchSet assemble_full_patchset(const FeatureContainer& fc) {
  std::vector<std::int64_t> all(static_cast<std::size_t>(fc.n_images));
  std::iota(all.begin(), all.end(), 0);
  return assemble_patchset(fc, all);
}

}  // namespace nef
