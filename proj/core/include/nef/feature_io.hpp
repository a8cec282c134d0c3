#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "nef/errors.hpp"
#include "nef/volume.hpp"

namespace nef {

// Patch-feature dataset: n_images grids of h x w patches with c feature
// channels each, plus the patch stride in pixels and (optionally) the
// downsampled RGB planes the pixel-affinity graph is built from.
//
// On disk ("NEFB" container, version 1, all integers and floats
// little-endian):
//   bytes 0..3   magic "NEFB"
//   u32          version = 1
//   u32 x 5      n_images, h, w, c, patch_size
//   u32          flags, bit 0 = pixel planes present
//   f32 array    features, n_images * h * w * c, ordered (image, row, col,
//                channel)
//   f32 array    pixel planes in [0, 1], n_images * h * w * 3, same ordering
//                (present iff flag bit 0)
// Declared sizes must match the payload byte count exactly, and every float
// must be finite; read(write(x)) is byte-exact.
struct FeatureContainer {
  std::int64_t n_images = 0;
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t c = 0;
  std::int64_t patch_size = 1;
  std::vector<float> features;
  bool has_pixels = false;
  std::vector<float> pixels;

  std::int64_t patches_per_image() const { return h * w; }
  std::int64_t total_patches() const { return n_images * h * w; }

  std::span<const float> image_features(std::int64_t image) const {
    std::size_t stride = static_cast<std::size_t>(h * w * c);
    return {features.data() + static_cast<std::size_t>(image) * stride, stride};
  }
  std::span<const float> image_pixels(std::int64_t image) const {
    std::size_t stride = static_cast<std::size_t>(h * w * 3);
    return {pixels.data() + static_cast<std::size_t>(image) * stride, stride};
  }

  void validate() const;
};

void write_container(const FeatureContainer& fc, const std::filesystem::path& path);
FeatureContainer read_container(const std::filesystem::path& path);

// Bilinear point sampling at half-pixel centers, the same convention the
// mask upsampler uses: src = (dst + 0.5) * P - 0.5, clamped to the image.
// When a side is not divisible by P, the image is first padded to the next
// multiple by mirroring edge rows/columns (symmetric reflection).
Volume downsample_image(const Volume& img, std::int64_t patch);

}  // namespace nef
