#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "nef/feature_io.hpp"
#include "nef/tensor.hpp"

namespace nef {

// A flat batch of patches drawn from whole images, in ascending image order.
// features drive the semantic affinity graph; coords holds one
// (row, col, r, g, b) vector per patch, all five components in [0, 1], and
// drives the spatial-color graph. image_id marks graph block boundaries;
// global_index is each patch's position in the full dataset, which lets a
// caller slice rows out of a precomputed full kernel.
struct PatchSet {
  std::int64_t n = 0;
  std::int64_t c = 0;
  Tensor<double> features;        // (n, c)
  Tensor<double> coords;          // (n, 5)
  std::vector<std::int64_t> image_id;
  std::vector<std::int64_t> global_index;

  void validate() const;
};

// Assembles the patches of the given images (must be strictly ascending).
// Row/col coordinates are normalized by (h - 1) and (w - 1); colors come from
// the container's pixel planes. Without planes the coords default to colors
// 0.5 (only acceptable when the spatial graph is disabled; the kernel builder
// enforces that).
PatchSet assemble_patchset(const FeatureContainer& fc, std::span<const std::int64_t> images);

PatchSet assemble_full_patchset(const FeatureContainer& fc);

}  // namespace nef
