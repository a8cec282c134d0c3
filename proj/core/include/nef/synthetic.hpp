#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "nef/errors.hpp"
#include "nef/feature_io.hpp"
#include "nef/image_io.hpp"
#include "nef/segmentation.hpp"

namespace nef {

// Scene recipe for the desk-scale dataset: axis-aligned rectangles and
// ellipses in per-class colors over a textured background, with a slow
// hue drift across the dataset. Class 0 is the background; shapes carry
// classes 1..n_classes-1, rotating so every class appears. Shape geometry
// snaps to the patch grid, so each patch holds exactly one class.
struct SceneSpec {
  std::int64_t n_images = 20;
  std::int64_t height = 64;
  std::int64_t width = 64;
  std::int64_t n_shapes = 3;   // shapes per image, drawn back to front
  std::int64_t n_classes = 4;  // including the background class
  std::int64_t patch = 8;      // feature patch stride; must divide both sides
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  std::vector<RgbImage> images;
  std::vector<SegmentationMask> masks;  // pixel-level; label = topmost shape class
  FeatureContainer container;           // per-patch features + pixel planes
};

// Base color of each class; index 0 is the background gray, the rest walk
// the hue circle so classes stay far apart in RGB.
std::vector<std::array<double, 3>> synthetic_palette(std::int64_t n_classes);

// Per-patch features, c = 8 + n_classes, standing in for embeddings from a
// frozen backbone under a slow appearance drift: a point on a unit ring (2)
// at the patch's class sector plus a per-image style phase, a short class
// offset off the ring plane (n_classes), patch position scaled to a short
// range (2), scaled mean color (3), and mean pixel variance (1). Locally
// each class arc is dense, so nearest neighbors stay within class and the
// affinity graph splits into one community per class; globally the arcs
// tile the ring, so clustering the raw features with a spherical method
// cuts it at arbitrary phase rather than at class boundaries. That gap is
// what separates graph methods from the raw-feature baseline on this data.
SyntheticDataset generate_synthetic(const SceneSpec& spec);

}  // namespace nef
