#include "nef/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "nef/rng.hpp"
#include "nef/volume.hpp"

namespace nef {

namespace {

// Texture and embedding knobs. The per-patch embedding walks a unit ring:
// each class owns one sector of it, and a global per-image style phase
// sweeps the sector as the dataset progresses, so a class's patches form a
// dense arc and the arcs of all classes tile the ring. The class offset
// (kLateralScale) is what keeps nearest neighbors inside the class where
// two arcs meet: the farthest within-class candidate a patch ever needs is
// a few phase steps away, while a cross-class pair pays kLateralScale^2 of
// cosine, an order of magnitude more than those steps cost. Phase jitter
// overlaps consecutive images so class subgraphs stay connected even where
// an image contributes few patches of a class. The position channels sit
// below all of this and only break ties among same-class peers; spherical
// clustering of the raw features, by contrast, sees one nearly uniform
// ring and has no reason to cut it at class boundaries.
constexpr double kPixelNoise = 0.05;     // uniform, per pixel and channel
constexpr double kRenderDrift = 0.04;    // hue-wheel fraction swept by the style phase
constexpr double kLateralScale = 0.3;    // class offset off the ring plane
// Jitter must overlap the arcs of consecutive images: a node with more
// members than k otherwise fills every neighbor slot with same-image
// siblings and its class chain falls apart into per-image cliques. The
// fraction is of the per-image phase step; the cap keeps one class's
// spill past a sector boundary shallow enough for the lateral margin.
constexpr double kJitterFrac = 0.7;
constexpr double kJitterCap = 0.21;      // radians, about 12 degrees
constexpr double kColorScale = 0.1;      // scale of the mean-color channels
constexpr double kFeatureNoise = 0.005;  // uniform, per feature channel
constexpr double kPositionScale = 0.03;  // range of the two position channels
constexpr int kPlacementAttempts = 16;

std::array<double, 3> hsv_unit(double h, double s, double v) {
  double r = 0, g = 0, b = 0;
  double i = std::floor(h * 6.0);
  double f = h * 6.0 - i;
  double p = v * (1.0 - s), q = v * (1.0 - f * s), t = v * (1.0 - (1.0 - f) * s);
  switch (static_cast<int>(i) % 6) {
    case 0: r = v; g = t; b = p; break;
    case 1: r = q; g = v; b = p; break;
    case 2: r = p; g = v; b = t; break;
    case 3: r = p; g = q; b = v; break;
    case 4: r = t; g = p; b = v; break;
    default: r = v; g = p; b = q; break;
  }
  return {r, g, b};
}

// Rotate a color around the hue wheel, keeping saturation and value. The
// drift stays well under half the hue separation of the palette anchors,
// so the nearest anchor of a drifted pixel is still its own class.
std::array<double, 3> shift_hue(const std::array<double, 3>& rgb, double shift) {
  double mx = std::max({rgb[0], rgb[1], rgb[2]});
  double mn = std::min({rgb[0], rgb[1], rgb[2]});
  double d = mx - mn;
  if (d <= 0.0) return rgb;
  double h;
  if (mx == rgb[0])
    h = std::fmod((rgb[1] - rgb[2]) / d + 6.0, 6.0);
  else if (mx == rgb[1])
    h = (rgb[2] - rgb[0]) / d + 2.0;
  else
    h = (rgb[0] - rgb[1]) / d + 4.0;
  return hsv_unit(std::fmod(h / 6.0 + shift + 2.0, 1.0), d / mx, mx);
}

}  // namespace

void SceneSpec::validate() const {
  if (n_images < 1) throw ConfigError("synthetic: n_images must be at least 1");
  if (height < 1 || width < 1) throw ConfigError("synthetic: canvas must be non-empty");
  if (patch < 1) throw ConfigError("synthetic: patch must be at least 1");
  if (height % patch != 0 || width % patch != 0)
    throw ConfigError("synthetic: patch " + std::to_string(patch) + " must divide " +
                      std::to_string(height) + "x" + std::to_string(width));
  if (n_classes < 1) throw ConfigError("synthetic: need at least the background class");
  if (n_shapes < 0) throw ConfigError("synthetic: n_shapes must be non-negative");
  if (n_shapes > 0 && n_classes < 2)
    throw ConfigError("synthetic: shapes need at least one non-background class");
  if (n_shapes > 0 && std::min(height / patch, width / patch) < 3)
    throw ConfigError("synthetic: canvas " + std::to_string(height) + "x" +
                      std::to_string(width) + " holds too few patches for shapes");
}

std::vector<std::array<double, 3>> synthetic_palette(std::int64_t n_classes) {
  std::vector<std::array<double, 3>> pal;
  pal.reserve(static_cast<std::size_t>(n_classes));
  pal.push_back({0.25, 0.25, 0.28});  // background
  const std::array<double, 3> primaries[3] = {
      {0.85, 0.10, 0.10}, {0.10, 0.80, 0.15}, {0.12, 0.18, 0.85}};
  for (std::int64_t c = 1; c < n_classes; ++c) {
    if (c <= 3) {
      pal.push_back(primaries[c - 1]);
    } else {
      double hue = std::fmod(0.61803398874989485 * static_cast<double>(c - 3) + 0.1, 1.0);
      pal.push_back(hsv_unit(hue, 0.85, 0.9));
    }
  }
  return pal;
}

SyntheticDataset generate_synthetic(const SceneSpec& spec) {
  spec.validate();
  auto palette = synthetic_palette(spec.n_classes);
  std::int64_t ph = spec.height / spec.patch;
  std::int64_t pw = spec.width / spec.patch;
  std::int64_t c_feat = 8 + spec.n_classes;

  SyntheticDataset ds;
  ds.container.n_images = spec.n_images;
  ds.container.h = ph;
  ds.container.w = pw;
  ds.container.c = c_feat;
  ds.container.patch_size = spec.patch;
  ds.container.has_pixels = true;
  ds.container.features.reserve(
      static_cast<std::size_t>(spec.n_images * ph * pw * c_feat));
  ds.container.pixels.reserve(static_cast<std::size_t>(spec.n_images * ph * pw * 3));

  double step = 2.0 * std::numbers::pi /
                static_cast<double>(spec.n_classes * spec.n_images);
  double jitter = std::min(kJitterFrac * step, kJitterCap);

  CounterRng root(spec.seed);
  for (std::int64_t img = 0; img < spec.n_images; ++img) {
    CounterRng rng = root.fork(1000 + static_cast<std::uint64_t>(img));

    // geometry first, pixels second: the mask is authoritative, and drawing
    // is retried when occlusion erases a class this image was meant to show,
    // so every class keeps an unbroken chain of images along its arc
    SegmentationMask mask(spec.height, spec.width);
    for (int attempt = 0; attempt < kPlacementAttempts; ++attempt) {
      mask = SegmentationMask(spec.height, spec.width);
      std::vector<char> wanted(static_cast<std::size_t>(spec.n_classes), 0);
      wanted[0] = 1;
      for (std::int64_t s = 0; s < spec.n_shapes; ++s) {
        // classes rotate so none of them starves, and geometry snaps to the
        // patch grid so every patch is single-class
        auto cls = static_cast<std::int32_t>(
            1 + (img * spec.n_shapes + s) % (spec.n_classes - 1));
        wanted[static_cast<std::size_t>(cls)] = 1;
        bool ellipse = rng.uniform() < 0.5;
        auto span = [&](std::int64_t limit) {
          std::int64_t hi = std::max<std::int64_t>(2, limit / 2);
          return 2 + static_cast<std::int64_t>(
                         rng.uniform_index(static_cast<std::uint64_t>(hi - 1)));
        };
        std::int64_t eh = span(ph);  // extent in patch rows
        std::int64_t ew = span(pw);
        std::int64_t r0 = static_cast<std::int64_t>(
            rng.uniform_index(static_cast<std::uint64_t>(ph - eh + 1)));
        std::int64_t c0 = static_cast<std::int64_t>(
            rng.uniform_index(static_cast<std::uint64_t>(pw - ew + 1)));

        for (std::int64_t i = 0; i < eh; ++i)
          for (std::int64_t j = 0; j < ew; ++j) {
            if (ellipse) {
              double dr = (static_cast<double>(i) + 0.5) / static_cast<double>(eh) * 2.0 - 1.0;
              double dc = (static_cast<double>(j) + 0.5) / static_cast<double>(ew) * 2.0 - 1.0;
              if (dr * dr + dc * dc > 1.0) continue;
            }
            for (std::int64_t r = (r0 + i) * spec.patch; r < (r0 + i + 1) * spec.patch; ++r)
              for (std::int64_t c = (c0 + j) * spec.patch; c < (c0 + j + 1) * spec.patch; ++c)
                mask.at(r, c) = cls;
          }
      }
      std::vector<char> present(static_cast<std::size_t>(spec.n_classes), 0);
      for (auto l : mask.labels) present[static_cast<std::size_t>(l)] = 1;
      if (std::equal(wanted.begin(), wanted.end(), present.begin(),
                     [](char w, char p) { return !w || p; }))
        break;
    }

    // one style phase per image: rendered hues drift with it, and the patch
    // embeddings advance along their class arcs by the same clock
    double style = (static_cast<double>(img) + 0.5) / static_cast<double>(spec.n_images);
    double drift = kRenderDrift * (style - 0.5);

    Volume canvas(spec.height, spec.width, 3);
    for (std::int64_t r = 0; r < spec.height; ++r)
      for (std::int64_t c = 0; c < spec.width; ++c) {
        auto color = shift_hue(palette[static_cast<std::size_t>(mask.at(r, c))], drift);
        for (std::int64_t ch = 0; ch < 3; ++ch)
          canvas.at(r, c, ch) = std::clamp(
              color[static_cast<std::size_t>(ch)] + rng.uniform(-kPixelNoise, kPixelNoise),
              0.0, 1.0);
      }

    // quantize to 8 bits first so the pixel-derived channels match the PPM
    RgbImage rendered = to_rgb8(canvas);
    Volume quantized = from_rgb8(rendered);
    ds.images.push_back(std::move(rendered));

    for (std::int64_t pr = 0; pr < ph; ++pr)
      for (std::int64_t pc = 0; pc < pw; ++pc) {
        auto cls = mask.at(pr * spec.patch, pc * spec.patch);
        double mean[3] = {0, 0, 0}, var[3] = {0, 0, 0};
        auto np = static_cast<double>(spec.patch * spec.patch);
        for (std::int64_t r = pr * spec.patch; r < (pr + 1) * spec.patch; ++r)
          for (std::int64_t c = pc * spec.patch; c < (pc + 1) * spec.patch; ++c)
            for (std::int64_t ch = 0; ch < 3; ++ch) mean[ch] += quantized.at(r, c, ch);
        for (double& m : mean) m /= np;
        for (std::int64_t r = pr * spec.patch; r < (pr + 1) * spec.patch; ++r)
          for (std::int64_t c = pc * spec.patch; c < (pc + 1) * spec.patch; ++c)
            for (std::int64_t ch = 0; ch < 3; ++ch) {
              double d = quantized.at(r, c, ch) - mean[ch];
              var[ch] += d * d;
            }
        for (double& v : var) v /= np;

        double phase =
            2.0 * std::numbers::pi *
                (static_cast<double>(cls) + style) / static_cast<double>(spec.n_classes) +
            rng.uniform(-jitter, jitter);
        double prn = ph > 1 ? static_cast<double>(pr) / static_cast<double>(ph - 1) : 0.5;
        double pcn = pw > 1 ? static_cast<double>(pc) / static_cast<double>(pw - 1) : 0.5;

        std::vector<double> feat;
        feat.reserve(static_cast<std::size_t>(c_feat));
        feat.push_back(std::cos(phase));
        feat.push_back(std::sin(phase));
        for (std::int64_t c = 0; c < spec.n_classes; ++c)
          feat.push_back(c == cls ? kLateralScale : 0.0);
        feat.push_back(kPositionScale * prn);
        feat.push_back(kPositionScale * pcn);
        for (double m : mean) feat.push_back(kColorScale * m);
        feat.push_back((var[0] + var[1] + var[2]) / 3.0);
        for (double x : feat)
          ds.container.features.push_back(
              static_cast<float>(x + rng.uniform(-kFeatureNoise, kFeatureNoise)));
      }

    Volume planes = downsample_image(quantized, spec.patch);
    for (double x : planes.data) ds.container.pixels.push_back(static_cast<float>(x));
    ds.masks.push_back(std::move(mask));
  }

  ds.container.validate();
  return ds;
}

}  // namespace nef
