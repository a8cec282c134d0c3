#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "nef/errors.hpp"
#include "nef/volume.hpp"

namespace nef {

// 8-bit grayscale raster, used for label masks and heatmaps.
struct GrayImage {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::uint8_t> pix;

  GrayImage() = default;
  GrayImage(std::int64_t h_, std::int64_t w_) : h(h_), w(w_) {
    pix.assign(static_cast<std::size_t>(h * w), 0);
  }
  std::uint8_t& at(std::int64_t r, std::int64_t c) {
    return pix[static_cast<std::size_t>(r * w + c)];
  }
  std::uint8_t at(std::int64_t r, std::int64_t c) const {
    return pix[static_cast<std::size_t>(r * w + c)];
  }
};

struct RgbImage {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::uint8_t> pix;  // interleaved rgb

  RgbImage() = default;
  RgbImage(std::int64_t h_, std::int64_t w_) : h(h_), w(w_) {
    pix.assign(static_cast<std::size_t>(h * w * 3), 0);
  }
};

// Binary PGM (P5) and PPM (P6), maxval 255 only. The parsers accept header
// comments and arbitrary header whitespace but reject ASCII variants, other
// maxvals and short payloads.
void write_pgm(const GrayImage& img, const std::filesystem::path& path);
GrayImage read_pgm(const std::filesystem::path& path);
void write_ppm(const RgbImage& img, const std::filesystem::path& path);
RgbImage read_ppm(const std::filesystem::path& path);

// Converts a [0, 1] volume with 3 channels to interleaved 8-bit RGB
// (values clamped, rounded half up).
RgbImage to_rgb8(const Volume& v);
Volume from_rgb8(const RgbImage& img);

// Fixed 256-entry label palette: entry 0 is dark gray, entries 1..255 walk
// the hue circle by the golden ratio at fixed saturation/value, so nearby
// labels get visually distant colors. Deterministic, same table everywhere.
struct Rgb8 {
  std::uint8_t r, g, b;
};
const std::array<Rgb8, 256>& label_palette();

RgbImage colorize_labels(const GrayImage& labels);

}  // namespace nef
