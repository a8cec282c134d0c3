#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "nef/errors.hpp"

namespace nef {

// Dense (height, width, channels) array, row-major with channels innermost.
// Used for images, per-pixel logits and heatmaps.
struct Volume {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::int64_t c = 0;
  std::vector<double> data;

  Volume() = default;
  Volume(std::int64_t h_, std::int64_t w_, std::int64_t c_) : h(h_), w(w_), c(c_) {
    if (h < 0 || w < 0 || c < 0) throw DimensionError("volume: negative dimension");
    data.assign(static_cast<std::size_t>(h * w * c), 0.0);
  }

  double& at(std::int64_t r, std::int64_t col, std::int64_t ch) {
    return data[static_cast<std::size_t>((r * w + col) * c + ch)];
  }
  double at(std::int64_t r, std::int64_t col, std::int64_t ch) const {
    return data[static_cast<std::size_t>((r * w + col) * c + ch)];
  }

  std::string shape_str() const {
    return "(" + std::to_string(h) + ", " + std::to_string(w) + ", " + std::to_string(c) + ")";
  }
};

}  // namespace nef
