#pragma once

#include <cstdint>
#include <filesystem>
#include <string>

#include "nef/errors.hpp"

namespace nef {

// Flat key = value run configuration ('#' starts a comment, blank lines
// ignored, unknown keys rejected). Three fields are derived when left at
// their sentinel: beta < 0 scales linearly with the eigenfunction count,
// width 0 tracks max(64, K), n_clusters 0 tracks K.
struct RunConfig {
  std::int64_t n_eigenfuncs = 256;  // key "K"
  double beta = -1.0;               // penalty weight; derived 0.08 * K / 256
  double alpha = 0.3;               // spatial-affinity weight
  std::int64_t k = 256;             // semantic k-NN fan-out
  std::int64_t k_tilde = 8;         // spatial k-NN fan-out
  std::int64_t batch_images = 16;   // images per training batch
  std::int64_t epochs = 40;
  double lr = 1e-3;                 // peak learning rate, cosine to 0
  double tau_start = 1.0;           // Gumbel-Softmax temperature schedule
  double tau_end = 0.3;
  std::uint64_t seed = 0;
  std::int64_t width = 0;           // model width d; 0 = max(64, K)
  std::int64_t n_blocks = 2;        // attention blocks; 0 = linear model
  bool quantize = true;             // train through the quantization path
  bool hard_gumbel = false;         // straight-through one-hot samples
  std::int64_t n_clusters = 0;      // clusters for evaluation; 0 = K

  double beta_effective() const {
    return beta < 0.0 ? 0.08 * static_cast<double>(n_eigenfuncs) / 256.0 : beta;
  }
  std::int64_t width_effective() const {
    return width == 0 ? std::max<std::int64_t>(64, n_eigenfuncs) : width;
  }
  std::int64_t clusters_effective() const { return n_clusters == 0 ? n_eigenfuncs : n_clusters; }

  void validate() const;
};

RunConfig parse_config_text(const std::string& text);
RunConfig parse_config(const std::filesystem::path& path);

// Every key with its effective value, parseable by parse_config_text.
std::string config_to_text(const RunConfig& cfg);

}  // namespace nef
