#pragma once

#include <filesystem>

#include "nef/eigenmodel.hpp"

namespace nef {

// Binary model file: magic "NEFM", u32 format version (1), u32 architecture
// header (n_blocks, d, K, c), then every parameter tensor as little-endian
// 32-bit floats, row-major, in the parameters() order. Round trips are
// byte-exact.
void save_model(const EigenModel<float>& m, const std::filesystem::path& path);
EigenModel<float> load_model(const std::filesystem::path& path);

}  // namespace nef
