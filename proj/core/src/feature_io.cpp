#include "nef/feature_io.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

namespace nef {

static_assert(std::endian::native == std::endian::little,
              "container codec assumes a little-endian host");

namespace {

void put_u32(std::ofstream& out, std::uint32_t v) {
  out.write(reinterpret_cast<const char*>(&v), 4);
}

std::uint32_t get_u32(std::ifstream& in, const char* what) {
  std::uint32_t v = 0;
  in.read(reinterpret_cast<char*>(&v), 4);
  if (!in) throw DataError(std::string("container: truncated while reading ") + what);
  return v;
}

void check_floats(const std::vector<float>& v, const char* what, bool unit_range) {
  for (float x : v) {
    if (!std::isfinite(x)) throw DataError(std::string("container: non-finite ") + what);
    if (unit_range && (x < 0.0f || x > 1.0f))
      throw DataError(std::string("container: ") + what + " outside [0, 1]");
  }
}

}  // namespace

void FeatureContainer::validate() const {
  if (n_images <= 0 || h <= 0 || w <= 0 || c <= 0)
    throw DataError("container: dimensions must be positive, got n_images=" +
                    std::to_string(n_images) + " h=" + std::to_string(h) + " w=" +
                    std::to_string(w) + " c=" + std::to_string(c));
  if (patch_size <= 0) throw DataError("container: patch size must be positive");
  std::size_t want = static_cast<std::size_t>(n_images * h * w * c);
  if (features.size() != want)
    throw DataError("container: feature payload holds " + std::to_string(features.size()) +
                    " floats, header declares " + std::to_string(want));
  check_floats(features, "feature value", false);
  if (has_pixels) {
    std::size_t wantp = static_cast<std::size_t>(n_images * h * w * 3);
    if (pixels.size() != wantp)
      throw DataError("container: pixel payload holds " + std::to_string(pixels.size()) +
                      " floats, header declares " + std::to_string(wantp));
    check_floats(pixels, "pixel value", true);
  } else if (!pixels.empty()) {
    throw DataError("container: pixel planes present but flag unset");
  }
}

void write_container(const FeatureContainer& fc, const std::filesystem::path& path) {
  fc.validate();
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("container: cannot open " + path.string() + " for writing");
  out.write("NEFB", 4);
  put_u32(out, 1);
  put_u32(out, static_cast<std::uint32_t>(fc.n_images));
  put_u32(out, static_cast<std::uint32_t>(fc.h));
  put_u32(out, static_cast<std::uint32_t>(fc.w));
  put_u32(out, static_cast<std::uint32_t>(fc.c));
  put_u32(out, static_cast<std::uint32_t>(fc.patch_size));
  put_u32(out, fc.has_pixels ? 1u : 0u);
  out.write(reinterpret_cast<const char*>(fc.features.data()),
            static_cast<std::streamsize>(fc.features.size() * 4));
  if (fc.has_pixels)
    out.write(reinterpret_cast<const char*>(fc.pixels.data()),
              static_cast<std::streamsize>(fc.pixels.size() * 4));
  if (!out) throw DataError("container: write failed for " + path.string());
}

FeatureContainer read_container(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("container: cannot open " + path.string());
  char magic[4] = {};
  in.read(magic, 4);
  if (!in || std::memcmp(magic, "NEFB", 4) != 0)
    throw DataError("container: bad magic in " + path.string());
  std::uint32_t version = get_u32(in, "version");
  if (version != 1)
    throw DataError("container: unsupported version " + std::to_string(version));
  FeatureContainer fc;
  fc.n_images = get_u32(in, "n_images");
  fc.h = get_u32(in, "height");
  fc.w = get_u32(in, "width");
  fc.c = get_u32(in, "channels");
  fc.patch_size = get_u32(in, "patch_size");
  std::uint32_t flags = get_u32(in, "flags");
  if (flags > 1) throw DataError("container: unknown flag bits set");
  fc.has_pixels = (flags & 1u) != 0;
  if (fc.n_images <= 0 || fc.h <= 0 || fc.w <= 0 || fc.c <= 0 || fc.patch_size <= 0)
    throw DataError("container: non-positive dimension in header");

  std::size_t nfeat = static_cast<std::size_t>(fc.n_images * fc.h * fc.w * fc.c);
  std::size_t npix = fc.has_pixels ? static_cast<std::size_t>(fc.n_images * fc.h * fc.w * 3) : 0;
  std::size_t expect_bytes = (nfeat + npix) * 4;

  auto start = in.tellg();
  in.seekg(0, std::ios::end);
  std::size_t actual_bytes = static_cast<std::size_t>(in.tellg() - start);
  in.seekg(start);
  if (actual_bytes != expect_bytes)
    throw DataError("container: payload is " + std::to_string(actual_bytes) +
                    " bytes, header declares " + std::to_string(expect_bytes));

  fc.features.resize(nfeat);
  in.read(reinterpret_cast<char*>(fc.features.data()), static_cast<std::streamsize>(nfeat * 4));
  if (fc.has_pixels) {
    fc.pixels.resize(npix);
    in.read(reinterpret_cast<char*>(fc.pixels.data()), static_cast<std::streamsize>(npix * 4));
  }
  if (!in) throw DataError("container: truncated payload in " + path.string());
  fc.validate();
  return fc;
}

namespace {

// symmetric reflection: pad index k in [0, padded) maps back into [0, n)
std::int64_t reflect(std::int64_t k, std::int64_t n) {
  if (k < n) return k;
  std::int64_t over = k - n;
  std::int64_t r = n - 1 - over;
  return r < 0 ? 0 : r;
}

}  // namespace

Volume downsample_image(const Volume& img, std::int64_t patch) {
  if (patch <= 0) throw ConfigError("downsample_image: patch must be positive");
  if (img.h <= 0 || img.w <= 0) throw DimensionError("downsample_image: empty image");
  std::int64_t ph = (img.h + patch - 1) / patch * patch;
  std::int64_t pw = (img.w + patch - 1) / patch * patch;

  const Volume* src = &img;
  Volume padded;
  if (ph != img.h || pw != img.w) {
    padded = Volume(ph, pw, img.c);
    for (std::int64_t r = 0; r < ph; ++r)
      for (std::int64_t col = 0; col < pw; ++col)
        for (std::int64_t ch = 0; ch < img.c; ++ch)
          padded.at(r, col, ch) = img.at(reflect(r, img.h), reflect(col, img.w), ch);
    src = &padded;
  }

  std::int64_t oh = ph / patch, ow = pw / patch;
  Volume out(oh, ow, img.c);
  double scale = static_cast<double>(patch);
  for (std::int64_t r = 0; r < oh; ++r) {
    double ys = (static_cast<double>(r) + 0.5) * scale - 0.5;
    ys = std::clamp(ys, 0.0, static_cast<double>(ph - 1));
    std::int64_t y0 = static_cast<std::int64_t>(std::floor(ys));
    std::int64_t y1 = std::min(y0 + 1, ph - 1);
    double fy = ys - static_cast<double>(y0);
    for (std::int64_t col = 0; col < ow; ++col) {
      double xs = (static_cast<double>(col) + 0.5) * scale - 0.5;
      xs = std::clamp(xs, 0.0, static_cast<double>(pw - 1));
      std::int64_t x0 = static_cast<std::int64_t>(std::floor(xs));
      std::int64_t x1 = std::min(x0 + 1, pw - 1);
      double fx = xs - static_cast<double>(x0);
      for (std::int64_t ch = 0; ch < img.c; ++ch) {
        double top = src->at(y0, x0, ch) * (1.0 - fx) + src->at(y0, x1, ch) * fx;
        double bot = src->at(y1, x0, ch) * (1.0 - fx) + src->at(y1, x1, ch) * fx;
        out.at(r, col, ch) = top * (1.0 - fy) + bot * fy;
      }
    }
  }
  return out;
}

}  // namespace nef
