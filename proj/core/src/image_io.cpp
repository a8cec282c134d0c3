#include "nef/image_io.hpp"

#include <cmath>
#include <fstream>
#include <string>

namespace nef {

namespace {

void write_pnm(const std::filesystem::path& path, const char* magic, std::int64_t w,
               std::int64_t h, const std::vector<std::uint8_t>& payload) {
  if (h <= 0 || w <= 0) throw DataError("pnm: empty image");
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("pnm: cannot open " + path.string() + " for writing");
  out << magic << "\n" << w << " " << h << "\n255\n";
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
  if (!out) throw DataError("pnm: write failed for " + path.string());
}

// header tokens may be separated by whitespace and '#' comments that run to
// end of line
std::int64_t read_header_int(std::ifstream& in, const std::filesystem::path& path) {
  int ch = in.get();
  while (in) {
    if (ch == '#') {
      while (in && ch != '\n') ch = in.get();
    } else if (std::isspace(ch)) {
      ch = in.get();
    } else {
      break;
    }
  }
  if (!in || !std::isdigit(ch)) throw DataError("pnm: malformed header in " + path.string());
  std::int64_t v = 0;
  while (in && std::isdigit(ch)) {
    v = v * 10 + (ch - '0');
    ch = in.get();
  }
  if (!std::isspace(ch)) throw DataError("pnm: malformed header in " + path.string());
  return v;
}

std::vector<std::uint8_t> read_pnm(const std::filesystem::path& path, const char* want_magic,
                                   std::int64_t channels, std::int64_t& h, std::int64_t& w) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("pnm: cannot open " + path.string());
  char m0 = static_cast<char>(in.get());
  char m1 = static_cast<char>(in.get());
  if (!in || m0 != want_magic[0] || m1 != want_magic[1])
    throw DataError("pnm: " + path.string() + " is not a binary " + want_magic + " file");
  w = read_header_int(in, path);
  h = read_header_int(in, path);
  std::int64_t maxval = read_header_int(in, path);
  if (w <= 0 || h <= 0) throw DataError("pnm: empty raster in " + path.string());
  if (maxval != 255)
    throw DataError("pnm: only maxval 255 is supported, " + path.string() + " declares " +
                    std::to_string(maxval));
  std::vector<std::uint8_t> payload(static_cast<std::size_t>(h * w * channels));
  in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
  if (static_cast<std::size_t>(in.gcount()) != payload.size())
    throw DataError("pnm: truncated payload in " + path.string());
  return payload;
}

}  // namespace

void write_pgm(const GrayImage& img, const std::filesystem::path& path) {
  write_pnm(path, "P5", img.w, img.h, img.pix);
}

GrayImage read_pgm(const std::filesystem::path& path) {
  GrayImage img;
  img.pix = read_pnm(path, "P5", 1, img.h, img.w);
  return img;
}

void write_ppm(const RgbImage& img, const std::filesystem::path& path) {
  write_pnm(path, "P6", img.w, img.h, img.pix);
}

RgbImage read_ppm(const std::filesystem::path& path) {
  RgbImage img;
  img.pix = read_pnm(path, "P6", 3, img.h, img.w);
  return img;
}

RgbImage to_rgb8(const Volume& v) {
  if (v.c != 3) throw DimensionError("to_rgb8: expected 3 channels, got " + v.shape_str());
  RgbImage img(v.h, v.w);
  for (std::size_t i = 0; i < img.pix.size(); ++i) {
    double x = std::clamp(v.data[i], 0.0, 1.0);
    img.pix[i] = static_cast<std::uint8_t>(std::lround(x * 255.0));
  }
  return img;
}

Volume from_rgb8(const RgbImage& img) {
  Volume v(img.h, img.w, 3);
  for (std::size_t i = 0; i < img.pix.size(); ++i)
    v.data[i] = static_cast<double>(img.pix[i]) / 255.0;
  return v;
}

namespace {

Rgb8 hsv_to_rgb8(double hue, double sat, double val) {
  double h6 = hue * 6.0;
  int sector = static_cast<int>(h6) % 6;
  double f = h6 - std::floor(h6);
  double p = val * (1.0 - sat);
  double q = val * (1.0 - sat * f);
  double t = val * (1.0 - sat * (1.0 - f));
  double r, g, b;
  switch (sector) {
    case 0: r = val; g = t; b = p; break;
    case 1: r = q; g = val; b = p; break;
    case 2: r = p; g = val; b = t; break;
    case 3: r = p; g = q; b = val; break;
    case 4: r = t; g = p; b = val; break;
    default: r = val; g = p; b = q; break;
  }
  auto u8 = [](double x) { return static_cast<std::uint8_t>(std::lround(x * 255.0)); };
  return {u8(r), u8(g), u8(b)};
}

}  // namespace

const std::array<Rgb8, 256>& label_palette() {
  static const std::array<Rgb8, 256> table = [] {
    std::array<Rgb8, 256> t{};
    t[0] = {40, 40, 40};
    const double golden = 0.61803398874989484820;
    for (int i = 1; i < 256; ++i) {
      double hue = std::fmod(static_cast<double>(i) * golden, 1.0);
      t[static_cast<std::size_t>(i)] = hsv_to_rgb8(hue, 0.68, 0.95);
    }
    return t;
  }();
  return table;
}

RgbImage colorize_labels(const GrayImage& labels) {
  const auto& pal = label_palette();
  RgbImage img(labels.h, labels.w);
  for (std::size_t i = 0; i < labels.pix.size(); ++i) {
    Rgb8 c = pal[labels.pix[i]];
    img.pix[i * 3 + 0] = c.r;
    img.pix[i * 3 + 1] = c.g;
    img.pix[i * 3 + 2] = c.b;
  }
  return img;
}

}  // namespace nef
