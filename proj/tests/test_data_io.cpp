#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <vector>

#include "nef/config.hpp"
#include "nef/feature_io.hpp"
#include "nef/graph_kernel.hpp"
#include "nef/image_io.hpp"
#include "nef/oracle.hpp"
#include "nef/patchset.hpp"
#include "nef/rng.hpp"
#include "nef/synthetic.hpp"

using nef::CounterRng;
using nef::FeatureContainer;
using nef::GrayImage;
using nef::RgbImage;
using nef::SceneSpec;
using nef::Volume;

namespace {

std::filesystem::path temp_file(const char* name) {
  return std::filesystem::temp_directory_path() / name;
}

std::vector<char> slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

FeatureContainer small_container(bool pixels) {
  FeatureContainer fc;
  fc.n_images = 2;
  fc.h = 4;
  fc.w = 4;
  fc.c = 8;
  fc.patch_size = 8;
  CounterRng rng(3);
  fc.features.resize(static_cast<std::size_t>(2 * 4 * 4 * 8));
  for (auto& x : fc.features) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  fc.has_pixels = pixels;
  if (pixels) {
    fc.pixels.resize(static_cast<std::size_t>(2 * 4 * 4 * 3));
    for (auto& x : fc.pixels) x = static_cast<float>(rng.uniform(0.0, 1.0));
  }
  return fc;
}

}  // namespace

TEST_CASE("feature container round-trips byte-exactly") {
  for (bool pixels : {false, true}) {
    auto fc = small_container(pixels);
    auto path = temp_file("nef_test_container.nefb");
    nef::write_container(fc, path);
    auto bytes1 = slurp(path);

    auto back = nef::read_container(path);
    CHECK(back.n_images == fc.n_images);
    CHECK(back.h == fc.h);
    CHECK(back.w == fc.w);
    CHECK(back.c == fc.c);
    CHECK(back.patch_size == fc.patch_size);
    CHECK(back.has_pixels == fc.has_pixels);
    CHECK(back.features == fc.features);
    CHECK(back.pixels == fc.pixels);

    nef::write_container(back, path);
    CHECK(slurp(path) == bytes1);
    std::filesystem::remove(path);
  }
}

TEST_CASE("feature container file size is header plus payload") {
  auto fc = small_container(false);
  auto path = temp_file("nef_test_size.nefb");
  nef::write_container(fc, path);
  // 32-byte header, 2*4*4*8 floats
  CHECK(std::filesystem::file_size(path) == 32 + 1024);
  std::filesystem::remove(path);
}

TEST_CASE("feature container rejects damage") {
  auto fc = small_container(true);
  auto path = temp_file("nef_test_damage.nefb");
  nef::write_container(fc, path);
  auto bytes = slurp(path);

  {  // truncation
    std::ofstream out(path, std::ios::binary);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() - 7));
  }
  CHECK_THROWS_AS(nef::read_container(path), nef::DataError);

  {  // bad magic
    auto bad = bytes;
    bad[0] = 'X';
    std::ofstream out(path, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(nef::read_container(path), nef::DataError);

  {  // unknown version
    auto bad = bytes;
    bad[4] = 9;
    std::ofstream out(path, std::ios::binary);
    out.write(bad.data(), static_cast<std::streamsize>(bad.size()));
  }
  CHECK_THROWS_AS(nef::read_container(path), nef::DataError);
  std::filesystem::remove(path);
}

TEST_CASE("pgm and ppm round-trip and reject other formats") {
  GrayImage g(3, 5);
  for (std::size_t i = 0; i < g.pix.size(); ++i) g.pix[i] = static_cast<std::uint8_t>(17 * i);
  auto gpath = temp_file("nef_test.pgm");
  nef::write_pgm(g, gpath);
  auto g2 = nef::read_pgm(gpath);
  CHECK(g2.h == 3);
  CHECK(g2.w == 5);
  CHECK(g2.pix == g.pix);

  RgbImage rgb(2, 2);
  for (std::size_t i = 0; i < rgb.pix.size(); ++i) rgb.pix[i] = static_cast<std::uint8_t>(31 * i);
  auto cpath = temp_file("nef_test.ppm");
  nef::write_ppm(rgb, cpath);
  auto rgb2 = nef::read_ppm(cpath);
  CHECK(rgb2.pix == rgb.pix);

  {  // ascii magic is not in the supported subset
    std::ofstream out(gpath, std::ios::binary);
    out << "P2\n3 5\n255\n0 0 0\n";
  }
  CHECK_THROWS_AS(nef::read_pgm(gpath), nef::DataError);

  {  // 16-bit maxval rejected
    std::ofstream out(gpath, std::ios::binary);
    out << "P5\n2 2\n65535\n";
    out.write("\0\0\0\0\0\0\0\0", 8);
  }
  CHECK_THROWS_AS(nef::read_pgm(gpath), nef::DataError);

  {  // short payload
    std::ofstream out(gpath, std::ios::binary);
    out << "P5\n4 4\n255\n";
    out.write("abc", 3);
  }
  CHECK_THROWS_AS(nef::read_pgm(gpath), nef::DataError);

  std::filesystem::remove(gpath);
  std::filesystem::remove(cpath);
}

TEST_CASE("pgm reader tolerates header comments") {
  auto path = temp_file("nef_test_comment.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# a comment line\n2 # trailing\n1\n255\n";
    out.write("\x01\x02", 2);
  }
  auto img = nef::read_pgm(path);
  std::filesystem::remove(path);
  CHECK(img.w == 2);
  CHECK(img.h == 1);
  CHECK(img.pix == std::vector<std::uint8_t>{1, 2});
}

TEST_CASE("downsample examples") {
  // 1-D [0, 1, 2, 3] halved: centers at source 0.5 and 2.5
  Volume line(1, 4, 1);
  for (std::int64_t c = 0; c < 4; ++c) line.at(0, c, 0) = static_cast<double>(c);
  Volume half = nef::downsample_image(line, 2);
  CHECK(half.w == 2);
  CHECK(half.at(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(half.at(0, 1, 0) == doctest::Approx(2.5).epsilon(1e-15));

  Volume flat(6, 9, 3);
  for (auto& x : flat.data) x = 0.625;
  Volume down = nef::downsample_image(flat, 3);
  CHECK(down.h == 2);
  CHECK(down.w == 3);
  for (double x : down.data) CHECK(x == doctest::Approx(0.625).epsilon(1e-15));

  CounterRng rng(2);
  Volume noisy(5, 7, 2);
  for (auto& x : noisy.data) x = rng.uniform(0.0, 1.0);
  Volume same = nef::downsample_image(noisy, 1);
  CHECK(same.data == noisy.data);
}

TEST_CASE("config defaults and derivations") {
  auto cfg = nef::parse_config_text("");
  CHECK(cfg.n_eigenfuncs == 256);
  CHECK(cfg.beta_effective() == doctest::Approx(0.08).epsilon(1e-15));
  CHECK(cfg.alpha == 0.3);
  CHECK(cfg.k == 256);
  CHECK(cfg.k_tilde == 8);
  CHECK(cfg.batch_images == 16);
  CHECK(cfg.epochs == 40);
  CHECK(cfg.lr == 1e-3);
  CHECK(cfg.tau_start == 1.0);
  CHECK(cfg.tau_end == 0.3);
  CHECK(cfg.width_effective() == 256);
  CHECK(cfg.n_blocks == 2);
  CHECK(cfg.quantize);
  CHECK_FALSE(cfg.hard_gumbel);
  CHECK(cfg.clusters_effective() == 256);

  auto scaled = nef::parse_config_text("K = 512\n");
  CHECK(scaled.beta_effective() == doctest::Approx(0.16).epsilon(1e-15));
  CHECK(scaled.width_effective() == 512);

  auto small = nef::parse_config_text("K = 4\nwidth = 16\nn_clusters = 3\n");
  CHECK(small.beta_effective() == doctest::Approx(0.08 * 4 / 256).epsilon(1e-15));
  CHECK(small.width_effective() == 16);
  CHECK(small.clusters_effective() == 3);

  auto explicit_beta = nef::parse_config_text("beta = 2.5\n");
  CHECK(explicit_beta.beta_effective() == 2.5);
}

TEST_CASE("config parsing accepts comments and rejects junk") {
  auto cfg = nef::parse_config_text("# full line comment\n  K = 32   # trailing comment\n\n");
  CHECK(cfg.n_eigenfuncs == 32);

  CHECK_THROWS_AS(nef::parse_config_text("alpha = -1\n"), nef::ConfigError);
  CHECK_THROWS_AS(nef::parse_config_text("no_such_key = 1\n"), nef::ConfigError);
  CHECK_THROWS_AS(nef::parse_config_text("K = banana\n"), nef::ConfigError);
  CHECK_THROWS_AS(nef::parse_config_text("K 32\n"), nef::ConfigError);
  CHECK_THROWS_AS(nef::parse_config_text("quantize = maybe\n"), nef::ConfigError);
  CHECK_THROWS_AS(nef::parse_config_text("beta = -0.5\n"), nef::ConfigError);
  CHECK_THROWS_AS(nef::parse_config_text("tau_start = 0.1\ntau_end = 0.2\n"), nef::ConfigError);
  // head columns cannot be orthonormal when width < K
  CHECK_THROWS_AS(nef::parse_config_text("K = 256\nwidth = 64\n"), nef::ConfigError);
}

TEST_CASE("config text round-trips through the parser") {
  auto cfg = nef::parse_config_text("K = 24\nwidth = 48\nlr = 0.0025\nquantize = false\n");
  auto back = nef::parse_config_text(nef::config_to_text(cfg));
  CHECK(back.n_eigenfuncs == cfg.n_eigenfuncs);
  CHECK(back.beta_effective() == cfg.beta_effective());
  CHECK(back.lr == cfg.lr);
  CHECK(back.width_effective() == cfg.width_effective());
  CHECK(back.quantize == cfg.quantize);
}

TEST_CASE("config file IO") {
  auto path = temp_file("nef_test_config.txt");
  {
    std::ofstream out(path);
    out << "K = 8\nwidth = 16\n";
  }
  auto cfg = nef::parse_config(path);
  std::filesystem::remove(path);
  CHECK(cfg.n_eigenfuncs == 8);
  CHECK_THROWS_AS(nef::parse_config(path), nef::DataError);
}

TEST_CASE("synthetic generation is seed-deterministic") {
  SceneSpec spec;
  spec.n_images = 3;
  spec.height = 32;
  spec.width = 32;
  spec.patch = 8;
  auto a = nef::generate_synthetic(spec);
  auto b = nef::generate_synthetic(spec);
  CHECK(a.container.features == b.container.features);
  CHECK(a.container.pixels == b.container.pixels);
  for (std::size_t i = 0; i < a.images.size(); ++i) {
    CHECK(a.images[i].pix == b.images[i].pix);
    CHECK(a.masks[i].labels == b.masks[i].labels);
  }

  spec.seed = 1;
  auto c = nef::generate_synthetic(spec);
  CHECK(a.container.features != c.container.features);
}

TEST_CASE("synthetic masks align with rendered colors") {
  SceneSpec spec;
  spec.n_images = 4;
  spec.height = 48;
  spec.width = 48;
  spec.patch = 8;
  spec.n_shapes = 4;
  auto ds = nef::generate_synthetic(spec);
  auto palette = nef::synthetic_palette(spec.n_classes);

  // pixel noise is smaller than half the palette separation, so every
  // pixel's nearest palette color is its mask class
  for (std::size_t img = 0; img < ds.images.size(); ++img) {
    Volume v = nef::from_rgb8(ds.images[img]);
    for (std::int64_t r = 0; r < spec.height; ++r)
      for (std::int64_t c = 0; c < spec.width; ++c) {
        double best = 1e9;
        std::int32_t arg = 0;
        for (std::int64_t cls = 0; cls < spec.n_classes; ++cls) {
          double d2 = 0.0;
          for (std::int64_t ch = 0; ch < 3; ++ch) {
            double d = v.at(r, c, ch) - palette[static_cast<std::size_t>(cls)][static_cast<std::size_t>(ch)];
            d2 += d * d;
          }
          if (d2 < best) {
            best = d2;
            arg = static_cast<std::int32_t>(cls);
          }
        }
        CHECK(arg == ds.masks[img].at(r, c));
      }
  }
}

TEST_CASE("synthetic with no shapes is all background") {
  SceneSpec spec;
  spec.n_images = 2;
  spec.height = 16;
  spec.width = 16;
  spec.patch = 4;
  spec.n_shapes = 0;
  auto ds = nef::generate_synthetic(spec);
  for (const auto& m : ds.masks)
    for (auto l : m.labels) CHECK(l == 0);
}

TEST_CASE("synthetic spec validation") {
  SceneSpec spec;
  spec.patch = 7;  // does not divide 64
  CHECK_THROWS_AS(nef::generate_synthetic(spec), nef::ConfigError);
  spec.patch = 8;
  spec.height = 8;
  spec.width = 8;  // too small for shapes
  CHECK_THROWS_AS(nef::generate_synthetic(spec), nef::ConfigError);
  spec.n_shapes = 0;
  CHECK_NOTHROW(nef::generate_synthetic(spec));
}

TEST_CASE("oracle spectral clustering separates a small synthetic set") {
  SceneSpec spec;
  spec.n_images = 6;
  spec.height = 32;
  spec.width = 32;
  spec.patch = 8;
  spec.n_shapes = 3;
  auto ds = nef::generate_synthetic(spec);

  auto ps = nef::assemble_full_patchset(ds.container);
  nef::KernelConfig kc;
  // k below the smallest class's patch count, so no class is forced to
  // borrow neighbors from another; the spatial weight stays light because
  // these scenes carry the class signal entirely in the semantic graph
  kc.k = 8;
  kc.k_tilde = 4;
  kc.alpha = 0.1;
  auto kernel = nef::batch_kernel(ps, kc);
  auto labels = nef::spectral_cluster(kernel, spec.n_classes, spec.n_classes, 0);

  // patch-level ground truth: majority pixel class per patch
  std::vector<std::int32_t> truth;
  for (std::int64_t img = 0; img < spec.n_images; ++img)
    for (std::int64_t pr = 0; pr < 4; ++pr)
      for (std::int64_t pc = 0; pc < 4; ++pc) {
        std::vector<std::int64_t> count(static_cast<std::size_t>(spec.n_classes), 0);
        for (std::int64_t r = pr * 8; r < (pr + 1) * 8; ++r)
          for (std::int64_t c = pc * 8; c < (pc + 1) * 8; ++c)
            count[static_cast<std::size_t>(
                ds.masks[static_cast<std::size_t>(img)].at(r, c))] += 1;
        std::int32_t arg = 0;
        for (std::int64_t cls = 1; cls < spec.n_classes; ++cls)
          if (count[static_cast<std::size_t>(cls)] > count[static_cast<std::size_t>(arg)])
            arg = static_cast<std::int32_t>(cls);
        truth.push_back(arg);
      }

  double ari = nef::adjusted_rand_index(labels, truth);
  CHECK(ari >= 0.95);
}
