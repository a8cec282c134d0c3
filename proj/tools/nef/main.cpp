#include <CLI11.hpp>

#include <algorithm>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "nef/config.hpp"
#include "nef/eigenmodel.hpp"
#include "nef/errors.hpp"
#include "nef/feature_io.hpp"
#include "nef/graph_kernel.hpp"
#include "nef/image_io.hpp"
#include "nef/model_io.hpp"
#include "nef/neuralef.hpp"
#include "nef/oracle.hpp"
#include "nef/patchset.hpp"
#include "nef/segmentation.hpp"
#include "nef/synthetic.hpp"
#include "nef/tensor.hpp"
#include "nef/volume.hpp"

namespace fs = std::filesystem;

namespace {

std::string seq_name(const char* stem, std::int64_t i, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s_%04lld.%s", stem, static_cast<long long>(i), ext);
  return buf;
}

std::string fmt_g(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

nef::Tensor<float> image_tokens(const nef::FeatureContainer& fc, std::int64_t image) {
  nef::Tensor<float> t(fc.patches_per_image(), fc.c);
  auto src = fc.image_features(image);
  std::copy(src.begin(), src.end(), t.data.begin());
  return t;
}

// (patches, K) logits laid out on the patch grid, ready for upsampling.
nef::Volume logits_volume(const nef::Tensor<float>& logits, std::int64_t h, std::int64_t w) {
  nef::Volume v(h, w, logits.cols);
  for (std::size_t i = 0; i < logits.data.size(); ++i) v.data[i] = logits.data[i];
  return v;
}

// Per-patch labels painted onto pixels: each patch fills its own P x P block.
nef::SegmentationMask patch_labels_to_mask(std::span<const std::int32_t> labels, std::int64_t gh,
                                           std::int64_t gw, std::int64_t patch) {
  nef::SegmentationMask m(gh * patch, gw * patch);
  for (std::int64_t r = 0; r < m.h; ++r)
    for (std::int64_t c = 0; c < m.w; ++c)
      m.at(r, c) = labels[static_cast<std::size_t>((r / patch) * gw + c / patch)];
  return m;
}

std::vector<fs::path> list_masks(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw nef::DataError(dir.string() + " is not a directory");
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  if (out.empty()) throw nef::DataError("no .pgm masks in " + dir.string());
  return out;
}

std::vector<nef::SegmentationMask> read_masks(const fs::path& dir) {
  std::vector<nef::SegmentationMask> out;
  for (const fs::path& p : list_masks(dir)) out.push_back(nef::gray_to_mask(nef::read_pgm(p)));
  return out;
}

nef::RunConfig load_config(const fs::path& path) {
  return path.empty() ? nef::RunConfig{} : nef::parse_config(path);
}

struct SynthArgs {
  fs::path out;
  nef::SceneSpec spec;
};

int cmd_synth(const SynthArgs& a) {
  nef::SyntheticDataset ds = nef::generate_synthetic(a.spec);
  fs::create_directories(a.out);
  for (std::int64_t i = 0; i < a.spec.n_images; ++i) {
    nef::write_ppm(ds.images[static_cast<std::size_t>(i)], a.out / seq_name("img", i, "ppm"));
    nef::write_pgm(nef::mask_to_gray(ds.masks[static_cast<std::size_t>(i)]),
                   a.out / seq_name("gt", i, "pgm"));
  }
  nef::write_container(ds.container, a.out / "features.nefb");
  return 0;
}

struct TrainArgs {
  fs::path features, config, out, log;
};

int cmd_train(const TrainArgs& a) {
  nef::FeatureContainer fc = nef::read_container(a.features);
  nef::RunConfig cfg = load_config(a.config);
  std::ofstream live;
  if (!a.log.empty()) {
    live.open(a.log);
    if (!live) throw nef::DataError("train: cannot open log " + a.log.string());
  }
  nef::TrainResult result = nef::train(fc, cfg, live.is_open() ? &live : nullptr);
  nef::save_model(result.model, a.out);
  if (live.is_open()) {
    // Replace the live stream with the full report, headers included.
    live.close();
    std::ofstream full(a.log, std::ios::trunc);
    full << nef::report_to_text(result.report);
  }
  std::printf("steps=%lld\n", static_cast<long long>(result.report.steps()));
  if (!result.report.loss.empty()) std::printf("loss=%s\n", fmt_g(result.report.loss.back()).c_str());
  return 0;
}

struct InferArgs {
  fs::path model, features, out_masks;
  bool colorize = false;
};

int cmd_infer(const InferArgs& a) {
  nef::EigenModel<float> model = nef::load_model(a.model);
  nef::FeatureContainer fc = nef::read_container(a.features);
  if (model.c != fc.c)
    throw nef::DimensionError("infer: model expects " + std::to_string(model.c) +
                              " feature channels, container has " + std::to_string(fc.c));
  fs::create_directories(a.out_masks);
  for (std::int64_t i = 0; i < fc.n_images; ++i) {
    nef::Tensor<float> logits = nef::forward_infer(model, image_tokens(fc, i));
    nef::Volume v = logits_volume(logits, fc.h, fc.w);
    v = nef::upsample_bilinear(v, fc.h * fc.patch_size, fc.w * fc.patch_size);
    nef::GrayImage gray = nef::mask_to_gray(nef::argmax_assign(v));
    nef::write_pgm(gray, a.out_masks / seq_name("mask", i, "pgm"));
    if (a.colorize)
      nef::write_ppm(nef::colorize_labels(gray), a.out_masks / seq_name("mask", i, "ppm"));
  }
  return 0;
}

struct EvalArgs {
  fs::path pred, gt, against;
  nef::MatchRule match = nef::MatchRule::kVote;
  nef::WindowProtocol protocol = nef::WindowProtocol::kCrop;
  std::int64_t window = 0;
  std::int64_t stride = 0;
  std::int32_t ignore_index = -1;
};

void check_counts(std::size_t pred, std::size_t other, const char* what) {
  if (pred != other)
    throw nef::DataError("eval: " + std::to_string(pred) + " predicted masks vs " +
                         std::to_string(other) + " " + what + " masks");
}

int cmd_eval(const EvalArgs& a) {
  std::vector<nef::SegmentationMask> pred = read_masks(a.pred);

  if (!a.against.empty()) {
    std::vector<nef::SegmentationMask> other = read_masks(a.against);
    check_counts(pred.size(), other.size(), "--against");
    std::vector<std::int32_t> la, lb;
    for (std::size_t i = 0; i < pred.size(); ++i) {
      if (pred[i].h != other[i].h || pred[i].w != other[i].w)
        throw nef::DataError("eval: mask " + std::to_string(i) + " sizes differ, " +
                             std::to_string(pred[i].h) + "x" + std::to_string(pred[i].w) + " vs " +
                             std::to_string(other[i].h) + "x" + std::to_string(other[i].w));
      la.insert(la.end(), pred[i].labels.begin(), pred[i].labels.end());
      lb.insert(lb.end(), other[i].labels.begin(), other[i].labels.end());
    }
    std::printf("ARI=%.6f\n", nef::adjusted_rand_index(la, lb));
    return 0;
  }

  std::vector<nef::SegmentationMask> gt = read_masks(a.gt);
  check_counts(pred.size(), gt.size(), "ground-truth");
  std::int32_t max_pred = 0, max_gt = -1;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    gt[i].ignore_index = a.ignore_index;
    for (std::int32_t v : pred[i].labels) max_pred = std::max(max_pred, v);
    for (std::int32_t v : gt[i].labels)
      if (v != a.ignore_index) max_gt = std::max(max_gt, v);
  }
  if (max_gt < 0) throw nef::DataError("eval: every ground-truth pixel is ignored");
  std::int64_t n_clusters = max_pred + 1;
  std::int64_t n_classes = max_gt + 1;

  nef::DatasetMetrics metrics;
  if (a.protocol == nef::WindowProtocol::kCrop) {
    metrics = nef::evaluate_masks(pred, gt, n_clusters, n_classes, a.match);
  } else {
    // Masks carry hard labels, so windows vote: overlapping one-hot logits
    // average to per-pixel frequencies before the argmax.
    nef::LogitProvider provider = [&pred, n_clusters](std::int64_t image, std::int64_t r0,
                                                      std::int64_t c0, std::int64_t h,
                                                      std::int64_t w) {
      const nef::SegmentationMask& m = pred[static_cast<std::size_t>(image)];
      nef::Volume v(h, w, n_clusters);
      for (std::int64_t r = 0; r < h; ++r)
        for (std::int64_t c = 0; c < w; ++c) v.at(r, c, m.at(r0 + r, c0 + c)) = 1.0;
      return v;
    };
    nef::EvalConfig cfg;
    cfg.n_clusters = n_clusters;
    cfg.n_classes = n_classes;
    cfg.match = a.match;
    cfg.protocol = nef::WindowProtocol::kWindow;
    cfg.window = a.window;
    cfg.stride = a.stride;
    metrics = nef::evaluate_dataset(provider, gt, cfg);
  }
  std::printf("Acc=%.6f\n", metrics.scores.accuracy);
  std::printf("mIoU=%.6f\n", metrics.scores.miou);
  return 0;
}

struct OracleArgs {
  fs::path features, config, report, out_masks;
};

int cmd_oracle(const OracleArgs& a) {
  nef::FeatureContainer fc = nef::read_container(a.features);
  nef::RunConfig cfg = load_config(a.config);
  cfg.validate();
  nef::PatchSet full = nef::assemble_full_patchset(fc);
  nef::KernelConfig kc{cfg.k, cfg.k_tilde, cfg.alpha};
  nef::Tensor<double> kernel = nef::batch_kernel(full, kc);
  nef::EigenDecomposition eig = nef::eigh(kernel);
  std::int64_t top_k = cfg.n_eigenfuncs;
  std::int64_t n_clusters = cfg.clusters_effective();
  std::vector<std::int32_t> labels = nef::spectral_cluster(eig, top_k, n_clusters, cfg.seed);

  std::ofstream rep(a.report);
  if (!rep) throw nef::DataError("oracle: cannot open report " + a.report.string());
  rep << "# exact spectral clustering of the dense kernel over the full dataset\n";
  rep << "n=" << full.n << "\n";
  rep << "images=" << fc.n_images << "\n";
  rep << "K=" << top_k << "\n";
  rep << "n_clusters=" << n_clusters << "\n";
  rep << "alpha=" << fmt_g(cfg.alpha) << "\n";
  rep << "k=" << cfg.k << "\n";
  rep << "k_tilde=" << cfg.k_tilde << "\n";
  rep << "seed=" << cfg.seed << "\n";
  for (std::int64_t j = 0; j < top_k; ++j)
    rep << "mu_" << j << "=" << fmt_g(eig.eigenvalues[static_cast<std::size_t>(j)]) << "\n";
  if (top_k < full.n)
    rep << "next_mu=" << fmt_g(eig.eigenvalues[static_cast<std::size_t>(top_k)]) << "\n";
  std::vector<std::int64_t> sizes(static_cast<std::size_t>(n_clusters), 0);
  for (std::int32_t l : labels) sizes[static_cast<std::size_t>(l)] += 1;
  rep << "cluster_sizes=";
  for (std::size_t i = 0; i < sizes.size(); ++i) rep << (i ? "," : "") << sizes[i];
  rep << "\n";

  if (!a.out_masks.empty()) {
    fs::create_directories(a.out_masks);
    std::int64_t ppi = fc.patches_per_image();
    for (std::int64_t i = 0; i < fc.n_images; ++i) {
      std::span<const std::int32_t> img(labels.data() + i * ppi, static_cast<std::size_t>(ppi));
      nef::SegmentationMask m = patch_labels_to_mask(img, fc.h, fc.w, fc.patch_size);
      nef::write_pgm(nef::mask_to_gray(m), a.out_masks / seq_name("mask", i, "pgm"));
    }
  }
  return 0;
}

struct KmeansArgs {
  fs::path features, model, out;
  std::int64_t k = 256;
  std::uint64_t seed = 0;
  bool prehead = false;
};

int cmd_kmeans(const KmeansArgs& a) {
  nef::FeatureContainer fc = nef::read_container(a.features);
  std::int64_t n = fc.total_patches();
  nef::Tensor<double> points;
  if (a.prehead) {
    nef::EigenModel<float> model = nef::load_model(a.model);
    if (model.c != fc.c)
      throw nef::DimensionError("kmeans: model expects " + std::to_string(model.c) +
                                " feature channels, container has " + std::to_string(fc.c));
    points = nef::Tensor<double>(n, model.d);
    for (std::int64_t i = 0; i < fc.n_images; ++i) {
      nef::Tensor<float> pre = nef::forward_prehead(model, image_tokens(fc, i));
      std::int64_t row0 = i * fc.patches_per_image();
      for (std::int64_t r = 0; r < pre.rows; ++r)
        for (std::int64_t c = 0; c < pre.cols; ++c)
          points.at(row0 + r, c) = static_cast<double>(pre.at(r, c));
    }
  } else {
    points = nef::Tensor<double>(n, fc.c);
    for (std::size_t i = 0; i < points.data.size(); ++i)
      points.data[i] = static_cast<double>(fc.features[i]);
  }
  nef::CounterRng rng(a.seed);
  nef::KMeansResult res = nef::kmeans_fit(points, a.k, rng);

  fs::create_directories(a.out);
  std::ofstream txt(a.out / "labels.txt");
  if (!txt) throw nef::DataError("kmeans: cannot open " + (a.out / "labels.txt").string());
  for (std::int32_t l : res.labels) txt << l << "\n";
  if (a.k <= 256) {
    std::int64_t ppi = fc.patches_per_image();
    for (std::int64_t i = 0; i < fc.n_images; ++i) {
      std::span<const std::int32_t> img(res.labels.data() + i * ppi,
                                        static_cast<std::size_t>(ppi));
      nef::SegmentationMask m = patch_labels_to_mask(img, fc.h, fc.w, fc.patch_size);
      nef::write_pgm(nef::mask_to_gray(m), a.out / seq_name("mask", i, "pgm"));
    }
  }
  std::printf("inertia=%s\n", fmt_g(res.inertia).c_str());
  std::printf("iterations=%lld\n", static_cast<long long>(res.iterations));
  return 0;
}

struct EigmapArgs {
  fs::path model, features, out;
  std::string dims = "0..15";
};

// Comma-separated dimensions, each a single index or an inclusive A..B range.
std::vector<std::int64_t> parse_dims(const std::string& s, std::int64_t k) {
  std::vector<std::int64_t> out;
  std::size_t pos = 0;
  while (pos <= s.size()) {
    std::size_t comma = s.find(',', pos);
    std::string tok = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
    pos = comma == std::string::npos ? s.size() + 1 : comma + 1;
    if (tok.empty()) throw nef::ConfigError("eigmap: empty entry in --dims");
    std::int64_t a = 0, b = 0;
    try {
      std::size_t dots = tok.find("..");
      if (dots == std::string::npos) {
        a = b = std::stoll(tok);
      } else {
        a = std::stoll(tok.substr(0, dots));
        b = std::stoll(tok.substr(dots + 2));
      }
    } catch (const std::exception&) {
      throw nef::ConfigError("eigmap: cannot parse --dims entry '" + tok + "'");
    }
    if (a < 0 || b < a || b >= k)
      throw nef::ConfigError("eigmap: dims " + tok + " outside [0, " + std::to_string(k) + ")");
    for (std::int64_t d = a; d <= b; ++d) out.push_back(d);
  }
  return out;
}

nef::GrayImage to_heatmap(const nef::Volume& v) {
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double x : v.data) {
    lo = std::min(lo, x);
    hi = std::max(hi, x);
  }
  nef::GrayImage img(v.h, v.w);
  double range = hi - lo;
  if (range <= 0.0) return img;
  for (std::size_t i = 0; i < v.data.size(); ++i) {
    double u = (v.data[i] - lo) / range;
    img.pix[i] = static_cast<std::uint8_t>(std::lround(u * 255.0));
  }
  return img;
}

int cmd_eigmap(const EigmapArgs& a) {
  nef::EigenModel<float> model = nef::load_model(a.model);
  nef::FeatureContainer fc = nef::read_container(a.features);
  if (model.c != fc.c)
    throw nef::DimensionError("eigmap: model expects " + std::to_string(model.c) +
                              " feature channels, container has " + std::to_string(fc.c));
  std::vector<std::int64_t> dims = parse_dims(a.dims, model.k);
  fs::create_directories(a.out);
  for (std::int64_t i = 0; i < fc.n_images; ++i) {
    nef::Tensor<float> logits = nef::forward_infer(model, image_tokens(fc, i));
    for (std::int64_t d : dims) {
      nef::Volume v(fc.h, fc.w, 1);
      for (std::int64_t p = 0; p < logits.rows; ++p)
        v.data[static_cast<std::size_t>(p)] = static_cast<double>(logits.at(p, d));
      v = nef::upsample_bilinear(v, fc.h * fc.patch_size, fc.w * fc.patch_size);
      char buf[64];
      std::snprintf(buf, sizeof buf, "eig_%04lld_dim%03lld.pgm", static_cast<long long>(i),
                    static_cast<long long>(d));
      nef::write_pgm(to_heatmap(v), a.out / buf);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"parametric spectral clustering for unsupervised segmentation"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  app.footer("environment: NEF_THREADS caps internal parallelism (0 = auto)");

  SynthArgs synth;
  CLI::App* sc_synth = app.add_subcommand("synth", "generate a synthetic dataset: PPM images, "
                                                   "PGM ground-truth masks, NEFB features");
  sc_synth->add_option("--out", synth.out, "output directory")->required();
  sc_synth->add_option("--n", synth.spec.n_images, "number of images");
  sc_synth->add_option("--height", synth.spec.height, "image height in pixels");
  sc_synth->add_option("--width", synth.spec.width, "image width in pixels");
  sc_synth->add_option("--shapes", synth.spec.n_shapes, "shapes per image");
  sc_synth->add_option("--classes", synth.spec.n_classes, "classes including background");
  sc_synth->add_option("--patch", synth.spec.patch, "feature patch size in pixels");
  sc_synth->add_option("--seed", synth.spec.seed, "random seed");

  TrainArgs train;
  CLI::App* sc_train = app.add_subcommand("train", "train the eigenfunction model on a feature "
                                                   "container");
  sc_train->add_option("--features", train.features, "input NEFB container")->required();
  sc_train->add_option("--config", train.config, "run configuration file (defaults when absent)");
  sc_train->add_option("--out", train.out, "output NEFM model file")->required();
  sc_train->add_option("--log", train.log, "training log file, one line per step");

  InferArgs infer;
  CLI::App* sc_infer = app.add_subcommand("infer", "write per-image segmentation masks from a "
                                                   "trained model");
  sc_infer->add_option("--model", infer.model, "trained NEFM model file")->required();
  sc_infer->add_option("--features", infer.features, "input NEFB container")->required();
  sc_infer->add_option("--out-masks", infer.out_masks, "output directory for PGM masks")
      ->required();
  sc_infer->add_flag("--colorize", infer.colorize, "also write palette-colored PPM masks");

  EvalArgs eval;
  CLI::App* sc_eval = app.add_subcommand("eval", "score predicted masks against ground truth, or "
                                                 "ARI against another labeling");
  sc_eval->add_option("--pred", eval.pred, "directory of predicted PGM masks")->required();
  CLI::Option* opt_gt = sc_eval->add_option("--gt", eval.gt, "directory of ground-truth PGM masks");
  CLI::Option* opt_against =
      sc_eval->add_option("--against", eval.against, "directory of PGM masks to compare by ARI");
  opt_gt->excludes(opt_against);
  std::map<std::string, nef::MatchRule> match_map{{"vote", nef::MatchRule::kVote},
                                                  {"hungarian", nef::MatchRule::kHungarian}};
  sc_eval->add_option("--match", eval.match, "cluster-to-class matching rule")
      ->transform(CLI::CheckedTransformer(match_map, CLI::ignore_case))
      ->default_str("vote");
  std::map<std::string, nef::WindowProtocol> proto_map{{"crop", nef::WindowProtocol::kCrop},
                                                       {"window", nef::WindowProtocol::kWindow}};
  sc_eval->add_option("--protocol", eval.protocol, "whole-frame or sliding-window evaluation")
      ->transform(CLI::CheckedTransformer(proto_map, CLI::ignore_case))
      ->default_str("crop");
  sc_eval->add_option("--window", eval.window, "window side for the window protocol");
  sc_eval->add_option("--stride", eval.stride, "window stride (0 = half the window)");
  sc_eval->add_option("--ignore-index", eval.ignore_index,
                      "ground-truth label excluded from scoring (-1 = none)");

  OracleArgs oracle;
  CLI::App* sc_oracle = app.add_subcommand("oracle", "exact spectral clustering of the dense "
                                                     "kernel, with an eigenvalue dump");
  sc_oracle->add_option("--features", oracle.features, "input NEFB container")->required();
  sc_oracle->add_option("--config", oracle.config, "run configuration file (defaults when absent)");
  sc_oracle->add_option("--report", oracle.report, "output report file")->required();
  sc_oracle->add_option("--out-masks", oracle.out_masks,
                        "optional directory for per-image PGM masks of the clustering");

  KmeansArgs kmeans;
  CLI::App* sc_kmeans = app.add_subcommand("kmeans", "k-means baseline over raw features or "
                                                     "pre-head model features");
  sc_kmeans->add_option("--features", kmeans.features, "input NEFB container")->required();
  CLI::Option* opt_km_model =
      sc_kmeans->add_option("--model", kmeans.model, "trained NEFM model file for --prehead");
  sc_kmeans->add_flag("--prehead", kmeans.prehead, "cluster the features preceding the linear "
                                                   "head instead of the raw input")
      ->needs(opt_km_model);
  sc_kmeans->add_option("--k", kmeans.k, "number of clusters");
  sc_kmeans->add_option("--seed", kmeans.seed, "random seed");
  sc_kmeans->add_option("--out", kmeans.out,
                        "output directory: labels.txt plus per-image PGM masks (masks need "
                        "k <= 256)")
      ->required();

  EigmapArgs eigmap;
  CLI::App* sc_eigmap = app.add_subcommand("eigmap", "write eigenfunction heatmaps, one PGM per "
                                                     "image and dimension");
  sc_eigmap->add_option("--model", eigmap.model, "trained NEFM model file")->required();
  sc_eigmap->add_option("--features", eigmap.features, "input NEFB container")->required();
  sc_eigmap->add_option("--dims", eigmap.dims,
                        "dimensions to render: comma-separated indices or A..B ranges");
  sc_eigmap->add_option("--out", eigmap.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*sc_synth) return cmd_synth(synth);
    if (*sc_train) return cmd_train(train);
    if (*sc_infer) return cmd_infer(infer);
    if (*sc_eval) {
      if (eval.gt.empty() && eval.against.empty()) {
        std::fprintf(stderr, "eval requires --gt or --against\nRun with --help for more "
                             "information.\n");
        return 1;
      }
      return cmd_eval(eval);
    }
    if (*sc_oracle) return cmd_oracle(oracle);
    if (*sc_kmeans) return cmd_kmeans(kmeans);
    if (*sc_eigmap) return cmd_eigmap(eigmap);
  } catch (const nef::NumericError& e) {
    std::fprintf(stderr, "nef: %s\n", e.what());
    return 3;
  } catch (const nef::Error& e) {
    std::fprintf(stderr, "nef: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "nef: %s\n", e.what());
    return 2;
  }
  return 0;
}
