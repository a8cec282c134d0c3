#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "nef/errors.hpp"
#include "nef/image_io.hpp"
#include "nef/tensor.hpp"
#include "nef/volume.hpp"

namespace nef {

// Integer label raster. ignore_index = -1 means every pixel is scored;
// a nonnegative value marks ground-truth pixels excluded from all metrics.
struct SegmentationMask {
  std::int64_t h = 0;
  std::int64_t w = 0;
  std::vector<std::int32_t> labels;  // row-major
  std::int32_t ignore_index = -1;

  SegmentationMask() = default;
  SegmentationMask(std::int64_t h_, std::int64_t w_) : h(h_), w(w_) {
    labels.assign(static_cast<std::size_t>(h * w), 0);
  }
  std::int32_t& at(std::int64_t r, std::int64_t c) {
    return labels[static_cast<std::size_t>(r * w + c)];
  }
  std::int32_t at(std::int64_t r, std::int64_t c) const {
    return labels[static_cast<std::size_t>(r * w + c)];
  }
};

// Labels are stored verbatim as 8-bit gray values, which caps label ids at
// 255 for on-disk masks.
GrayImage mask_to_gray(const SegmentationMask& mask);
SegmentationMask gray_to_mask(const GrayImage& img);

// counts(cluster, class) over scored pixels. Merging is plain integer
// addition, so any accumulation order gives the same matrix.
struct ConfusionMatrix {
  std::int64_t n_clusters = 0;
  std::int64_t n_classes = 0;
  std::vector<std::int64_t> counts;  // row-major (n_clusters, n_classes)

  ConfusionMatrix() = default;
  ConfusionMatrix(std::int64_t clusters, std::int64_t classes)
      : n_clusters(clusters), n_classes(classes) {
    counts.assign(static_cast<std::size_t>(clusters * classes), 0);
  }
  std::int64_t& at(std::int64_t cluster, std::int64_t cls) {
    return counts[static_cast<std::size_t>(cluster * n_classes + cls)];
  }
  std::int64_t at(std::int64_t cluster, std::int64_t cls) const {
    return counts[static_cast<std::size_t>(cluster * n_classes + cls)];
  }
  std::int64_t total() const;
  void merge(const ConfusionMatrix& other);
};

// Tallies pred (cluster ids) against gt (class ids) into conf, skipping gt
// pixels equal to gt.ignore_index. Out-of-range labels are data errors.
void accumulate_confusion(ConfusionMatrix& conf, const SegmentationMask& pred,
                          const SegmentationMask& gt);

// Half-pixel-center bilinear upsampling per channel:
// src = (dst + 0.5) * (w / W) - 0.5, clamped to the valid range. Requested
// shrinking is a config error; the identity size is a bit-exact copy.
Volume upsample_bilinear(const Volume& v, std::int64_t out_h, std::int64_t out_w);

// Per-pixel index of the largest channel, ties to the lowest index.
SegmentationMask argmax_assign(const Volume& logits);

// Min-cost one-to-one assignment of min(n, m) pairs. out[i] is the column
// matched to row i, -1 if row i is left out (only when n > m). Among all
// minimum-cost assignments, returns the lexicographically smallest vector
// (-1 sorts last). Costs must be finite.
std::vector<std::int64_t> hungarian(const Tensor<double>& cost);

// cluster -> most frequent class, ties to the lowest class id; clusters with
// no pixels map to class 0. An all-zero matrix is an error.
std::vector<std::int32_t> majority_vote(const ConfusionMatrix& conf);

enum class MatchRule { kVote, kHungarian };

// Hungarian on cost(i, j) = -counts(i, j) for the vote-or-match step; with
// more clusters than classes, the clusters the matching leaves out fall back
// to majority voting.
std::vector<std::int32_t> match_clusters(const ConfusionMatrix& conf, MatchRule rule);

struct ScoreResult {
  double accuracy = 0.0;
  double miou = 0.0;
  // Indexed by class id. -1 marks classes with no pixels in either mask;
  // the mean runs over classes present in the ground truth.
  std::vector<double> per_class_iou;
  std::int64_t scored = 0;
};

// Single-pair scoring; pred must already hold class ids (post-matching).
ScoreResult score(const SegmentationMask& pred, const SegmentationMask& gt,
                  std::int64_t n_classes);

// Metrics of a cluster-level confusion matrix after applying the cluster ->
// class map to its rows.
ScoreResult score_mapped(const ConfusionMatrix& conf,
                         const std::vector<std::int32_t>& cluster_to_class);

struct DatasetMetrics {
  ScoreResult scores;
  std::vector<std::int32_t> cluster_to_class;
  ConfusionMatrix cluster_confusion;
};

// Whole-dataset protocol: one confusion matrix over every image, one
// matching over the accumulated counts (never per image), then metrics.
DatasetMetrics evaluate_masks(const std::vector<SegmentationMask>& pred,
                              const std::vector<SegmentationMask>& gt, std::int64_t n_clusters,
                              std::int64_t n_classes, MatchRule rule);

// Pulls per-pixel cluster logits for the given window of the given image,
// at pixel resolution, shape (h, w, n_clusters).
using LogitProvider =
    std::function<Volume(std::int64_t image, std::int64_t r0, std::int64_t c0, std::int64_t h,
                         std::int64_t w)>;

enum class WindowProtocol { kCrop, kWindow };

struct EvalConfig {
  std::int64_t n_clusters = 0;
  std::int64_t n_classes = 0;
  MatchRule match = MatchRule::kVote;
  WindowProtocol protocol = WindowProtocol::kCrop;
  std::int64_t window = 0;  // window side; required for the window protocol
  std::int64_t stride = 0;  // 0 = half the window
};

// Runs the provider over every image (whole frame, or sliding windows whose
// overlapping logits are averaged before the argmax), then scores through
// evaluate_masks.
DatasetMetrics evaluate_dataset(const LogitProvider& provider,
                                const std::vector<SegmentationMask>& gt, const EvalConfig& cfg);

}  // namespace nef
