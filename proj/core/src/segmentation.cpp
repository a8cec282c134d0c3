#include "nef/segmentation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace nef {

GrayImage mask_to_gray(const SegmentationMask& mask) {
  GrayImage img(mask.h, mask.w);
  for (std::size_t i = 0; i < mask.labels.size(); ++i) {
    std::int32_t l = mask.labels[i];
    if (l < 0 || l > 255)
      throw DataError("mask label " + std::to_string(l) + " does not fit an 8-bit mask");
    img.pix[i] = static_cast<std::uint8_t>(l);
  }
  return img;
}

SegmentationMask gray_to_mask(const GrayImage& img) {
  SegmentationMask mask(img.h, img.w);
  for (std::size_t i = 0; i < img.pix.size(); ++i)
    mask.labels[i] = static_cast<std::int32_t>(img.pix[i]);
  return mask;
}

std::int64_t ConfusionMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::int64_t{0});
}

void ConfusionMatrix::merge(const ConfusionMatrix& other) {
  if (n_clusters != other.n_clusters || n_classes != other.n_classes)
    throw DimensionError("confusion merge: shape mismatch");
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] += other.counts[i];
}

void accumulate_confusion(ConfusionMatrix& conf, const SegmentationMask& pred,
                          const SegmentationMask& gt) {
  if (pred.h != gt.h || pred.w != gt.w)
    throw DimensionError("confusion: mask shapes differ, (" + std::to_string(pred.h) + ", " +
                         std::to_string(pred.w) + ") vs (" + std::to_string(gt.h) + ", " +
                         std::to_string(gt.w) + ")");
  for (std::size_t i = 0; i < gt.labels.size(); ++i) {
    std::int32_t g = gt.labels[i];
    if (g == gt.ignore_index) continue;
    std::int32_t p = pred.labels[i];
    if (p < 0 || p >= conf.n_clusters)
      throw DataError("confusion: cluster id " + std::to_string(p) + " outside [0, " +
                      std::to_string(conf.n_clusters) + ")");
    if (g < 0 || g >= conf.n_classes)
      throw DataError("confusion: class id " + std::to_string(g) + " outside [0, " +
                      std::to_string(conf.n_classes) + ")");
    conf.at(p, g) += 1;
  }
}

Volume upsample_bilinear(const Volume& v, std::int64_t out_h, std::int64_t out_w) {
  if (v.h < 1 || v.w < 1 || v.c < 1)
    throw DimensionError("upsample: empty input " + v.shape_str());
  if (out_h < v.h || out_w < v.w)
    throw ConfigError("upsample: target (" + std::to_string(out_h) + ", " +
                      std::to_string(out_w) + ") shrinks input " + v.shape_str());
  if (out_h == v.h && out_w == v.w) return v;

  auto taps = [](std::int64_t out_n, std::int64_t in_n) {
    std::vector<std::tuple<std::int64_t, std::int64_t, double>> t(
        static_cast<std::size_t>(out_n));
    double scale = static_cast<double>(in_n) / static_cast<double>(out_n);
    for (std::int64_t i = 0; i < out_n; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::min(std::max(src, 0.0), static_cast<double>(in_n - 1));
      auto lo = static_cast<std::int64_t>(std::floor(src));
      std::int64_t hi = std::min(lo + 1, in_n - 1);
      t[static_cast<std::size_t>(i)] = {lo, hi, src - static_cast<double>(lo)};
    }
    return t;
  };
  auto row_taps = taps(out_h, v.h);
  auto col_taps = taps(out_w, v.w);

  Volume out(out_h, out_w, v.c);
  for (std::int64_t r = 0; r < out_h; ++r) {
    auto [r0, r1, wr] = row_taps[static_cast<std::size_t>(r)];
    for (std::int64_t c = 0; c < out_w; ++c) {
      auto [c0, c1, wc] = col_taps[static_cast<std::size_t>(c)];
      for (std::int64_t ch = 0; ch < v.c; ++ch) {
        double top = (1.0 - wc) * v.at(r0, c0, ch) + wc * v.at(r0, c1, ch);
        double bot = (1.0 - wc) * v.at(r1, c0, ch) + wc * v.at(r1, c1, ch);
        out.at(r, c, ch) = (1.0 - wr) * top + wr * bot;
      }
    }
  }
  return out;
}

SegmentationMask argmax_assign(const Volume& logits) {
  if (logits.c < 1) throw DimensionError("argmax: need at least one channel");
  SegmentationMask mask(logits.h, logits.w);
  for (std::int64_t r = 0; r < logits.h; ++r)
    for (std::int64_t c = 0; c < logits.w; ++c) {
      double best = logits.at(r, c, 0);
      std::int32_t arg = 0;
      for (std::int64_t ch = 1; ch < logits.c; ++ch) {
        double x = logits.at(r, c, ch);
        if (x > best) {
          best = x;
          arg = static_cast<std::int32_t>(ch);
        }
      }
      mask.at(r, c) = arg;
    }
  return mask;
}

namespace {

// Shortest-augmenting-path assignment on a square matrix; returns col -> row
// in p (1-based internally) plus the optimal duals for the tightness test.
struct SquareAssignment {
  std::vector<std::int64_t> row_to_col;
  std::vector<double> u, v;  // size n, optimal duals
};

SquareAssignment solve_square(const Tensor<double>& cost) {
  std::int64_t n = cost.rows;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<double> v(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<std::int64_t> p(static_cast<std::size_t>(n) + 1, 0);
  std::vector<std::int64_t> way(static_cast<std::size_t>(n) + 1, 0);
  for (std::int64_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::int64_t j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(n) + 1, inf);
    std::vector<char> used(static_cast<std::size_t>(n) + 1, 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      std::int64_t i0 = p[static_cast<std::size_t>(j0)];
      std::int64_t j1 = 0;
      double delta = inf;
      for (std::int64_t j = 1; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) continue;
        double cur = cost.at(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] -
                     v[static_cast<std::size_t>(j)];
        if (cur < minv[static_cast<std::size_t>(j)]) {
          minv[static_cast<std::size_t>(j)] = cur;
          way[static_cast<std::size_t>(j)] = j0;
        }
        if (minv[static_cast<std::size_t>(j)] < delta) {
          delta = minv[static_cast<std::size_t>(j)];
          j1 = j;
        }
      }
      for (std::int64_t j = 0; j <= n; ++j) {
        if (used[static_cast<std::size_t>(j)]) {
          u[static_cast<std::size_t>(p[static_cast<std::size_t>(j)])] += delta;
          v[static_cast<std::size_t>(j)] -= delta;
        } else {
          minv[static_cast<std::size_t>(j)] -= delta;
        }
      }
      j0 = j1;
    } while (p[static_cast<std::size_t>(j0)] != 0);
    do {
      std::int64_t j1 = way[static_cast<std::size_t>(j0)];
      p[static_cast<std::size_t>(j0)] = p[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  SquareAssignment out;
  out.row_to_col.assign(static_cast<std::size_t>(n), -1);
  for (std::int64_t j = 1; j <= n; ++j)
    if (p[static_cast<std::size_t>(j)] >= 1)
      out.row_to_col[static_cast<std::size_t>(p[static_cast<std::size_t>(j)] - 1)] = j - 1;
  out.u.assign(u.begin() + 1, u.end());
  out.v.assign(v.begin() + 1, v.end());
  return out;
}

// One augmenting-path search over the tight-edge graph, skipping frozen rows
// and columns. match_col[j] = row currently on column j, -1 if free.
bool augment_tight(std::int64_t row, const std::vector<std::vector<std::int64_t>>& tight,
                   const std::vector<char>& frozen_col, std::vector<std::int64_t>& match_row,
                   std::vector<std::int64_t>& match_col, std::vector<char>& visited) {
  for (std::int64_t j : tight[static_cast<std::size_t>(row)]) {
    if (frozen_col[static_cast<std::size_t>(j)] || visited[static_cast<std::size_t>(j)]) continue;
    visited[static_cast<std::size_t>(j)] = 1;
    std::int64_t other = match_col[static_cast<std::size_t>(j)];
    if (other == -1 ||
        augment_tight(other, tight, frozen_col, match_row, match_col, visited)) {
      match_row[static_cast<std::size_t>(row)] = j;
      match_col[static_cast<std::size_t>(j)] = row;
      return true;
    }
  }
  return false;
}

}  // namespace

std::vector<std::int64_t> hungarian(const Tensor<double>& cost) {
  std::int64_t n = cost.rows, m = cost.cols;
  if (n < 1 || m < 1) throw DimensionError("hungarian: empty cost matrix " + cost.shape_str());
  double max_abs = 0.0;
  for (double x : cost.data) {
    if (!std::isfinite(x)) throw NumericError("hungarian: non-finite cost entry");
    max_abs = std::max(max_abs, std::abs(x));
  }

  // pad to square with zero-cost dummies; a real row matched to a dummy
  // column means "left out"
  std::int64_t s = std::max(n, m);
  Tensor<double> sq(s, s);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < m; ++j) sq.at(i, j) = cost.at(i, j);
  SquareAssignment base = solve_square(sq);

  // Complementary slackness: with optimal duals, an assignment is optimal
  // exactly when every edge it uses is tight. Walking rows in order and
  // greedily taking the most-preferred tight column that still admits a
  // perfect matching yields the lexicographically smallest optimum.
  double tol = 1e-9 * (1.0 + max_abs);
  std::vector<std::vector<std::int64_t>> tight(static_cast<std::size_t>(s));
  for (std::int64_t i = 0; i < s; ++i) {
    // preference order: real columns ascending, then dummies (= unmatched)
    for (std::int64_t j = 0; j < s; ++j)
      if (std::abs(sq.at(i, j) - base.u[static_cast<std::size_t>(i)] -
                   base.v[static_cast<std::size_t>(j)]) <= tol)
        tight[static_cast<std::size_t>(i)].push_back(j);
  }

  std::vector<std::int64_t> match_row = base.row_to_col;
  std::vector<std::int64_t> match_col(static_cast<std::size_t>(s), -1);
  for (std::int64_t i = 0; i < s; ++i)
    if (match_row[static_cast<std::size_t>(i)] != -1)
      match_col[static_cast<std::size_t>(match_row[static_cast<std::size_t>(i)])] = i;

  std::vector<char> frozen_col(static_cast<std::size_t>(s), 0);
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t current = match_row[static_cast<std::size_t>(i)];
    for (std::int64_t j : tight[static_cast<std::size_t>(i)]) {
      if (frozen_col[static_cast<std::size_t>(j)]) continue;
      if (j == current) break;  // already holds the best available column
      // try to steal column j: whoever sits there must rematch elsewhere
      std::int64_t evicted = match_col[static_cast<std::size_t>(j)];
      auto saved_row = match_row;
      auto saved_col = match_col;
      match_row[static_cast<std::size_t>(i)] = j;
      match_col[static_cast<std::size_t>(j)] = i;
      if (current != -1) match_col[static_cast<std::size_t>(current)] = -1;
      bool ok = true;
      if (evicted != -1) {
        match_row[static_cast<std::size_t>(evicted)] = -1;
        std::vector<char> visited(static_cast<std::size_t>(s), 0);
        visited[static_cast<std::size_t>(j)] = 1;
        ok = augment_tight(evicted, tight, frozen_col, match_row, match_col, visited);
      }
      if (ok) break;
      match_row = std::move(saved_row);
      match_col = std::move(saved_col);
    }
    if (match_row[static_cast<std::size_t>(i)] != -1)
      frozen_col[static_cast<std::size_t>(match_row[static_cast<std::size_t>(i)])] = 1;
  }

  std::vector<std::int64_t> out(static_cast<std::size_t>(n));
  for (std::int64_t i = 0; i < n; ++i) {
    std::int64_t j = match_row[static_cast<std::size_t>(i)];
    out[static_cast<std::size_t>(i)] = (j >= 0 && j < m) ? j : -1;
  }
  return out;
}

std::vector<std::int32_t> majority_vote(const ConfusionMatrix& conf) {
  if (conf.n_clusters < 1 || conf.n_classes < 1)
    throw DimensionError("majority_vote: empty confusion matrix");
  if (conf.total() == 0) throw DataError("majority_vote: no scored pixels");
  std::vector<std::int32_t> map(static_cast<std::size_t>(conf.n_clusters), 0);
  for (std::int64_t i = 0; i < conf.n_clusters; ++i) {
    std::int64_t best = 0;
    std::int32_t arg = 0;
    for (std::int64_t j = 0; j < conf.n_classes; ++j) {
      if (conf.at(i, j) > best) {
        best = conf.at(i, j);
        arg = static_cast<std::int32_t>(j);
      }
    }
    map[static_cast<std::size_t>(i)] = arg;  // all-zero rows keep class 0
  }
  return map;
}

std::vector<std::int32_t> match_clusters(const ConfusionMatrix& conf, MatchRule rule) {
  if (rule == MatchRule::kVote) return majority_vote(conf);
  if (conf.n_clusters < 1 || conf.n_classes < 1)
    throw DimensionError("match_clusters: empty confusion matrix");
  if (conf.total() == 0) throw DataError("match_clusters: no scored pixels");
  Tensor<double> cost(conf.n_clusters, conf.n_classes);
  for (std::int64_t i = 0; i < conf.n_clusters; ++i)
    for (std::int64_t j = 0; j < conf.n_classes; ++j)
      cost.at(i, j) = -static_cast<double>(conf.at(i, j));
  auto assign = hungarian(cost);
  auto vote = majority_vote(conf);  // fallback for clusters the matching skips
  std::vector<std::int32_t> map(static_cast<std::size_t>(conf.n_clusters));
  for (std::int64_t i = 0; i < conf.n_clusters; ++i) {
    std::int64_t j = assign[static_cast<std::size_t>(i)];
    map[static_cast<std::size_t>(i)] =
        j >= 0 ? static_cast<std::int32_t>(j) : vote[static_cast<std::size_t>(i)];
  }
  return map;
}

ScoreResult score_mapped(const ConfusionMatrix& conf,
                         const std::vector<std::int32_t>& cluster_to_class) {
  if (static_cast<std::int64_t>(cluster_to_class.size()) != conf.n_clusters)
    throw DimensionError("score: map covers " + std::to_string(cluster_to_class.size()) +
                         " clusters, confusion holds " + std::to_string(conf.n_clusters));
  std::int64_t k = conf.n_classes;
  std::vector<std::int64_t> cc(static_cast<std::size_t>(k * k), 0);
  for (std::int64_t i = 0; i < conf.n_clusters; ++i) {
    std::int32_t mapped = cluster_to_class[static_cast<std::size_t>(i)];
    if (mapped < 0 || mapped >= k)
      throw DataError("score: mapped class " + std::to_string(mapped) + " outside [0, " +
                      std::to_string(k) + ")");
    for (std::int64_t j = 0; j < k; ++j)
      cc[static_cast<std::size_t>(mapped * k + j)] += conf.at(i, j);
  }

  ScoreResult out;
  std::int64_t correct = 0;
  for (std::int64_t c = 0; c < k; ++c) correct += cc[static_cast<std::size_t>(c * k + c)];
  out.scored = std::accumulate(cc.begin(), cc.end(), std::int64_t{0});
  if (out.scored == 0) throw DataError("score: no scored pixels");
  out.accuracy = static_cast<double>(correct) / static_cast<double>(out.scored);

  out.per_class_iou.assign(static_cast<std::size_t>(k), -1.0);
  double iou_sum = 0.0;
  std::int64_t present = 0;
  for (std::int64_t c = 0; c < k; ++c) {
    std::int64_t tp = cc[static_cast<std::size_t>(c * k + c)];
    std::int64_t row = 0, col = 0;
    for (std::int64_t j = 0; j < k; ++j) {
      row += cc[static_cast<std::size_t>(c * k + j)];
      col += cc[static_cast<std::size_t>(j * k + c)];
    }
    std::int64_t uni = row + col - tp;
    if (uni > 0)
      out.per_class_iou[static_cast<std::size_t>(c)] =
          static_cast<double>(tp) / static_cast<double>(uni);
    if (col > 0) {  // class appears in the ground truth
      iou_sum += out.per_class_iou[static_cast<std::size_t>(c)];
      present += 1;
    }
  }
  out.miou = present > 0 ? iou_sum / static_cast<double>(present) : 0.0;
  return out;
}

ScoreResult score(const SegmentationMask& pred, const SegmentationMask& gt,
                  std::int64_t n_classes) {
  if (n_classes < 1) throw ConfigError("score: n_classes must be at least 1");
  ConfusionMatrix conf(n_classes, n_classes);
  accumulate_confusion(conf, pred, gt);
  if (conf.total() == 0) throw DataError("score: no scored pixels");
  std::vector<std::int32_t> identity(static_cast<std::size_t>(n_classes));
  std::iota(identity.begin(), identity.end(), 0);
  return score_mapped(conf, identity);
}

DatasetMetrics evaluate_masks(const std::vector<SegmentationMask>& pred,
                              const std::vector<SegmentationMask>& gt, std::int64_t n_clusters,
                              std::int64_t n_classes, MatchRule rule) {
  if (pred.size() != gt.size())
    throw DimensionError("evaluate: " + std::to_string(pred.size()) + " predictions vs " +
                         std::to_string(gt.size()) + " ground-truth masks");
  if (pred.empty()) throw DataError("evaluate: empty dataset");
  DatasetMetrics out;
  out.cluster_confusion = ConfusionMatrix(n_clusters, n_classes);
  for (std::size_t i = 0; i < pred.size(); ++i)
    accumulate_confusion(out.cluster_confusion, pred[i], gt[i]);
  out.cluster_to_class = match_clusters(out.cluster_confusion, rule);
  out.scores = score_mapped(out.cluster_confusion, out.cluster_to_class);
  return out;
}

DatasetMetrics evaluate_dataset(const LogitProvider& provider,
                                const std::vector<SegmentationMask>& gt, const EvalConfig& cfg) {
  if (gt.empty()) throw DataError("evaluate: empty dataset");
  if (cfg.n_clusters < 1 || cfg.n_classes < 1)
    throw ConfigError("evaluate: cluster and class counts must be positive");
  if (cfg.protocol == WindowProtocol::kWindow && cfg.window < 1)
    throw ConfigError("evaluate: the window protocol needs a positive window size");

  std::vector<SegmentationMask> pred;
  pred.reserve(gt.size());
  for (std::size_t img = 0; img < gt.size(); ++img) {
    std::int64_t h = gt[img].h, w = gt[img].w;
    if (cfg.protocol == WindowProtocol::kCrop) {
      Volume logits = provider(static_cast<std::int64_t>(img), 0, 0, h, w);
      if (logits.h != h || logits.w != w || logits.c != cfg.n_clusters)
        throw DimensionError("evaluate: provider returned " + logits.shape_str() +
                             " for a (" + std::to_string(h) + ", " + std::to_string(w) +
                             ") frame");
      pred.push_back(argmax_assign(logits));
      continue;
    }

    std::int64_t win_h = std::min(cfg.window, h);
    std::int64_t win_w = std::min(cfg.window, w);
    std::int64_t stride = cfg.stride > 0 ? cfg.stride : std::max<std::int64_t>(1, cfg.window / 2);
    auto starts = [&](std::int64_t full, std::int64_t win) {
      std::vector<std::int64_t> s;
      for (std::int64_t p = 0;; p += stride) {
        if (p + win >= full) {
          s.push_back(full - win);  // final window flush with the border
          break;
        }
        s.push_back(p);
      }
      return s;
    };
    Volume sum(h, w, cfg.n_clusters);
    std::vector<std::int64_t> hits(static_cast<std::size_t>(h * w), 0);
    for (std::int64_t r0 : starts(h, win_h)) {
      for (std::int64_t c0 : starts(w, win_w)) {
        Volume logits = provider(static_cast<std::int64_t>(img), r0, c0, win_h, win_w);
        if (logits.h != win_h || logits.w != win_w || logits.c != cfg.n_clusters)
          throw DimensionError("evaluate: provider returned " + logits.shape_str() +
                               " for a (" + std::to_string(win_h) + ", " +
                               std::to_string(win_w) + ") window");
        for (std::int64_t r = 0; r < win_h; ++r)
          for (std::int64_t c = 0; c < win_w; ++c) {
            for (std::int64_t ch = 0; ch < cfg.n_clusters; ++ch)
              sum.at(r0 + r, c0 + c, ch) += logits.at(r, c, ch);
            hits[static_cast<std::size_t>((r0 + r) * w + (c0 + c))] += 1;
          }
      }
    }
    for (std::int64_t r = 0; r < h; ++r)
      for (std::int64_t c = 0; c < w; ++c) {
        auto n = static_cast<double>(hits[static_cast<std::size_t>(r * w + c)]);
        for (std::int64_t ch = 0; ch < cfg.n_clusters; ++ch) sum.at(r, c, ch) /= n;
      }
    pred.push_back(argmax_assign(sum));
  }
  return evaluate_masks(pred, gt, cfg.n_clusters, cfg.n_classes, cfg.match);
}

}  // namespace nef
