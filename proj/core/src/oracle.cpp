#include "nef/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>

namespace nef {

namespace {

double off_diagonal_fro(const Tensor<double>& m) {
  double s = 0.0;
  for (std::int64_t i = 0; i < m.rows; ++i)
    for (std::int64_t j = i + 1; j < m.cols; ++j) s += m.at(i, j) * m.at(i, j);
  return std::sqrt(2.0 * s);
}

}  // namespace

EigenDecomposition eigh(const Tensor<double>& a) {
  if (a.rows != a.cols) throw DimensionError("eigh: matrix must be square, got " + a.shape_str());
  std::int64_t n = a.rows;
  a.check_finite("eigh input");
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i + 1; j < n; ++j)
      if (std::abs(a.at(i, j) - a.at(j, i)) > 1e-8)
        throw DataError("eigh: input asymmetric at (" + std::to_string(i) + ", " +
                        std::to_string(j) + ")");

  Tensor<double> m = a;
  // vt rows are eigenvector candidates; row storage keeps every rotation a
  // pair of contiguous axpy passes
  Tensor<double> vt = Tensor<double>::identity(n);

  double fro = 0.0;
  for (double v : a.data) fro += v * v;
  fro = std::sqrt(fro);
  double target = 1e-10 * fro;
  // entries this small cannot lift the off-norm above target even if all of
  // them survive
  double skip = n > 0 ? target / (static_cast<double>(n) * static_cast<double>(n)) : 0.0;

  bool converged = fro == 0.0 || off_diagonal_fro(m) < target;
  int sweep = 0;
  std::vector<double> rp(static_cast<std::size_t>(n)), rq(static_cast<std::size_t>(n));
  for (; sweep < 100 && !converged; ++sweep) {
    for (std::int64_t p = 0; p < n - 1; ++p) {
      for (std::int64_t q = p + 1; q < n; ++q) {
        double mpq = m.at(p, q);
        if (std::abs(mpq) <= skip) continue;
        double theta = (m.at(q, q) - m.at(p, p)) / (2.0 * mpq);
        double t;
        if (std::abs(theta) > 1e150) {
          t = 1.0 / (2.0 * theta);
        } else {
          t = 1.0 / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
          if (theta < 0.0) t = -t;
        }
        double c = 1.0 / std::sqrt(t * t + 1.0);
        double s = t * c;

        double* mp = m.row_ptr(p);
        double* mq = m.row_ptr(q);
        for (std::int64_t j = 0; j < n; ++j) {
          rp[static_cast<std::size_t>(j)] = c * mp[j] - s * mq[j];
          rq[static_cast<std::size_t>(j)] = s * mp[j] + c * mq[j];
        }
        double pp = c * rp[static_cast<std::size_t>(p)] - s * rp[static_cast<std::size_t>(q)];
        double pq = s * rp[static_cast<std::size_t>(p)] + c * rp[static_cast<std::size_t>(q)];
        double qp = c * rq[static_cast<std::size_t>(p)] - s * rq[static_cast<std::size_t>(q)];
        double qq = s * rq[static_cast<std::size_t>(p)] + c * rq[static_cast<std::size_t>(q)];
        rp[static_cast<std::size_t>(p)] = pp;
        rp[static_cast<std::size_t>(q)] = pq;
        rq[static_cast<std::size_t>(p)] = qp;
        rq[static_cast<std::size_t>(q)] = qq;
        std::copy(rp.begin(), rp.end(), mp);
        std::copy(rq.begin(), rq.end(), mq);
        for (std::int64_t i = 0; i < n; ++i) {
          m.at(i, p) = mp[i];
          m.at(i, q) = mq[i];
        }

        double* vp = vt.row_ptr(p);
        double* vq = vt.row_ptr(q);
        for (std::int64_t j = 0; j < n; ++j) {
          double tp = c * vp[j] - s * vq[j];
          double tq = s * vp[j] + c * vq[j];
          vp[j] = tp;
          vq[j] = tq;
        }
      }
    }
    converged = off_diagonal_fro(m) < target;
  }
  if (!converged)
    throw NumericError("eigh: Jacobi sweeps did not converge within 100 sweeps (n=" +
                       std::to_string(n) + ")");

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::int64_t x, std::int64_t y) {
    return m.at(x, x) > m.at(y, y);
  });

  EigenDecomposition out;
  out.eigenvalues.resize(static_cast<std::size_t>(n));
  out.eigenvectors = Tensor<double>(n, n);
  for (std::int64_t j = 0; j < n; ++j) {
    std::int64_t src = order[static_cast<std::size_t>(j)];
    out.eigenvalues[static_cast<std::size_t>(j)] = m.at(src, src);
    // sign convention: largest-magnitude entry positive, first such on ties
    double best = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      double v = vt.at(src, i);
      if (std::abs(v) > std::abs(best)) best = v;
    }
    double flip = best < 0.0 ? -1.0 : 1.0;
    for (std::int64_t i = 0; i < n; ++i) out.eigenvectors.at(i, j) = flip * vt.at(src, i);
  }
  return out;
}

KMeansResult kmeans_fit(const Tensor<double>& points, std::int64_t n_clusters, CounterRng& rng) {
  std::int64_t n = points.rows, d = points.cols;
  if (n_clusters < 1) throw ConfigError("kmeans: n_clusters must be at least 1");
  if (n < n_clusters)
    throw DataError("kmeans: " + std::to_string(n) + " points cannot fill " +
                    std::to_string(n_clusters) + " clusters");
  points.check_finite("kmeans input");

  auto dist2_to = [&](const Tensor<double>& centers, std::int64_t ci, std::int64_t pi) {
    double s = 0.0;
    for (std::int64_t j = 0; j < d; ++j) {
      double diff = points.at(pi, j) - centers.at(ci, j);
      s += diff * diff;
    }
    return s;
  };

  // k-means++ seeding
  Tensor<double> centers(n_clusters, d);
  std::vector<double> best_d2(static_cast<std::size_t>(n));
  {
    std::int64_t first = static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(n)));
    for (std::int64_t j = 0; j < d; ++j) centers.at(0, j) = points.at(first, j);
    for (std::int64_t i = 0; i < n; ++i) best_d2[static_cast<std::size_t>(i)] = dist2_to(centers, 0, i);
    for (std::int64_t c = 1; c < n_clusters; ++c) {
      double total = std::accumulate(best_d2.begin(), best_d2.end(), 0.0);
      std::int64_t pick = 0;
      if (total > 0.0) {
        double target = rng.uniform() * total;
        double run = 0.0;
        pick = n - 1;
        for (std::int64_t i = 0; i < n; ++i) {
          run += best_d2[static_cast<std::size_t>(i)];
          if (run >= target) {
            pick = i;
            break;
          }
        }
      } else {
        // all remaining distances zero (duplicated points); take the lowest
        // index not already chosen
        pick = std::min<std::int64_t>(c, n - 1);
      }
      for (std::int64_t j = 0; j < d; ++j) centers.at(c, j) = points.at(pick, j);
      for (std::int64_t i = 0; i < n; ++i)
        best_d2[static_cast<std::size_t>(i)] =
            std::min(best_d2[static_cast<std::size_t>(i)], dist2_to(centers, c, i));
    }
  }

  std::vector<std::int32_t> labels(static_cast<std::size_t>(n), 0);
  std::vector<double> point_d2(static_cast<std::size_t>(n), 0.0);
  KMeansResult out;
  for (std::int64_t iter = 0; iter < 300; ++iter) {
    out.iterations = iter + 1;
    for (std::int64_t i = 0; i < n; ++i) {
      double best = dist2_to(centers, 0, i);
      std::int32_t arg = 0;
      for (std::int64_t c = 1; c < n_clusters; ++c) {
        double d2 = dist2_to(centers, c, i);
        if (d2 < best) {
          best = d2;
          arg = static_cast<std::int32_t>(c);
        }
      }
      labels[static_cast<std::size_t>(i)] = arg;
      point_d2[static_cast<std::size_t>(i)] = best;
    }

    Tensor<double> next(n_clusters, d);
    std::vector<std::int64_t> count(static_cast<std::size_t>(n_clusters), 0);
    for (std::int64_t i = 0; i < n; ++i) {
      std::int32_t c = labels[static_cast<std::size_t>(i)];
      count[static_cast<std::size_t>(c)] += 1;
      for (std::int64_t j = 0; j < d; ++j) next.at(c, j) += points.at(i, j);
    }
    for (std::int64_t c = 0; c < n_clusters; ++c) {
      if (count[static_cast<std::size_t>(c)] == 0) {
        // re-seed to the farthest point from its current center
        std::int64_t far = 0;
        for (std::int64_t i = 1; i < n; ++i)
          if (point_d2[static_cast<std::size_t>(i)] > point_d2[static_cast<std::size_t>(far)])
            far = i;
        for (std::int64_t j = 0; j < d; ++j) next.at(c, j) = points.at(far, j);
        point_d2[static_cast<std::size_t>(far)] = 0.0;
      } else {
        for (std::int64_t j = 0; j < d; ++j)
          next.at(c, j) /= static_cast<double>(count[static_cast<std::size_t>(c)]);
      }
    }

    double max_move2 = 0.0;
    for (std::int64_t c = 0; c < n_clusters; ++c) {
      double m2 = 0.0;
      for (std::int64_t j = 0; j < d; ++j) {
        double diff = next.at(c, j) - centers.at(c, j);
        m2 += diff * diff;
      }
      max_move2 = std::max(max_move2, m2);
    }
    centers = next;
    if (max_move2 < 1e-6 * 1e-6) break;
  }

  // final assignment against the settled centers
  out.inertia = 0.0;
  for (std::int64_t i = 0; i < n; ++i) {
    double best = dist2_to(centers, 0, i);
    std::int32_t arg = 0;
    for (std::int64_t c = 1; c < n_clusters; ++c) {
      double d2 = dist2_to(centers, c, i);
      if (d2 < best) {
        best = d2;
        arg = static_cast<std::int32_t>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
    out.inertia += best;
  }
  out.centers = std::move(centers);
  out.labels = std::move(labels);
  return out;
}

std::vector<std::int32_t> kmeans_predict(const Tensor<double>& centers,
                                         const Tensor<double>& points) {
  if (centers.cols != points.cols)
    throw DimensionError("kmeans_predict: dimension mismatch " + centers.shape_str() + " vs " +
                         points.shape_str());
  std::vector<std::int32_t> labels(static_cast<std::size_t>(points.rows));
  for (std::int64_t i = 0; i < points.rows; ++i) {
    double best = 0.0;
    std::int32_t arg = 0;
    for (std::int64_t c = 0; c < centers.rows; ++c) {
      double d2 = 0.0;
      for (std::int64_t j = 0; j < points.cols; ++j) {
        double diff = points.at(i, j) - centers.at(c, j);
        d2 += diff * diff;
      }
      if (c == 0 || d2 < best) {
        best = d2;
        arg = static_cast<std::int32_t>(c);
      }
    }
    labels[static_cast<std::size_t>(i)] = arg;
  }
  return labels;
}

std::vector<std::int32_t> spectral_cluster(const Tensor<double>& kernel, std::int64_t top_k,
                                           std::int64_t n_clusters, std::uint64_t seed,
                                           bool row_normalize) {
  if (top_k < 1 || top_k > kernel.rows)
    throw ConfigError("spectral_cluster: top_k must be in [1, n]");
  return spectral_cluster(eigh(kernel), top_k, n_clusters, seed, row_normalize);
}

std::vector<std::int32_t> spectral_cluster(const EigenDecomposition& eig, std::int64_t top_k,
                                           std::int64_t n_clusters, std::uint64_t seed,
                                           bool row_normalize) {
  std::int64_t n = eig.eigenvectors.rows;
  if (top_k < 1 || top_k > eig.eigenvectors.cols)
    throw ConfigError("spectral_cluster: top_k must be in [1, n]");
  Tensor<double> embed(n, top_k);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = 0; j < top_k; ++j) embed.at(i, j) = eig.eigenvectors.at(i, j);
  if (row_normalize) {
    for (std::int64_t i = 0; i < embed.rows; ++i) {
      double norm = 0.0;
      for (std::int64_t j = 0; j < top_k; ++j) norm += embed.at(i, j) * embed.at(i, j);
      norm = std::sqrt(norm);
      if (norm > 0.0)
        for (std::int64_t j = 0; j < top_k; ++j) embed.at(i, j) /= norm;
    }
  }
  CounterRng rng(seed);
  return kmeans_fit(embed, n_clusters, rng).labels;
}

double adjusted_rand_index(const std::vector<std::int32_t>& a,
                           const std::vector<std::int32_t>& b) {
  if (a.size() != b.size())
    throw DimensionError("adjusted_rand_index: labelings differ in length, " +
                         std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  if (a.empty()) throw DataError("adjusted_rand_index: empty labelings");
  std::map<std::pair<std::int32_t, std::int32_t>, std::int64_t> joint;
  std::map<std::int32_t, std::int64_t> ca, cb;
  for (std::size_t i = 0; i < a.size(); ++i) {
    joint[{a[i], b[i]}] += 1;
    ca[a[i]] += 1;
    cb[b[i]] += 1;
  }
  auto comb2 = [](std::int64_t x) { return 0.5 * static_cast<double>(x) * static_cast<double>(x - 1); };
  double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
  for (const auto& [k, v] : joint) sum_joint += comb2(v);
  for (const auto& [k, v] : ca) sum_a += comb2(v);
  for (const auto& [k, v] : cb) sum_b += comb2(v);
  double total = comb2(static_cast<std::int64_t>(a.size()));
  double expected = sum_a * sum_b / total;
  double maximum = 0.5 * (sum_a + sum_b);
  double denom = maximum - expected;
  if (denom == 0.0) return 1.0;  // both partitions impose the same trivial structure
  return (sum_joint - expected) / denom;
}

}  // namespace nef
