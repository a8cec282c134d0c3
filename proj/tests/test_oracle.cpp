#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "nef/oracle.hpp"
#include "nef/rng.hpp"
#include "nef/tensor.hpp"

using nef::CounterRng;
using nef::Tensor;

namespace {

Tensor<double> sym(std::initializer_list<std::initializer_list<double>> rows) {
  return Tensor<double>::from_rows(rows);
}

Tensor<double> random_symmetric(std::int64_t n, CounterRng& rng) {
  Tensor<double> a(n, n);
  for (std::int64_t i = 0; i < n; ++i)
    for (std::int64_t j = i; j < n; ++j) {
      double v = rng.uniform(-1.0, 1.0);
      a.at(i, j) = v;
      a.at(j, i) = v;
    }
  return a;
}

}  // namespace

TEST_CASE("eigh solves the 2x2 exchange-plus-shift matrix exactly") {
  auto eig = nef::eigh(sym({{2, 1}, {1, 2}}));
  double r = 0.70710678118654746;
  CHECK(eig.eigenvalues[0] == doctest::Approx(3.0).epsilon(1e-13));
  CHECK(eig.eigenvalues[1] == doctest::Approx(1.0).epsilon(1e-13));
  CHECK(eig.eigenvectors.at(0, 0) == doctest::Approx(r).epsilon(1e-13));
  CHECK(eig.eigenvectors.at(1, 0) == doctest::Approx(r).epsilon(1e-13));
  // sign convention: first largest-magnitude entry is made positive
  CHECK(eig.eigenvectors.at(0, 1) == doctest::Approx(r).epsilon(1e-13));
  CHECK(eig.eigenvectors.at(1, 1) == doctest::Approx(-r).epsilon(1e-13));
}

TEST_CASE("eigh on the 3-site path matrix") {
  auto eig = nef::eigh(sym({{0, 1, 0}, {1, 0, 1}, {0, 1, 0}}));
  double s = std::sqrt(2.0);
  CHECK(eig.eigenvalues[0] == doctest::Approx(s).epsilon(1e-13));
  CHECK(eig.eigenvalues[1] == doctest::Approx(0.0).epsilon(1e-13));
  CHECK(eig.eigenvalues[2] == doctest::Approx(-s).epsilon(1e-13));
  // (1, sqrt2, 1)/2 for the top; middle entry dominates the bottom vector,
  // so the flip makes it positive and the outer entries negative
  CHECK(eig.eigenvectors.at(0, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(eig.eigenvectors.at(1, 0) == doctest::Approx(s / 2).epsilon(1e-12));
  CHECK(eig.eigenvectors.at(2, 0) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(eig.eigenvectors.at(1, 2) == doctest::Approx(s / 2).epsilon(1e-12));
  CHECK(eig.eigenvectors.at(0, 2) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("eigh leaves a diagonal matrix alone, sorted") {
  auto eig = nef::eigh(sym({{1, 0, 0}, {0, 5, 0}, {0, 0, 3}}));
  CHECK(eig.eigenvalues[0] == 5.0);
  CHECK(eig.eigenvalues[1] == 3.0);
  CHECK(eig.eigenvalues[2] == 1.0);
  CHECK(eig.eigenvectors.at(1, 0) == 1.0);
  CHECK(eig.eigenvectors.at(2, 1) == 1.0);
  CHECK(eig.eigenvectors.at(0, 2) == 1.0);
}

TEST_CASE("eigh rejects asymmetric and non-square input") {
  CHECK_THROWS_AS(nef::eigh(sym({{1, 2}, {2.1, 1}})), nef::DataError);
  CHECK_THROWS_AS(nef::eigh(Tensor<double>(2, 3)), nef::DimensionError);
}

TEST_CASE("eigh random matrices: reconstruction, orthonormality, ordering") {
  CounterRng rng(99);
  for (std::int64_t n : {2, 3, 5, 17, 40}) {
    auto a = random_symmetric(n, rng);
    auto eig = nef::eigh(a);

    for (std::size_t j = 1; j < eig.eigenvalues.size(); ++j)
      CHECK(eig.eigenvalues[j - 1] >= eig.eigenvalues[j]);

    // A v_j = lambda_j v_j
    double resid = 0.0;
    for (std::int64_t j = 0; j < n; ++j)
      for (std::int64_t i = 0; i < n; ++i) {
        double av = 0.0;
        for (std::int64_t t = 0; t < n; ++t) av += a.at(i, t) * eig.eigenvectors.at(t, j);
        resid = std::max(resid, std::abs(av - eig.eigenvalues[static_cast<std::size_t>(j)] *
                                                  eig.eigenvectors.at(i, j)));
      }
    CHECK(resid < 1e-9);

    // V^T V = I
    for (std::int64_t i = 0; i < n; ++i)
      for (std::int64_t j = 0; j < n; ++j) {
        double dot = 0.0;
        for (std::int64_t t = 0; t < n; ++t)
          dot += eig.eigenvectors.at(t, i) * eig.eigenvectors.at(t, j);
        CHECK(std::abs(dot - (i == j ? 1.0 : 0.0)) < 1e-10);
      }

    // trace is preserved
    double tra = 0.0, trl = 0.0;
    for (std::int64_t i = 0; i < n; ++i) tra += a.at(i, i);
    for (double l : eig.eigenvalues) trl += l;
    CHECK(tra == doctest::Approx(trl).epsilon(1e-10));
  }
}

TEST_CASE("eigh is deterministic") {
  CounterRng rng(5);
  auto a = random_symmetric(12, rng);
  auto e1 = nef::eigh(a);
  auto e2 = nef::eigh(a);
  CHECK(e1.eigenvalues == e2.eigenvalues);
  CHECK(e1.eigenvectors.data == e2.eigenvectors.data);
}

TEST_CASE("kmeans separates two far 1-d groups") {
  Tensor<double> pts(4, 1);
  pts.at(0, 0) = 0.0;
  pts.at(1, 0) = 0.1;
  pts.at(2, 0) = 10.0;
  pts.at(3, 0) = 10.1;
  CounterRng rng(0);
  auto res = nef::kmeans_fit(pts, 2, rng);
  std::vector<double> centers = {res.centers.at(0, 0), res.centers.at(1, 0)};
  std::sort(centers.begin(), centers.end());
  CHECK(centers[0] == doctest::Approx(0.05).epsilon(1e-12));
  CHECK(centers[1] == doctest::Approx(10.05).epsilon(1e-12));
  CHECK(res.inertia == doctest::Approx(0.01).epsilon(1e-10));
  CHECK(res.labels[0] == res.labels[1]);
  CHECK(res.labels[2] == res.labels[3]);
  CHECK(res.labels[0] != res.labels[2]);
}

TEST_CASE("kmeans with as many clusters as points reaches zero inertia") {
  CounterRng srng(3);
  Tensor<double> pts(6, 2);
  for (auto& x : pts.data) x = srng.uniform(-1.0, 1.0);
  CounterRng rng(1);
  auto res = nef::kmeans_fit(pts, 6, rng);
  CHECK(res.inertia == doctest::Approx(0.0).epsilon(1e-20));
  std::vector<std::int32_t> sorted = res.labels;
  std::sort(sorted.begin(), sorted.end());
  for (std::int32_t c = 0; c < 6; ++c) CHECK(sorted[static_cast<std::size_t>(c)] == c);
}

TEST_CASE("kmeans survives fully duplicated points") {
  Tensor<double> pts(4, 2);
  for (auto& x : pts.data) x = 0.7;
  CounterRng rng(9);
  auto res = nef::kmeans_fit(pts, 2, rng);
  CHECK(res.inertia == 0.0);
  for (auto l : res.labels) CHECK(l == res.labels[0]);
}

TEST_CASE("kmeans recovers three well-separated planted blobs") {
  CounterRng data_rng(42);
  std::int64_t per = 20;
  Tensor<double> pts(3 * per, 2);
  std::vector<std::int32_t> truth(static_cast<std::size_t>(3 * per));
  double cx[] = {0.0, 10.0, 0.0}, cy[] = {0.0, 0.0, 10.0};
  for (std::int64_t b = 0; b < 3; ++b)
    for (std::int64_t i = 0; i < per; ++i) {
      std::int64_t r = b * per + i;
      pts.at(r, 0) = cx[b] + data_rng.uniform(-0.5, 0.5);
      pts.at(r, 1) = cy[b] + data_rng.uniform(-0.5, 0.5);
      truth[static_cast<std::size_t>(r)] = static_cast<std::int32_t>(b);
    }
  CounterRng rng(7);
  auto res = nef::kmeans_fit(pts, 3, rng);
  CHECK(nef::adjusted_rand_index(res.labels, truth) == doctest::Approx(1.0).epsilon(1e-12));

  // predict on the training points reproduces the fit labels
  CHECK(nef::kmeans_predict(res.centers, pts) == res.labels);
}

TEST_CASE("kmeans is deterministic under a fixed seed") {
  CounterRng data_rng(8);
  Tensor<double> pts(30, 3);
  for (auto& x : pts.data) x = data_rng.uniform(-1.0, 1.0);
  CounterRng r1(13), r2(13);
  auto a = nef::kmeans_fit(pts, 4, r1);
  auto b = nef::kmeans_fit(pts, 4, r2);
  CHECK(a.labels == b.labels);
  CHECK(a.centers.data == b.centers.data);
  CHECK(a.inertia == b.inertia);
}

TEST_CASE("kmeans input validation") {
  Tensor<double> pts(2, 1);
  CounterRng rng(0);
  CHECK_THROWS_AS(nef::kmeans_fit(pts, 0, rng), nef::ConfigError);
  CHECK_THROWS_AS(nef::kmeans_fit(pts, 3, rng), nef::DataError);
}

TEST_CASE("adjusted rand index hand values") {
  CHECK(nef::adjusted_rand_index({0, 0, 1, 1}, {0, 1, 0, 1}) ==
        doctest::Approx(-0.5).epsilon(1e-15));
  CHECK(nef::adjusted_rand_index({0, 0, 1, 1}, {0, 0, 1, 1}) == 1.0);
  // invariant to renaming
  CHECK(nef::adjusted_rand_index({0, 0, 1, 1}, {5, 5, 2, 2}) == 1.0);
  // degenerate partitions agree with themselves
  CHECK(nef::adjusted_rand_index({3, 3, 3}, {1, 1, 1}) == 1.0);
  CHECK(nef::adjusted_rand_index({0, 1, 2}, {5, 6, 7}) == 1.0);
  CHECK_THROWS_AS(nef::adjusted_rand_index({0, 1}, {0, 1, 2}), nef::DimensionError);
  CHECK_THROWS_AS(nef::adjusted_rand_index({}, {}), nef::DataError);
}

TEST_CASE("adjusted rand index of independent labelings is near zero") {
  CounterRng rng(77);
  std::vector<std::int32_t> a(1000), b(1000);
  for (std::size_t i = 0; i < a.size(); ++i) {
    a[i] = static_cast<std::int32_t>(rng.uniform_index(4));
    b[i] = static_cast<std::int32_t>(rng.uniform_index(4));
  }
  CHECK(std::abs(nef::adjusted_rand_index(a, b)) < 0.1);
}

TEST_CASE("spectral clustering splits a two-block kernel") {
  Tensor<double> kern(4, 4);
  for (std::int64_t i = 0; i < 4; ++i)
    for (std::int64_t j = 0; j < 4; ++j)
      kern.at(i, j) = ((i < 2) == (j < 2)) ? 0.5 : 0.0;
  auto labels = nef::spectral_cluster(kern, 2, 2, 0);
  CHECK(nef::adjusted_rand_index(labels, {0, 0, 1, 1}) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK_THROWS_AS(nef::spectral_cluster(kern, 0, 2, 0), nef::ConfigError);
  CHECK_THROWS_AS(nef::spectral_cluster(kern, 5, 2, 0), nef::ConfigError);
}
