#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "devmine/error.hpp"
#include "devmine/stats.hpp"

using namespace devmine;

namespace {

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
  const double my = std::accumulate(y.begin(), y.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return sxy / std::sqrt(sxx * syy);
}

// Average ranks by brute force: 1 + #smaller + (#equal - 1) / 2.
std::vector<double> brute_ranks(const std::vector<double>& v) {
  std::vector<double> r;
  for (double a : v) {
    double less = 0, equal = 0;
    for (double b : v) less += b < a, equal += b == a;
    r.push_back(1 + less + (equal - 1) / 2);
  }
  return r;
}

Matrix blobs(std::vector<int>& truth, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double centers[3][2] = {{0, 0}, {10, 0}, {5, 8.66}};
  std::normal_distribution<double> noise(0.0, 1.0);  // 0.1 x inter-center distance
  Matrix pts(0, 2);
  for (int i = 0; i < 300; ++i) {
    const int c = i % 3;
    pts.push_row(std::vector<double>{centers[c][0] + noise(rng), centers[c][1] + noise(rng)});
    truth.push_back(c);
  }
  return pts;
}

}  // namespace

TEST(Spearman, DocumentedExamples) {
  const std::vector<double> a = {1, 2, 3, 4, 5};
  EXPECT_DOUBLE_EQ(spearman_rho(a, a), 1.0);
  EXPECT_NEAR(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{6, 4, 5}), -0.5, 1e-12);
  EXPECT_THROW(spearman_rho(std::vector<double>{1, 1, 1}, std::vector<double>{1, 2, 3}), DataError);
  EXPECT_THROW(spearman_rho(std::vector<double>{1, 2}, std::vector<double>{1, 2}), ConfigError);
  EXPECT_THROW(spearman_rho(std::vector<double>{1, 2, 3}, std::vector<double>{1, 2}), ConfigError);
}

TEST(Spearman, AgreesWithSumOfSquaredRankDifferences) {
  std::mt19937_64 rng(1);
  for (int round = 0; round < 200; ++round) {
    const std::size_t n = 3 + rng() % 30;
    std::vector<double> x(n), y(n);
    std::iota(x.begin(), x.end(), 0.0);
    std::iota(y.begin(), y.end(), 0.0);
    std::shuffle(x.begin(), x.end(), rng);
    std::shuffle(y.begin(), y.end(), rng);
    double d2 = 0;
    for (std::size_t i = 0; i < n; ++i) d2 += (x[i] - y[i]) * (x[i] - y[i]);
    const double nn = static_cast<double>(n);
    EXPECT_NEAR(spearman_rho(x, y), 1 - 6 * d2 / (nn * (nn * nn - 1)), 1e-9);
  }
}

TEST(Spearman, TiesUseAverageRanks) {
  std::mt19937_64 rng(2);
  for (int round = 0; round < 200; ++round) {
    const std::size_t n = 3 + rng() % 20;
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = static_cast<double>(rng() % 4);
    for (auto& v : y) v = static_cast<double>(rng() % 5);
    const auto rx = brute_ranks(x), ry = brute_ranks(y);
    EXPECT_EQ(average_ranks(x), rx);
    if (std::all_of(x.begin(), x.end(), [&](double v) { return v == x[0]; }) ||
        std::all_of(y.begin(), y.end(), [&](double v) { return v == y[0]; }))
      continue;
    EXPECT_NEAR(spearman_rho(x, y), pearson(rx, ry), 1e-9);
  }
}

TEST(Spearman, MonotoneTransformInvariance) {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.1, 10);
  std::vector<double> x(15), y(15);
  for (auto& v : x) v = u(rng);
  for (auto& v : y) v = u(rng);
  const double rho = spearman_rho(x, y);
  std::vector<double> ex, neg;
  for (double v : x) ex.push_back(std::exp(v)), neg.push_back(-v * v * v);
  EXPECT_NEAR(spearman_rho(ex, y), rho, 1e-12);
  EXPECT_NEAR(spearman_rho(neg, y), -rho, 1e-12);
  EXPECT_NEAR(spearman_rho(x, x), 1.0, 1e-12);
}

TEST(SpearmanP, ExactEnumeration) {
  EXPECT_NEAR(spearman_p_value(1.0, 5, PValueMethod::exact_permutation).value, 2.0 / 120.0, 1e-15);
  EXPECT_NEAR(spearman_p_value(0.0, 6, PValueMethod::exact_permutation).value, 1.0, 1e-12);
  EXPECT_THROW(spearman_p_value(0.5, 10, PValueMethod::exact_permutation), ConfigError);
  EXPECT_THROW(spearman_p_value(0.5, 2), ConfigError);
}

TEST(SpearmanP, TApproximation) {
  const auto p = spearman_p_value(1.0, 20, PValueMethod::t_approx);
  EXPECT_EQ(p.value, 0.0);
  EXPECT_TRUE(p.finite_sample_warning);
  // t = 0.5 * sqrt(18 / 0.75) = 2.449..., two-sided with 18 df (scipy.stats.t.sf reference)
  EXPECT_NEAR(spearman_p_value(0.5, 20, PValueMethod::t_approx).value, 0.0247695588, 1e-9);
  EXPECT_FALSE(spearman_p_value(0.5, 20, PValueMethod::t_approx).finite_sample_warning);
}

TEST(SpearmanP, ExactAndTAgreeAtNine) {
  std::mt19937_64 rng(4);
  for (int round = 0; round < 200; ++round) {
    std::vector<double> x(9), y(9);
    std::iota(x.begin(), x.end(), 0.0);
    std::iota(y.begin(), y.end(), 0.0);
    std::shuffle(y.begin(), y.end(), rng);
    const double rho = spearman_rho(x, y);
    if (std::abs(rho) == 1.0) continue;
    EXPECT_NEAR(spearman_p_value(rho, 9, PValueMethod::exact_permutation).value,
                spearman_p_value(rho, 9, PValueMethod::t_approx).value, 0.05);
  }
}

TEST(SpearmanP, SignificanceRule) {
  const std::vector<double> x = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  const std::vector<double> y = {2, 1, 4, 3, 6, 5, 8, 7, 10, 9};
  const auto r = spearman(x, y, 0.05);
  EXPECT_EQ(r.significant, r.p_value < 0.05);
  EXPECT_EQ(r.n, 10u);
}

TEST(CorrelationMatrix, MasksInsignificantCells) {
  Matrix data(0, 3);
  for (int i = 0; i < 12; ++i) data.push_row(std::vector<double>{double(i), double((i * 7) % 12), 1.0});
  const auto m = correlation_matrix({"a", "b", "c"}, data, 0.05);
  EXPECT_DOUBLE_EQ(m.rho(0, 0), 1.0);
  EXPECT_TRUE(std::isnan(m.rho(0, 2)));
  const auto csv = m.rho_csv();
  EXPECT_EQ(csv.rfind("metric,a,b,c\n", 0), 0u);
  EXPECT_NE(csv.find("c,,,"), std::string::npos);
}

TEST(KMeans, SeparatedPointsAndDegenerateK) {
  const auto pts = Matrix::column({0, 0.1, 10, 10.1});
  const auto c = kmeans(pts, 2, 1);
  EXPECT_EQ(c.assignment[0], c.assignment[1]);
  EXPECT_EQ(c.assignment[2], c.assignment[3]);
  EXPECT_NE(c.assignment[0], c.assignment[2]);
  EXPECT_NEAR(kmeans(pts, 4, 1).distortion, 0.0, 1e-15);
  EXPECT_THROW(kmeans(pts, 5, 1), ConfigError);
  EXPECT_THROW(kmeans(pts, 0, 1), ConfigError);
}

TEST(KMeans, DistortionNeverIncreasesAndIsDeterministic) {
  std::vector<int> truth;
  const auto pts = blobs(truth, 7);
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = kmeans(pts, 5, seed);
    for (std::size_t i = 1; i < c.distortion_history.size(); ++i)
      EXPECT_LE(c.distortion_history[i], c.distortion_history[i - 1] + 1e-9);
    const auto again = kmeans(pts, 5, seed);
    EXPECT_EQ(c.assignment, again.assignment);
    for (std::size_t p = 0; p < pts.rows(); ++p) {
      double best = INFINITY;
      for (std::size_t k = 0; k < c.centroids.rows(); ++k) best = std::min(best, squared_distance(pts.row(p), c.centroids.row(k)));
      EXPECT_NEAR(squared_distance(pts.row(p), c.centroids.row(c.assignment[p])), best, 1e-9);
    }
  }
}

TEST(KMeans, RecoversBlobs) {
  std::vector<int> truth;
  const auto pts = blobs(truth, 11);
  const auto c = kmeans_best_of(pts, 3, 5);
  int agree = 0;
  std::vector<int> perm = {0, 1, 2};
  int best = 0;
  do {
    agree = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) agree += perm[c.assignment[i]] == truth[i];
    best = std::max(best, agree);
  } while (std::next_permutation(perm.begin(), perm.end()));
  EXPECT_GE(best, 297);
}

TEST(ModelSelection, ElbowAndSilhouettePickThreeBlobs) {
  std::vector<int> truth;
  const auto pts = blobs(truth, 13);
  std::vector<int> ks;
  for (int k = 2; k <= 10; ++k) ks.push_back(k);
  const auto elbow = elbow_select(pts, ks, 1);
  EXPECT_EQ(elbow.chosen_k, 3);
  for (std::size_t i = 1; i < elbow.distortions.size(); ++i) EXPECT_LE(elbow.distortions[i], elbow.distortions[i - 1]);
  EXPECT_EQ(silhouette_select(pts, ks, 1).chosen_k, 3);
  EXPECT_THROW(elbow_select(pts, std::vector<int>{2, 3}, 1), ConfigError);
  EXPECT_THROW(elbow_select(pts, std::vector<int>{1, 2, 3}, 1), ConfigError);
}

TEST(Silhouette, RangeAndHandCases) {
  Matrix two(0, 1);
  for (double v : {0.0, 0.01, 100.0, 100.01}) two.push_row(std::vector<double>{v});
  const std::vector<int> a = {0, 0, 1, 1};
  EXPECT_GE(silhouette_score(two, a).mean, 0.95);

  const auto same = Matrix::column({1, 1, 1, 1});
  EXPECT_LE(silhouette_score(same, a).mean, 0.0);

  const std::vector<int> singleton = {0, 0, 0, 1};
  EXPECT_EQ(silhouette_score(two, singleton).values[3], 0.0);
  EXPECT_THROW(silhouette_score(two, std::vector<int>{0, 0, 0, 0}), DataError);

  std::vector<int> truth;
  const auto pts = blobs(truth, 17);
  for (double v : silhouette_score(pts, kmeans(pts, 4, 3).assignment).values) {
    EXPECT_GE(v, -1.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(LevelPartition, OptimalOneDimensionalClusters) {
  const std::vector<double> v = {2, 3.9, 4.2, 8.5, 9.5, 12};
  const auto p = level_partition(v, 3, {"LOW", "MEDIUM", "HIGH"}, 1);
  // Least-squares optimum; the midpoint edges sit at 6.35 and 10.75.
  EXPECT_EQ(p.label_of(4.2), "LOW");
  EXPECT_EQ(p.label_of(8.5), "MEDIUM");
  EXPECT_EQ(p.label_of(9.5), "MEDIUM");
  EXPECT_EQ(p.label_of(12), "HIGH");
  EXPECT_NEAR(p.upper_edges[0], 6.35, 1e-12);
  EXPECT_NEAR(p.upper_edges[1], 10.75, 1e-12);
}

TEST(LevelPartition, MonotoneAndBoundaryRules) {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0, 20);
  std::vector<double> v(60);
  for (auto& x : v) x = u(rng);
  const auto p = level_partition(v, 3, default_level_labels(3), 2);
  auto sorted = v;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 1; i < sorted.size(); ++i) EXPECT_LE(p.level_of(sorted[i - 1]), p.level_of(sorted[i]));
  EXPECT_EQ(p.level_of(p.upper_edges[0]), 0u);  // edges are inclusive upper bounds

  const auto one = level_partition(v, 1, {"ALL"}, 2);
  EXPECT_EQ(one.label_of(-100), "ALL");
  EXPECT_EQ(one.label_of(1e9), "ALL");

  EXPECT_THROW(level_partition(v, 3, {"A", "B"}, 1), ConfigError);
  EXPECT_THROW(level_partition(std::vector<double>{1, 1, 2}, 3, default_level_labels(3), 1), DataError);
  EXPECT_EQ(default_level_labels(2), (std::vector<std::string>{"LOW", "HIGH"}));
  EXPECT_EQ(default_level_labels(4).back(), "L4");
}
