#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "devmine/matrix.hpp"

namespace devmine {

// ---- rank correlation ------------------------------------------------------

/// 1-based ranks; tied values share their average rank.
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation of the average ranks. ConfigError unless
/// |x| = |y| >= 3; DataError("zero rank variance") for a constant series.
double spearman_rho(std::span<const double> x, std::span<const double> y);

enum class PValueMethod {
  exact_permutation,  // enumerates all n! rank permutations, n <= 9
  t_approx,           // Student t with n - 2 degrees of freedom
  automatic,          // exact when n <= 9, otherwise t_approx
};

PValueMethod parse_p_value_method(std::string_view tag);

struct PValue {
  double value = 1.0;
  /// Set when |rho| = 1 under the t approximation (p reported as 0).
  bool finite_sample_warning = false;
};

/// Two-sided p-value of rho under the null of no monotonic association.
PValue spearman_p_value(double rho, std::size_t n, PValueMethod method = PValueMethod::automatic);

struct CorrelationResult {
  double rho = 0.0;
  double p_value = 1.0;
  std::size_t n = 0;
  bool significant = false;  // p_value < alpha
  bool finite_sample_warning = false;
};

CorrelationResult spearman(std::span<const double> x, std::span<const double> y, double alpha = 0.05,
                           PValueMethod method = PValueMethod::automatic);

/// Pairwise Spearman over named columns. Cells whose correlation is
/// undefined (constant column) hold NaN.
struct CorrelationMatrix {
  std::vector<std::string> names;
  Matrix rho;
  Matrix p_value;
  double alpha = 0.05;

  /// Significant rho values only; other cells blank.
  std::string rho_csv() const;
  std::string p_value_csv() const;
};

CorrelationMatrix correlation_matrix(const std::vector<std::string>& names, const Matrix& columns_by_row,
                                     double alpha = 0.05);

// ---- clustering ------------------------------------------------------------

struct Clustering {
  int k = 0;
  std::vector<int> assignment;  // point -> cluster index
  Matrix centroids;             // k x dim
  double distortion = 0.0;      // sum of squared distances to assigned centroids
  std::vector<double> distortion_history;  // one entry per assignment step
  int iterations = 0;
};

/// Lloyd iterations from k-means++ seeding, up to 300 rounds or until the
/// assignment stops changing. A cluster that empties is re-seeded at the
/// point farthest from its centroid. ConfigError unless 1 <= k <= |points|.
Clustering kmeans(const Matrix& points, int k, std::uint64_t seed);

/// Lowest-distortion run out of `restarts` seeded runs.
Clustering kmeans_best_of(const Matrix& points, int k, std::uint64_t seed, int restarts = 10);

struct ElbowResult {
  std::vector<int> ks;
  std::vector<double> distortions;
  int chosen_k = 0;
};

/// Distortion per k (best of 10 restarts); picks the k farthest from the
/// chord joining the curve's endpoints, both axes scaled to [0, 1].
/// ConfigError when fewer than three ks or any k outside [2, |points|].
ElbowResult elbow_select(const Matrix& points, std::span<const int> k_range, std::uint64_t seed);

struct SilhouetteReport {
  std::vector<double> values;
  double mean = 0.0;
};

/// Euclidean silhouette; members of singleton clusters score 0.
/// DataError when fewer than two clusters are populated.
SilhouetteReport silhouette_score(const Matrix& points, std::span<const int> assignment);

struct SilhouetteSelection {
  std::vector<int> ks;
  std::vector<double> means;
  int chosen_k = 0;
};

/// k with the highest mean silhouette (ties to the smaller k).
SilhouetteSelection silhouette_select(const Matrix& points, std::span<const int> k_range, std::uint64_t seed);

// ---- ordinal levels --------------------------------------------------------

struct LevelPartition {
  std::vector<std::string> labels;  // ascending
  std::vector<double> upper_edges;  // labels.size() - 1 inclusive upper bounds
  std::vector<double> centroids;

  std::size_t level_of(double value) const;
  const std::string& label_of(double value) const;
};

/// One-dimensional k-means; clusters ordered by centroid, bin edges at the
/// midpoint between adjacent clusters' extreme members.
/// ConfigError when |labels| != k; DataError when fewer than k distinct values.
LevelPartition level_partition(std::span<const double> values, int k, const std::vector<std::string>& labels,
                               std::uint64_t seed);

/// LOW/HIGH for k = 2, LOW/MEDIUM/HIGH for k = 3, L1..Lk otherwise.
std::vector<std::string> default_level_labels(int k);

}  // namespace devmine
