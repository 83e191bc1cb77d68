#include "devmine/stats.hpp"

#include <boost/math/distributions/students_t.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <mutex>
#include <numeric>
#include <random>

#include "devmine/error.hpp"
#include "devmine/io.hpp"
#include "devmine/random.hpp"

namespace devmine {
namespace {

constexpr std::size_t kMaxExactN = 9;
constexpr int kMaxLloydRounds = 300;

// Histogram of sum(d^2) over all n! permutations of ranks 1..n.
const std::vector<std::uint64_t>& rank_distance_histogram(std::size_t n) {
  static std::array<std::vector<std::uint64_t>, kMaxExactN + 1> tables;
  static std::array<std::once_flag, kMaxExactN + 1> flags;
  std::call_once(flags[n], [n] {
    const std::size_t max_s = n * (n * n - 1) / 3;
    std::vector<std::uint64_t> hist(max_s + 1, 0);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    do {
      std::size_t s = 0;
      for (std::size_t i = 0; i < n; ++i) {
        const auto d = static_cast<long>(perm[i]) - static_cast<long>(i);
        s += static_cast<std::size_t>(d * d);
      }
      ++hist[s];
    } while (std::next_permutation(perm.begin(), perm.end()));
    tables[n] = std::move(hist);
  });
  return tables[n];
}

double exact_p(double rho, std::size_t n) {
  const auto& hist = rank_distance_histogram(n);
  const double denom = static_cast<double>(n) * (static_cast<double>(n * n) - 1.0);
  std::uint64_t hits = 0, total = 0;
  for (std::size_t s = 0; s < hist.size(); ++s) {
    if (!hist[s]) continue;
    total += hist[s];
    const double r = 1.0 - 6.0 * static_cast<double>(s) / denom;
    if (std::abs(r) >= std::abs(rho) - 1e-12) hits += hist[s];
  }
  return static_cast<double>(hits) / static_cast<double>(total);
}

void validate_points(const Matrix& points) {
  if (points.rows() == 0) throw ConfigError("no points to cluster");
  if (points.cols() == 0) throw ConfigError("points have zero dimension");
}

// Index of nearest centroid; ties to the lower index.
int nearest(std::span<const double> p, const Matrix& centroids, double* dist = nullptr) {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < centroids.rows(); ++c) {
    const double d = squared_distance(p, centroids.row(c));
    if (d < best_d) {
      best_d = d;
      best = static_cast<int>(c);
    }
  }
  if (dist) *dist = best_d;
  return best;
}

Matrix plus_plus_seeds(const Matrix& points, int k, std::mt19937_64& rng) {
  const std::size_t n = points.rows();
  Matrix centroids(0, points.cols());
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  centroids.push_row(points.row(pick(rng)));
  std::vector<double> d2(n);
  while (centroids.rows() < static_cast<std::size_t>(k)) {
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      nearest(points.row(i), centroids, &d2[i]);
      total += d2[i];
    }
    std::size_t chosen = 0;
    if (total <= 0.0) {
      chosen = pick(rng);
    } else {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      chosen = n - 1;
      for (std::size_t i = 0; i < n; ++i) {
        target -= d2[i];
        if (target < 0.0 && d2[i] > 0.0) {
          chosen = i;
          break;
        }
      }
    }
    centroids.push_row(points.row(chosen));
  }
  return centroids;
}

std::vector<int> populated_clusters(std::span<const int> assignment) {
  std::vector<int> ids(assignment.begin(), assignment.end());
  std::sort(ids.begin(), ids.end());
  ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
  return ids;
}

void check_k_range(const Matrix& points, std::span<const int> k_range) {
  if (k_range.size() < 3) throw ConfigError("model selection needs at least three candidate k values");
  for (int k : k_range)
    if (k < 2 || static_cast<std::size_t>(k) > points.rows())
      throw ConfigError(fmt::format("k = {} outside [2, {}]", k, points.rows()));
}

std::string matrix_csv(const std::vector<std::string>& names, const Matrix& m,
                       const std::function<bool(std::size_t, std::size_t)>& keep) {
  std::vector<std::string> header = {"metric"};
  header.insert(header.end(), names.begin(), names.end());
  std::string out = csv_line(header);
  for (std::size_t i = 0; i < names.size(); ++i) {
    std::vector<std::string> row = {names[i]};
    for (std::size_t j = 0; j < names.size(); ++j)
      row.push_back(keep(i, j) && !std::isnan(m(i, j)) ? format_number(m(i, j)) : "");
    out += csv_line(row);
  }
  return out;
}

}  // namespace

// ---- rank correlation ------------------------------------------------------

std::vector<double> average_ranks(std::span<const double> values) {
  const std::size_t n = values.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && values[order[j + 1]] == values[order[i]]) ++j;
    const double rank = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = rank;
    i = j + 1;
  }
  return ranks;
}

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw ConfigError("spearman: series lengths differ");
  if (x.size() < 3) throw ConfigError("spearman: at least 3 observations required");
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw DataError("zero rank variance");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

PValueMethod parse_p_value_method(std::string_view tag) {
  if (tag == "exact" || tag == "exact-permutation") return PValueMethod::exact_permutation;
  if (tag == "t" || tag == "t-approx") return PValueMethod::t_approx;
  if (tag == "auto") return PValueMethod::automatic;
  throw ConfigError(fmt::format("unknown p-value method '{}'", tag));
}

PValue spearman_p_value(double rho, std::size_t n, PValueMethod method) {
  if (n < 3) throw ConfigError("spearman p-value: at least 3 observations required");
  if (method == PValueMethod::automatic)
    method = n <= kMaxExactN ? PValueMethod::exact_permutation : PValueMethod::t_approx;

  if (method == PValueMethod::exact_permutation) {
    if (n > kMaxExactN)
      throw ConfigError(fmt::format("exact permutation p-value limited to n <= {}", kMaxExactN));
    return {exact_p(rho, n), false};
  }

  const double r = std::abs(rho);
  if (r >= 1.0) return {0.0, true};
  const double df = static_cast<double>(n) - 2.0;
  const double t = r * std::sqrt(df / (1.0 - r * r));
  const boost::math::students_t dist(df);
  return {std::min(1.0, 2.0 * boost::math::cdf(boost::math::complement(dist, t))), false};
}

CorrelationResult spearman(std::span<const double> x, std::span<const double> y, double alpha,
                           PValueMethod method) {
  CorrelationResult r;
  r.n = x.size();
  r.rho = spearman_rho(x, y);
  const auto p = spearman_p_value(r.rho, r.n, method);
  r.p_value = p.value;
  r.finite_sample_warning = p.finite_sample_warning;
  r.significant = r.p_value < alpha;
  return r;
}

std::string CorrelationMatrix::rho_csv() const {
  return matrix_csv(names, rho, [this](std::size_t i, std::size_t j) { return p_value(i, j) < alpha; });
}

std::string CorrelationMatrix::p_value_csv() const {
  return matrix_csv(names, p_value, [](std::size_t, std::size_t) { return true; });
}

CorrelationMatrix correlation_matrix(const std::vector<std::string>& names, const Matrix& data, double alpha) {
  if (names.size() != data.cols()) throw SchemaError("correlation matrix: name count does not match columns");
  const std::size_t m = names.size();
  CorrelationMatrix cm;
  cm.names = names;
  cm.alpha = alpha;
  cm.rho = Matrix(m, m, std::nan(""));
  cm.p_value = Matrix(m, m, std::nan(""));
  std::vector<std::vector<double>> cols(m);
  for (std::size_t j = 0; j < m; ++j) cols[j] = data.column_values(j);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i; j < m; ++j) {
      try {
        const auto r = spearman(cols[i], cols[j], alpha);
        cm.rho(i, j) = cm.rho(j, i) = r.rho;
        cm.p_value(i, j) = cm.p_value(j, i) = r.p_value;
      } catch (const DataError&) {
        // constant column: undefined, left as NaN
      }
    }
  }
  return cm;
}

// ---- clustering ------------------------------------------------------------

Clustering kmeans(const Matrix& points, int k, std::uint64_t seed) {
  validate_points(points);
  if (k < 1 || static_cast<std::size_t>(k) > points.rows())
    throw ConfigError(fmt::format("k = {} outside [1, {}]", k, points.rows()));

  const std::size_t n = points.rows();
  const std::size_t dim = points.cols();
  std::mt19937_64 rng(seed);
  Clustering result;
  result.k = k;
  result.centroids = plus_plus_seeds(points, k, rng);
  result.assignment.assign(n, -1);
  std::vector<double> dist(n);

  for (int round = 0; round < kMaxLloydRounds; ++round) {
    bool changed = false;
    double distortion = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const int c = nearest(points.row(i), result.centroids, &dist[i]);
      distortion += dist[i];
      if (c != result.assignment[i]) {
        result.assignment[i] = c;
        changed = true;
      }
    }
    result.distortion = distortion;
    result.distortion_history.push_back(distortion);
    result.iterations = round + 1;
    if (!changed) break;

    Matrix sums(static_cast<std::size_t>(k), dim, 0.0);
    std::vector<std::size_t> counts(static_cast<std::size_t>(k), 0);
    for (std::size_t i = 0; i < n; ++i) {
      const auto c = static_cast<std::size_t>(result.assignment[i]);
      ++counts[c];
      for (std::size_t d = 0; d < dim; ++d) sums(c, d) += points(i, d);
    }
    for (std::size_t c = 0; c < static_cast<std::size_t>(k); ++c) {
      if (counts[c] == 0) {
        // Empty cluster: move it onto the worst-served point.
        const auto far = static_cast<std::size_t>(std::max_element(dist.begin(), dist.end()) - dist.begin());
        for (std::size_t d = 0; d < dim; ++d) result.centroids(c, d) = points(far, d);
        dist[far] = 0.0;
        continue;
      }
      for (std::size_t d = 0; d < dim; ++d)
        result.centroids(c, d) = sums(c, d) / static_cast<double>(counts[c]);
    }
  }
  return result;
}

Clustering kmeans_best_of(const Matrix& points, int k, std::uint64_t seed, int restarts) {
  if (restarts < 1) throw ConfigError("restarts must be positive");
  Clustering best;
  for (int r = 0; r < restarts; ++r) {
    auto c = kmeans(points, k, derive_seed(seed, static_cast<std::uint64_t>(r)));
    if (r == 0 || c.distortion < best.distortion) best = std::move(c);
  }
  return best;
}

ElbowResult elbow_select(const Matrix& points, std::span<const int> k_range, std::uint64_t seed) {
  validate_points(points);
  check_k_range(points, k_range);
  ElbowResult out;
  out.ks.assign(k_range.begin(), k_range.end());
  for (int k : out.ks) out.distortions.push_back(kmeans_best_of(points, k, seed).distortion);

  const double k0 = out.ks.front(), k1 = out.ks.back();
  const auto [dmin, dmax] = std::minmax_element(out.distortions.begin(), out.distortions.end());
  const double dspan = *dmax - *dmin;
  const double kspan = k1 - k0;
  out.chosen_k = out.ks.front();
  if (dspan <= 0.0 || kspan == 0.0) return out;

  auto nx = [&](double k) { return (k - k0) / kspan; };
  auto ny = [&](double d) { return (d - *dmin) / dspan; };
  const double x0 = nx(k0), y0 = ny(out.distortions.front());
  const double x1 = nx(k1), y1 = ny(out.distortions.back());
  const double len = std::hypot(x1 - x0, y1 - y0);
  double best = -1.0;
  for (std::size_t i = 0; i < out.ks.size(); ++i) {
    const double x = nx(out.ks[i]), y = ny(out.distortions[i]);
    const double dist = std::abs((y1 - y0) * x - (x1 - x0) * y + x1 * y0 - y1 * x0) / len;
    if (dist > best + 1e-12) {
      best = dist;
      out.chosen_k = out.ks[i];
    }
  }
  return out;
}

SilhouetteReport silhouette_score(const Matrix& points, std::span<const int> assignment) {
  validate_points(points);
  if (assignment.size() != points.rows()) throw ConfigError("silhouette: assignment length mismatch");
  const auto clusters = populated_clusters(assignment);
  if (clusters.size() < 2) throw DataError("silhouette needs at least two populated clusters");

  const std::size_t n = points.rows();
  const int max_id = clusters.back();
  std::vector<std::size_t> sizes(static_cast<std::size_t>(max_id) + 1, 0);
  for (int a : assignment) ++sizes[static_cast<std::size_t>(a)];

  SilhouetteReport report;
  report.values.resize(n, 0.0);
  std::vector<double> sum(sizes.size());
  for (std::size_t i = 0; i < n; ++i) {
    const auto own = static_cast<std::size_t>(assignment[i]);
    if (sizes[own] == 1) continue;
    std::fill(sum.begin(), sum.end(), 0.0);
    for (std::size_t j = 0; j < n; ++j) {
      if (i == j) continue;
      sum[static_cast<std::size_t>(assignment[j])] += std::sqrt(squared_distance(points.row(i), points.row(j)));
    }
    const double a = sum[own] / static_cast<double>(sizes[own] - 1);
    double b = std::numeric_limits<double>::infinity();
    for (int c : clusters) {
      const auto cu = static_cast<std::size_t>(c);
      if (cu == own) continue;
      b = std::min(b, sum[cu] / static_cast<double>(sizes[cu]));
    }
    const double denom = std::max(a, b);
    report.values[i] = denom > 0.0 ? (b - a) / denom : 0.0;
  }
  report.mean = std::accumulate(report.values.begin(), report.values.end(), 0.0) / static_cast<double>(n);
  return report;
}

SilhouetteSelection silhouette_select(const Matrix& points, std::span<const int> k_range, std::uint64_t seed) {
  validate_points(points);
  check_k_range(points, k_range);
  SilhouetteSelection out;
  double best = -std::numeric_limits<double>::infinity();
  for (int k : k_range) {
    const auto c = kmeans_best_of(points, k, seed);
    double mean = -1.0;
    if (populated_clusters(c.assignment).size() >= 2) mean = silhouette_score(points, c.assignment).mean;
    out.ks.push_back(k);
    out.means.push_back(mean);
    if (mean > best + 1e-12) {
      best = mean;
      out.chosen_k = k;
    }
  }
  return out;
}

// ---- ordinal levels --------------------------------------------------------

std::size_t LevelPartition::level_of(double value) const {
  std::size_t level = 0;
  while (level < upper_edges.size() && value > upper_edges[level]) ++level;
  return level;
}

const std::string& LevelPartition::label_of(double value) const { return labels[level_of(value)]; }

std::vector<std::string> default_level_labels(int k) {
  if (k == 2) return {"LOW", "HIGH"};
  if (k == 3) return {"LOW", "MEDIUM", "HIGH"};
  std::vector<std::string> out;
  for (int i = 1; i <= k; ++i) out.push_back(fmt::format("L{}", i));
  return out;
}

LevelPartition level_partition(std::span<const double> values, int k, const std::vector<std::string>& labels,
                               std::uint64_t seed) {
  if (k < 1) throw ConfigError("level count must be positive");
  if (labels.size() != static_cast<std::size_t>(k))
    throw ConfigError(fmt::format("{} labels given for {} levels", labels.size(), k));
  std::vector<double> distinct(values.begin(), values.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < static_cast<std::size_t>(k))
    throw DataError(fmt::format("{} distinct values cannot form {} levels", distinct.size(), k));

  LevelPartition part;
  part.labels = labels;
  Matrix points(values.size(), 1);
  for (std::size_t i = 0; i < values.size(); ++i) points(i, 0) = values[i];
  const auto clustering = kmeans_best_of(points, k, seed);

  struct Group {
    double centroid;
    double lo;
    double hi;
  };
  std::vector<Group> groups;
  for (int c = 0; c < k; ++c) {
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (clustering.assignment[i] != c) continue;
      lo = std::min(lo, values[i]);
      hi = std::max(hi, values[i]);
    }
    if (lo > hi) continue;  // unpopulated
    groups.push_back({clustering.centroids(static_cast<std::size_t>(c), 0), lo, hi});
  }
  std::sort(groups.begin(), groups.end(), [](const Group& a, const Group& b) { return a.centroid < b.centroid; });
  for (const auto& g : groups) part.centroids.push_back(g.centroid);
  for (std::size_t g = 0; g + 1 < groups.size(); ++g)
    part.upper_edges.push_back((groups[g].hi + groups[g + 1].lo) / 2.0);
  return part;
}

}  // namespace devmine
