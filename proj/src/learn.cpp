#include "devmine/learn.hpp"

#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "devmine/error.hpp"
#include "devmine/io.hpp"
#include "devmine/random.hpp"
#include "devmine/stats.hpp"

namespace devmine {
namespace {

using json = nlohmann::ordered_json;

constexpr double kSelectionGain = 1e-4;
constexpr int kLbfgsMemory = 10;
constexpr int kLbfgsMaxIterations = 500;
constexpr double kLbfgsGradientTolerance = 1e-6;

double gini(std::span<const double> counts, double total) {
  if (total <= 0.0) return 0.0;
  double sum = 0.0;
  for (double c : counts) sum += (c / total) * (c / total);
  return 1.0 - sum;
}

// ---- tree growth -----------------------------------------------------------

class TreeBuilder {
 public:
  TreeBuilder(const Matrix& X, std::span<const int> y, std::size_t classes, int max_depth, int min_leaf,
              int features_per_split, std::uint64_t seed)
      : X_(X), y_(y), classes_(classes), max_depth_(max_depth), min_leaf_(static_cast<std::size_t>(min_leaf)),
        k_(features_per_split), rng_(seed) {}

  DecisionTree build(std::vector<std::size_t> rows) {
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  struct Split {
    int feature = -1;
    double threshold = 0.0;
    double impurity = std::numeric_limits<double>::infinity();
  };

  int grow(std::vector<std::size_t> rows, int depth) {
    const auto index = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    std::vector<double> counts(classes_, 0.0);
    for (auto r : rows) counts[static_cast<std::size_t>(y_[r])] += 1.0;
    const double n = static_cast<double>(rows.size());
    const double parent = gini(counts, n);
    {
      auto& node = tree_.nodes[static_cast<std::size_t>(index)];
      node.distribution = counts;
      for (auto& c : node.distribution) c /= n;
    }

    const bool depth_reached = max_depth_ > 0 && depth >= max_depth_;
    if (parent <= 0.0 || depth_reached || rows.size() < 2 * min_leaf_) return index;

    const Split split = best_split(rows, parent);
    if (split.feature < 0) return index;

    std::vector<std::size_t> left, right;
    for (auto r : rows) (X_(r, static_cast<std::size_t>(split.feature)) <= split.threshold ? left : right).push_back(r);
    rows.clear();
    rows.shrink_to_fit();
    const int l = grow(std::move(left), depth + 1);
    const int r = grow(std::move(right), depth + 1);
    auto& node = tree_.nodes[static_cast<std::size_t>(index)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = l;
    node.right = r;
    return index;
  }

  // Random-tree semantics: inspect K shuffled features, and keep drawing
  // past K only while none of them has produced a useful split.
  Split best_split(const std::vector<std::size_t>& rows, double parent) {
    const std::size_t m = X_.cols();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    const bool sampled = k_ > 0 && static_cast<std::size_t>(k_) < m;
    if (sampled) std::shuffle(order.begin(), order.end(), rng_);

    Split best;
    std::size_t inspected = 0;
    for (auto f : order) {
      if (sampled && inspected >= static_cast<std::size_t>(k_) && best.feature >= 0) break;
      ++inspected;
      evaluate_feature(rows, f, best);
    }
    if (best.feature >= 0 && parent - best.impurity <= 1e-12) best.feature = -1;
    return best;
  }

  void evaluate_feature(const std::vector<std::size_t>& rows, std::size_t f, Split& best) {
    std::vector<std::size_t> sorted = rows;
    std::stable_sort(sorted.begin(), sorted.end(), [&](auto a, auto b) { return X_(a, f) < X_(b, f); });
    const double n = static_cast<double>(sorted.size());
    std::vector<double> left(classes_, 0.0), right(classes_, 0.0);
    for (auto r : sorted) right[static_cast<std::size_t>(y_[r])] += 1.0;
    for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
      const auto cls = static_cast<std::size_t>(y_[sorted[i]]);
      left[cls] += 1.0;
      right[cls] -= 1.0;
      const double lo = X_(sorted[i], f), hi = X_(sorted[i + 1], f);
      if (!(lo < hi)) continue;
      const std::size_t nl = i + 1, nr = sorted.size() - nl;
      if (nl < min_leaf_ || nr < min_leaf_) continue;
      const double dl = static_cast<double>(nl), dr = static_cast<double>(nr);
      const double impurity = (dl * gini(left, dl) + dr * gini(right, dr)) / n;
      if (impurity < best.impurity - 1e-15) {
        double threshold = lo + (hi - lo) / 2.0;
        if (!(threshold < hi)) threshold = lo;
        best = {static_cast<int>(f), threshold, impurity};
      }
    }
  }

  const Matrix& X_;
  std::span<const int> y_;
  std::size_t classes_;
  int max_depth_;
  std::size_t min_leaf_;
  int k_;
  std::mt19937_64 rng_;
  DecisionTree tree_;
};

std::vector<std::size_t> bootstrap_rows(std::size_t n, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<std::size_t> rows(n);
  for (auto& r : rows) r = pick(rng);
  return rows;
}

std::vector<std::size_t> all_rows(std::size_t n) {
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), 0);
  return rows;
}

int resolve_k(const ClassifierSpec& spec, std::size_t m) {
  if (spec.features_per_split == 0) return static_cast<int>(std::floor(std::log2(static_cast<double>(m)))) + 1;
  return std::min(spec.features_per_split, static_cast<int>(m));
}

// ---- multinomial ridge logistic --------------------------------------------

struct LogisticObjective {
  const Matrix& Z;
  std::span<const int> y;
  std::size_t classes;
  double ridge;

  // Negative log-likelihood plus ridge on non-intercept weights.
  double operator()(const std::vector<double>& w, std::vector<double>& grad) const {
    const std::size_t d = Z.cols() + 1;
    std::fill(grad.begin(), grad.end(), 0.0);
    double loss = 0.0;
    std::vector<double> logits(classes);
    for (std::size_t i = 0; i < Z.rows(); ++i) {
      const auto x = Z.row(i);
      for (std::size_t c = 0; c < classes; ++c) {
        double s = w[c * d + d - 1];
        for (std::size_t j = 0; j + 1 < d; ++j) s += w[c * d + j] * x[j];
        logits[c] = s;
      }
      const double mx = *std::max_element(logits.begin(), logits.end());
      double z = 0.0;
      for (double v : logits) z += std::exp(v - mx);
      const double log_z = mx + std::log(z);
      const auto yi = static_cast<std::size_t>(y[i]);
      loss += log_z - logits[yi];
      for (std::size_t c = 0; c < classes; ++c) {
        const double residual = std::exp(logits[c] - log_z) - (c == yi ? 1.0 : 0.0);
        for (std::size_t j = 0; j + 1 < d; ++j) grad[c * d + j] += residual * x[j];
        grad[c * d + d - 1] += residual;
      }
    }
    for (std::size_t c = 0; c < classes; ++c) {
      for (std::size_t j = 0; j + 1 < d; ++j) {
        const double wj = w[c * d + j];
        loss += ridge * wj * wj;
        grad[c * d + j] += 2.0 * ridge * wj;
      }
    }
    return loss;
  }
};

double dot(const std::vector<double>& a, const std::vector<double>& b) {
  return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

double inf_norm(const std::vector<double>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

// Limited-memory BFGS with a backtracking Armijo line search. Stops on a
// small gradient, a stalled objective or the iteration cap.
template <typename F>
int minimize_lbfgs(const F& f, std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<double> g(n), g_next(n), x_next(n), dir(n);
  double fx = f(x, g);
  std::vector<std::vector<double>> s_hist, y_hist;
  std::vector<double> rho_hist;
  int iter = 0;
  for (; iter < kLbfgsMaxIterations; ++iter) {
    if (inf_norm(g) < kLbfgsGradientTolerance) break;

    dir = g;
    std::vector<double> alpha(s_hist.size());
    for (std::size_t i = s_hist.size(); i-- > 0;) {
      alpha[i] = rho_hist[i] * dot(s_hist[i], dir);
      for (std::size_t j = 0; j < n; ++j) dir[j] -= alpha[i] * y_hist[i][j];
    }
    if (!s_hist.empty()) {
      const double gamma = dot(s_hist.back(), y_hist.back()) / dot(y_hist.back(), y_hist.back());
      for (auto& v : dir) v *= gamma;
    } else {
      const double scale = 1.0 / std::max(1.0, std::sqrt(dot(g, g)));
      for (auto& v : dir) v *= scale;
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * dot(y_hist[i], dir);
      for (std::size_t j = 0; j < n; ++j) dir[j] += s_hist[i][j] * (alpha[i] - beta);
    }
    for (auto& v : dir) v = -v;

    double slope = dot(g, dir);
    if (slope >= 0.0) {  // not a descent direction: restart from steepest descent
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      for (std::size_t j = 0; j < n; ++j) dir[j] = -g[j];
      slope = dot(g, dir);
    }

    double step = 1.0, f_next = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 50; ++ls) {
      for (std::size_t j = 0; j < n; ++j) x_next[j] = x[j] + step * dir[j];
      f_next = f(x_next, g_next);
      if (std::isfinite(f_next) && f_next <= fx + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    std::vector<double> s(n), yv(n);
    for (std::size_t j = 0; j < n; ++j) {
      s[j] = x_next[j] - x[j];
      yv[j] = g_next[j] - g[j];
    }
    const double sy = dot(s, yv);
    const double decrease = fx - f_next;
    x.swap(x_next);
    g.swap(g_next);
    fx = f_next;
    if (sy > 1e-12) {
      if (s_hist.size() == static_cast<std::size_t>(kLbfgsMemory)) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(yv));
      rho_hist.push_back(1.0 / sy);
    }
    if (decrease <= 1e-12 * std::max(1.0, std::abs(fx))) {
      ++iter;
      break;
    }
  }
  return iter;
}

// ---- evaluation helpers ----------------------------------------------------

double safe_div(double num, double den) { return den > 0.0 ? num / den : 0.0; }

std::vector<double> column(const Matrix& m, std::size_t c) { return m.column_values(c); }

std::vector<std::size_t> resolve_columns(const std::vector<std::string>& wanted,
                                         const std::vector<std::string>& available) {
  std::vector<std::size_t> idx;
  idx.reserve(wanted.size());
  for (const auto& name : wanted) {
    const auto it = std::find(available.begin(), available.end(), name);
    if (it == available.end()) throw SchemaError(fmt::format("feature '{}' not present", name));
    idx.push_back(static_cast<std::size_t>(it - available.begin()));
  }
  return idx;
}

double weighted_roc(const ClassifierSpec& spec, const Dataset& data, int folds, std::uint64_t seed) {
  const double roc = cross_validate(spec, data, folds, seed).report.weighted.roc_auc;
  return std::isnan(roc) ? -std::numeric_limits<double>::infinity() : roc;
}

// ---- persistence -----------------------------------------------------------

json matrix_json(const Matrix& m) {
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", m.data()}};
}

Matrix matrix_from(const json& j) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) throw SchemaError("model matrix size mismatch");
  Matrix m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) m(r, c) = data[r * cols + c];
  return m;
}

json tree_json(const DecisionTree& t) {
  json nodes = json::array();
  for (const auto& n : t.nodes)
    nodes.push_back(json{{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left},
                         {"right", n.right}, {"distribution", n.distribution}});
  return nodes;
}

DecisionTree tree_from(const json& j) {
  DecisionTree t;
  for (const auto& n : j) {
    TreeNode node;
    node.feature = n.at("feature").get<int>();
    node.threshold = n.at("threshold").get<double>();
    node.left = n.at("left").get<int>();
    node.right = n.at("right").get<int>();
    node.distribution = n.at("distribution").get<std::vector<double>>();
    t.nodes.push_back(std::move(node));
  }
  const auto count = static_cast<int>(t.nodes.size());
  if (count == 0) throw SchemaError("model tree has no nodes");
  for (const auto& n : t.nodes)
    if (n.feature >= 0 && (n.left <= 0 || n.left >= count || n.right <= 0 || n.right >= count))
      throw SchemaError("model tree has a dangling child link");
  return t;
}

json standardizer_json(const Standardizer& s) { return json{{"mean", s.mean}, {"scale", s.scale}}; }

Standardizer standardizer_from(const json& j) {
  return {j.at("mean").get<std::vector<double>>(), j.at("scale").get<std::vector<double>>()};
}

}  // namespace

// ---- Dataset ---------------------------------------------------------------

Dataset Dataset::from_labels(std::vector<std::string> feature_names, Matrix X, const std::vector<std::string>& labels) {
  if (feature_names.size() != X.cols())
    throw SchemaError(fmt::format("{} feature names for {} columns", feature_names.size(), X.cols()));
  if (labels.size() != X.rows())
    throw SchemaError(fmt::format("{} labels for {} rows", labels.size(), X.rows()));
  if (std::set<std::string>(feature_names.begin(), feature_names.end()).size() != feature_names.size())
    throw SchemaError("duplicate feature names");
  for (double v : X.data())
    if (!std::isfinite(v)) throw DataError("feature matrix contains a missing or non-finite value");

  Dataset d;
  d.feature_names = std::move(feature_names);
  d.X = std::move(X);
  std::set<std::string> classes(labels.begin(), labels.end());
  if (classes.size() < 2) throw DataError("at least two classes are required");
  d.class_names.assign(classes.begin(), classes.end());
  for (const auto& l : labels)
    d.y.push_back(static_cast<int>(std::lower_bound(d.class_names.begin(), d.class_names.end(), l) -
                                   d.class_names.begin()));
  return d;
}

Dataset Dataset::from_feature_table(const FeatureTable& table) {
  if (table.labels.empty()) throw SchemaError("feature table has no label column");
  return from_labels(table.columns, table.values, table.labels);
}

Dataset Dataset::subset_rows(std::span<const std::size_t> rows) const {
  Dataset d;
  d.feature_names = feature_names;
  d.class_names = class_names;
  d.X = X.select_rows(rows);
  if (rows.empty()) d.X = Matrix(0, X.cols());
  for (auto r : rows) d.y.push_back(y[r]);
  return d;
}

Dataset Dataset::subset_features(const std::vector<std::string>& names) const {
  const auto idx = resolve_columns(names, feature_names);
  Dataset d = *this;
  d.feature_names = names;
  d.X = X.select_cols(idx);
  return d;
}

Dataset Dataset::with_labels(std::vector<int> labels) const {
  if (labels.size() != rows()) throw SchemaError("label count does not match rows");
  Dataset d = *this;
  d.y = std::move(labels);
  return d;
}

// ---- ClassifierSpec --------------------------------------------------------

Family parse_family(std::string_view tag) {
  if (tag == "tree") return Family::tree;
  if (tag == "forest") return Family::forest;
  if (tag == "bagging") return Family::bagging;
  if (tag == "logistic") return Family::logistic;
  if (tag == "knn") return Family::knn;
  throw ConfigError(fmt::format("unknown classifier family '{}'", tag));
}

std::string_view to_string(Family family) {
  switch (family) {
    case Family::tree: return "tree";
    case Family::forest: return "forest";
    case Family::bagging: return "bagging";
    case Family::logistic: return "logistic";
    case Family::knn: return "knn";
  }
  return "unknown";
}

void ClassifierSpec::validate() const {
  auto check = [](bool ok, std::string_view what) {
    if (!ok) throw ConfigError(fmt::format("hyperparameter out of range: {}", what));
  };
  check(trees >= 1 && trees <= 1000, "trees in [1, 1000]");
  check(features_per_split >= 0 && features_per_split <= 100000, "features_per_split in [0, 100000]");
  check(max_depth >= 0 && max_depth <= 64, "max_depth in [0, 64]");
  check(min_leaf >= 1 && min_leaf <= 1000, "min_leaf in [1, 1000]");
  check(std::isfinite(ridge) && ridge >= 0.0 && ridge <= 1e6, "ridge in [0, 1e6]");
  check(neighbours >= 1 && neighbours <= 1000, "neighbours in [1, 1000]");
}

std::string ClassifierSpec::describe() const {
  switch (family) {
    case Family::tree: return fmt::format("tree depth={} min_leaf={}", max_depth, min_leaf);
    case Family::forest:
      return fmt::format("forest I={} K={} depth={} min_leaf={} bootstrap={}", trees, features_per_split, max_depth,
                         min_leaf, bootstrap ? 1 : 0);
    case Family::bagging: return fmt::format("bagging I={} depth={} min_leaf={}", trees, max_depth, min_leaf);
    case Family::logistic: return fmt::format("logistic ridge={}", format_number(ridge));
    case Family::knn: return fmt::format("knn k={}", neighbours);
  }
  return "unknown";
}

// ---- models ----------------------------------------------------------------

std::span<const double> DecisionTree::distribution(std::span<const double> x) const {
  std::size_t i = 0;
  while (nodes[i].feature >= 0) {
    const auto& n = nodes[i];
    i = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[i].distribution;
}

Standardizer Standardizer::fit(const Matrix& X) {
  Standardizer s;
  const double n = static_cast<double>(X.rows());
  for (std::size_t c = 0; c < X.cols(); ++c) {
    const auto col = X.column_values(c);
    const double mean = std::accumulate(col.begin(), col.end(), 0.0) / n;
    double var = 0.0;
    for (double v : col) var += (v - mean) * (v - mean);
    const double sd = n > 1 ? std::sqrt(var / (n - 1.0)) : 0.0;
    s.mean.push_back(mean);
    s.scale.push_back(sd > 1e-12 ? sd : 1.0);
  }
  return s;
}

std::vector<double> Standardizer::apply(std::span<const double> x) const {
  std::vector<double> z(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) z[j] = (x[j] - mean[j]) / scale[j];
  return z;
}

Matrix Standardizer::apply(const Matrix& X) const {
  Matrix Z(X.rows(), X.cols());
  for (std::size_t r = 0; r < X.rows(); ++r)
    for (std::size_t c = 0; c < X.cols(); ++c) Z(r, c) = (X(r, c) - mean[c]) / scale[c];
  return Z;
}

int argmax(std::span<const double> p) {
  int best = 0;
  for (std::size_t i = 1; i < p.size(); ++i)
    if (p[i] > p[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  return best;
}

DecisionTree fit_tree(const Matrix& X, std::span<const int> y, std::size_t classes, std::span<const std::size_t> rows,
                      int max_depth, int min_leaf, int features_per_split, std::uint64_t seed) {
  if (rows.empty()) throw DataError("cannot grow a tree from zero rows");
  TreeBuilder builder(X, y, classes, max_depth, min_leaf, features_per_split, seed);
  return builder.build({rows.begin(), rows.end()});
}

TrainedModel train(const ClassifierSpec& spec, const Dataset& data, std::uint64_t seed) {
  spec.validate();
  if (data.rows() == 0) throw DataError("no training rows");
  if (data.X.cols() == 0) throw DataError("no training features");
  if (std::set<int>(data.y.begin(), data.y.end()).size() < 2)
    throw DataError("training data contains a single class");

  TrainedModel model;
  model.spec = spec;
  model.feature_names = data.feature_names;
  model.class_names = data.class_names;
  model.seed = seed;
  const std::size_t n = data.rows();
  const std::size_t classes = data.class_count();

  switch (spec.family) {
    case Family::tree: {
      model.params = fit_tree(data.X, data.y, classes, all_rows(n), spec.max_depth, spec.min_leaf, 0, seed);
      break;
    }
    case Family::forest:
    case Family::bagging: {
      const bool forest = spec.family == Family::forest;
      const int k = forest ? resolve_k(spec, data.X.cols()) : 0;
      EnsembleParams ensemble;
      for (int i = 0; i < spec.trees; ++i) {
        const auto member_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        std::mt19937_64 rng(member_seed);
        const auto rows = (!forest || spec.bootstrap) ? bootstrap_rows(n, rng) : all_rows(n);
        ensemble.members.push_back(
            fit_tree(data.X, data.y, classes, rows, spec.max_depth, spec.min_leaf, k, derive_seed(member_seed, 1)));
      }
      model.params = std::move(ensemble);
      break;
    }
    case Family::logistic: {
      LogisticParams p;
      p.standardizer = Standardizer::fit(data.X);
      const Matrix Z = p.standardizer.apply(data.X);
      const std::size_t d = Z.cols() + 1;
      std::vector<double> w(classes * d, 0.0);
      const LogisticObjective objective{Z, data.y, classes, spec.ridge};
      p.iterations = minimize_lbfgs(objective, w);
      p.weights = Matrix(classes, d);
      for (std::size_t c = 0; c < classes; ++c)
        for (std::size_t j = 0; j < d; ++j) p.weights(c, j) = w[c * d + j];
      model.params = std::move(p);
      break;
    }
    case Family::knn: {
      KnnParams p;
      p.standardizer = Standardizer::fit(data.X);
      p.points = p.standardizer.apply(data.X);
      p.y = data.y;
      model.params = std::move(p);
      break;
    }
  }
  return model;
}

Matrix TrainedModel::predict_proba(const Matrix& X) const {
  if (X.cols() != feature_names.size())
    throw SchemaError(fmt::format("model expects {} features, got {}", feature_names.size(), X.cols()));
  const std::size_t classes = class_names.size();
  Matrix out(X.rows(), classes, 0.0);

  if (const auto* tree = std::get_if<DecisionTree>(&params)) {
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const auto p = tree->distribution(X.row(r));
      std::copy(p.begin(), p.end(), out.row(r).begin());
    }
  } else if (const auto* ens = std::get_if<EnsembleParams>(&params)) {
    for (std::size_t r = 0; r < X.rows(); ++r) {
      auto row = out.row(r);
      for (const auto& member : ens->members) {
        const auto p = member.distribution(X.row(r));
        for (std::size_t c = 0; c < classes; ++c) row[c] += p[c];
      }
      for (auto& v : row) v /= static_cast<double>(ens->members.size());
    }
  } else if (const auto* lr = std::get_if<LogisticParams>(&params)) {
    const std::size_t d = lr->weights.cols();
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const auto z = lr->standardizer.apply(X.row(r));
      auto row = out.row(r);
      for (std::size_t c = 0; c < classes; ++c) {
        double s = lr->weights(c, d - 1);
        for (std::size_t j = 0; j + 1 < d; ++j) s += lr->weights(c, j) * z[j];
        row[c] = s;
      }
      const double mx = *std::max_element(row.begin(), row.end());
      double total = 0.0;
      for (auto& v : row) total += (v = std::exp(v - mx));
      for (auto& v : row) v /= total;
    }
  } else if (const auto* knn = std::get_if<KnnParams>(&params)) {
    const std::size_t n = knn->points.rows();
    const std::size_t k = std::min<std::size_t>(static_cast<std::size_t>(spec.neighbours), n);
    std::vector<std::pair<double, std::size_t>> dist(n);
    for (std::size_t r = 0; r < X.rows(); ++r) {
      const auto z = knn->standardizer.apply(X.row(r));
      for (std::size_t i = 0; i < n; ++i) dist[i] = {squared_distance(z, knn->points.row(i)), i};
      std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k), dist.end());
      auto row = out.row(r);
      for (std::size_t i = 0; i < k; ++i) row[static_cast<std::size_t>(knn->y[dist[i].second])] += 1.0;
      for (auto& v : row) v /= static_cast<double>(k);
    }
  }
  return out;
}

Matrix TrainedModel::predict_proba(const Dataset& data) const {
  return predict_proba(data.X.select_cols(resolve_columns(feature_names, data.feature_names)));
}

std::vector<int> TrainedModel::predict(const Matrix& X) const {
  const Matrix p = predict_proba(X);
  std::vector<int> out(p.rows());
  for (std::size_t r = 0; r < p.rows(); ++r) out[r] = argmax(p.row(r));
  return out;
}

std::string TrainedModel::to_json() const {
  json j;
  j["format"] = kModelFormat;
  j["spec"] = json{{"family", to_string(spec.family)}, {"trees", spec.trees},
                   {"features_per_split", spec.features_per_split}, {"max_depth", spec.max_depth},
                   {"min_leaf", spec.min_leaf}, {"bootstrap", spec.bootstrap}, {"ridge", spec.ridge},
                   {"neighbours", spec.neighbours}};
  j["features"] = feature_names;
  j["classes"] = class_names;
  j["seed"] = seed;
  json p;
  if (const auto* tree = std::get_if<DecisionTree>(&params)) {
    p = json{{"kind", "tree"}, {"nodes", tree_json(*tree)}};
  } else if (const auto* ens = std::get_if<EnsembleParams>(&params)) {
    json members = json::array();
    for (const auto& m : ens->members) members.push_back(tree_json(m));
    p = json{{"kind", "ensemble"}, {"members", members}};
  } else if (const auto* lr = std::get_if<LogisticParams>(&params)) {
    p = json{{"kind", "logistic"}, {"standardizer", standardizer_json(lr->standardizer)},
             {"weights", matrix_json(lr->weights)}, {"iterations", lr->iterations}};
  } else if (const auto* knn = std::get_if<KnnParams>(&params)) {
    p = json{{"kind", "knn"}, {"standardizer", standardizer_json(knn->standardizer)},
             {"points", matrix_json(knn->points)}, {"labels", knn->y}};
  }
  j["params"] = std::move(p);
  return j.dump(1) + "\n";
}

TrainedModel TrainedModel::from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    if (j.at("format").get<std::string>() != kModelFormat)
      throw SchemaError(fmt::format("unsupported model format '{}'", j.at("format").get<std::string>()));
    TrainedModel m;
    const auto& s = j.at("spec");
    m.spec.family = parse_family(s.at("family").get<std::string>());
    m.spec.trees = s.at("trees").get<int>();
    m.spec.features_per_split = s.at("features_per_split").get<int>();
    m.spec.max_depth = s.at("max_depth").get<int>();
    m.spec.min_leaf = s.at("min_leaf").get<int>();
    m.spec.bootstrap = s.at("bootstrap").get<bool>();
    m.spec.ridge = s.at("ridge").get<double>();
    m.spec.neighbours = s.at("neighbours").get<int>();
    m.spec.validate();
    m.feature_names = j.at("features").get<std::vector<std::string>>();
    m.class_names = j.at("classes").get<std::vector<std::string>>();
    m.seed = j.at("seed").get<std::uint64_t>();
    const auto& p = j.at("params");
    const auto kind = p.at("kind").get<std::string>();
    if (kind == "tree") {
      m.params = tree_from(p.at("nodes"));
    } else if (kind == "ensemble") {
      EnsembleParams e;
      for (const auto& t : p.at("members")) e.members.push_back(tree_from(t));
      m.params = std::move(e);
    } else if (kind == "logistic") {
      m.params = LogisticParams{standardizer_from(p.at("standardizer")), matrix_from(p.at("weights")),
                                p.at("iterations").get<int>()};
    } else if (kind == "knn") {
      m.params = KnnParams{standardizer_from(p.at("standardizer")), matrix_from(p.at("points")),
                           p.at("labels").get<std::vector<int>>()};
    } else {
      throw SchemaError(fmt::format("unknown model parameter kind '{}'", kind));
    }
    return m;
  } catch (const json::exception& e) {
    throw SchemaError(fmt::format("malformed model document: {}", e.what()));
  } catch (const ConfigError& e) {
    throw SchemaError(fmt::format("malformed model document: {}", e.what()));
  }
}

// ---- evaluation ------------------------------------------------------------

double roc_auc(std::span<const double> scores, std::span<const int> labels, int positive) {
  double pos = 0.0, neg = 0.0, rank_sum = 0.0;
  const auto ranks = average_ranks(scores);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] == positive) {
      pos += 1.0;
      rank_sum += ranks[i];
    } else {
      neg += 1.0;
    }
  }
  if (pos == 0.0 || neg == 0.0) return std::nan("");
  return (rank_sum - pos * (pos + 1.0) / 2.0) / (pos * neg);
}

double prc_auc(std::span<const double> scores, std::span<const int> labels, int positive) {
  const double total_pos = static_cast<double>(std::count(labels.begin(), labels.end(), positive));
  if (total_pos == 0.0) return std::nan("");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[a] > scores[b]; });

  double tp = 0.0, fp = 0.0, area = 0.0;
  double prev_recall = 0.0, prev_precision = -1.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      (labels[order[j]] == positive ? tp : fp) += 1.0;
      ++j;
    }
    const double recall = tp / total_pos;
    const double precision = tp / (tp + fp);
    if (prev_precision < 0.0) prev_precision = precision;
    area += (recall - prev_recall) * (precision + prev_precision) / 2.0;
    prev_recall = recall;
    prev_precision = precision;
    i = j;
  }
  return area;
}

EvalReport evaluate(const Matrix& probabilities, std::span<const int> labels,
                    const std::vector<std::string>& class_names) {
  const std::size_t n = probabilities.rows();
  const std::size_t classes = class_names.size();
  if (labels.size() != n) throw ConfigError(fmt::format("{} probability rows for {} labels", n, labels.size()));
  if (probabilities.cols() != classes)
    throw ConfigError(fmt::format("{} probability columns for {} classes", probabilities.cols(), classes));
  if (n < 2) throw ConfigError("evaluation needs at least two rows");
  for (int l : labels)
    if (l < 0 || static_cast<std::size_t>(l) >= classes) throw ConfigError("label index out of range");

  EvalReport report;
  report.confusion = Matrix(classes, classes, 0.0);
  for (std::size_t r = 0; r < n; ++r)
    report.confusion(static_cast<std::size_t>(labels[r]), static_cast<std::size_t>(argmax(probabilities.row(r)))) +=
        1.0;

  const double total = static_cast<double>(n);
  double correct = 0.0;
  for (std::size_t c = 0; c < classes; ++c) correct += report.confusion(c, c);
  report.accuracy = correct / total;

  report.weighted.name = "Weighted Avg.";
  for (std::size_t c = 0; c < classes; ++c) {
    double actual = 0.0, predicted = 0.0;
    for (std::size_t k = 0; k < classes; ++k) {
      actual += report.confusion(c, k);
      predicted += report.confusion(k, c);
    }
    const double tp = report.confusion(c, c);
    const double fn = actual - tp;
    const double fp = predicted - tp;
    const double tn = total - tp - fn - fp;

    ClassMetrics m;
    m.name = class_names[c];
    m.support = actual;
    m.tp_rate = safe_div(tp, tp + fn);
    m.fp_rate = safe_div(fp, fp + tn);
    m.precision = safe_div(tp, tp + fp);
    m.recall = m.tp_rate;
    m.f_measure = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    const double mcc_den = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    m.mcc = mcc_den > 0.0 ? (tp * tn - fp * fn) / std::sqrt(mcc_den) : 0.0;

    const auto scores = column(probabilities, c);
    m.roc_auc = roc_auc(scores, labels, static_cast<int>(c));
    m.prc_auc = prc_auc(scores, labels, static_cast<int>(c));

    if (actual > 0.0) {
      const double w = actual / total;
      auto& avg = report.weighted;
      avg.support += actual;
      avg.tp_rate += w * m.tp_rate;
      avg.fp_rate += w * m.fp_rate;
      avg.precision += w * m.precision;
      avg.recall += w * m.recall;
      avg.f_measure += w * m.f_measure;
      avg.mcc += w * m.mcc;
      avg.roc_auc += w * m.roc_auc;
      avg.prc_auc += w * m.prc_auc;
    }
    report.classes.push_back(std::move(m));
  }
  return report;
}

std::string EvalReport::to_csv() const {
  std::string out = csv_line({"Class", "TP", "FP", "Pre.", "Rec.", "F-M.", "MCC", "ROC", "PRC", "Support", "Accuracy"});
  auto row = [](const ClassMetrics& m, const std::string& accuracy) {
    return csv_line({m.name, format_number(m.tp_rate), format_number(m.fp_rate), format_number(m.precision),
                     format_number(m.recall), format_number(m.f_measure), format_number(m.mcc),
                     format_number(m.roc_auc), format_number(m.prc_auc), format_number(m.support), accuracy});
  };
  for (const auto& m : classes) out += row(m, "");
  out += row(weighted, format_number(accuracy));
  return out;
}

// ---- resampling ------------------------------------------------------------

std::vector<std::size_t> FoldPlan::test_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < fold_of.size(); ++r)
    if (fold_of[r] == fold) rows.push_back(r);
  return rows;
}

std::vector<std::size_t> FoldPlan::train_rows(int fold) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < fold_of.size(); ++r)
    if (fold_of[r] != fold) rows.push_back(r);
  return rows;
}

FoldPlan stratified_kfold(const Dataset& data, int folds, std::uint64_t seed) {
  const std::size_t n = data.rows();
  if (folds < 2) throw ConfigError("folds must be at least 2");
  if (static_cast<std::size_t>(folds) > n) throw ConfigError(fmt::format("{} folds for {} rows", folds, n));
  const bool leave_one_out = static_cast<std::size_t>(folds) == n;

  FoldPlan plan;
  plan.folds = folds;
  plan.fold_of.assign(n, -1);
  std::mt19937_64 rng(seed);
  std::size_t offset = 0;
  for (std::size_t c = 0; c < data.class_count(); ++c) {
    std::vector<std::size_t> members;
    for (std::size_t r = 0; r < n; ++r)
      if (data.y[r] == static_cast<int>(c)) members.push_back(r);
    if (members.empty()) continue;
    if (!leave_one_out && members.size() < static_cast<std::size_t>(folds))
      throw DataError(fmt::format("class '{}' has {} rows, fewer than {} folds", data.class_names[c], members.size(),
                                  folds));
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t i = 0; i < members.size(); ++i)
      plan.fold_of[members[i]] = static_cast<int>((offset + i) % static_cast<std::size_t>(folds));
    offset = (offset + members.size()) % static_cast<std::size_t>(folds);
  }
  return plan;
}

CrossValidation cross_validate(const ClassifierSpec& spec, const Dataset& data, int folds, std::uint64_t seed) {
  spec.validate();
  const auto plan = stratified_kfold(data, folds, seed);
  CrossValidation cv;
  cv.probabilities = Matrix(data.rows(), data.class_count(), 0.0);
  for (int f = 0; f < folds; ++f) {
    const auto train_rows = plan.train_rows(f);
    const auto test_rows = plan.test_rows(f);
    try {
      const auto model = train(spec, data.subset_rows(train_rows), derive_seed(seed, static_cast<std::uint64_t>(f)));
      const auto proba = model.predict_proba(data.X.select_rows(test_rows));
      for (std::size_t i = 0; i < test_rows.size(); ++i) {
        const auto src = proba.row(i);
        std::copy(src.begin(), src.end(), cv.probabilities.row(test_rows[i]).begin());
      }
    } catch (const Error& e) {
      throw Error(e.code(), fmt::format("fold {}: {}", f, e.what()));
    }
  }
  cv.report = evaluate(cv.probabilities, data.y, data.class_names);
  return cv;
}

Direction parse_direction(std::string_view tag) {
  if (tag == "forward") return Direction::forward;
  if (tag == "backward") return Direction::backward;
  throw ConfigError(fmt::format("unknown selection direction '{}'", tag));
}

FeatureSelection greedy_feature_select(const ClassifierSpec& spec, const Dataset& data, Direction direction,
                                       int folds, std::uint64_t seed) {
  const std::size_t m = data.feature_names.size();
  if (m < 2) throw ConfigError("feature selection needs at least two features");

  // Subsets are kept in the dataset's column order.
  auto names_of = [&](const std::vector<bool>& in) {
    std::vector<std::string> names;
    for (std::size_t j = 0; j < m; ++j)
      if (in[j]) names.push_back(data.feature_names[j]);
    return names;
  };
  auto score = [&](const std::vector<bool>& in) {
    return weighted_roc(spec, data.subset_features(names_of(in)), folds, seed);
  };

  FeatureSelection out;
  std::vector<bool> in(m, direction == Direction::backward);
  double current = -std::numeric_limits<double>::infinity();
  if (direction == Direction::backward) current = score(in);

  for (;;) {
    const std::size_t size = static_cast<std::size_t>(std::count(in.begin(), in.end(), true));
    if (direction == Direction::forward ? size == m : size == 1) break;
    double best = -std::numeric_limits<double>::infinity();
    std::size_t best_j = m;
    for (std::size_t j = 0; j < m; ++j) {
      if (in[j] != (direction == Direction::backward)) continue;
      auto trial = in;
      trial[j] = !trial[j];
      const double s = score(trial);
      if (best_j == m || s > best) {
        best = s;
        best_j = j;
      }
    }
    const bool accept = direction == Direction::forward ? (size == 0 || best > current + kSelectionGain)
                                                        : best >= current - 1e-12;
    if (!accept) break;
    in[best_j] = !in[best_j];
    current = best;
    out.path.push_back({names_of(in), best});
  }
  out.selected = names_of(in);
  out.roc = current;
  return out;
}

std::string FeatureImportance::to_csv() const {
  std::string out = csv_line({"feature", "importance", "roc_drop"});
  for (std::size_t i = 0; i < names.size(); ++i)
    out += csv_line({names[i], format_number(values[i]), format_number(raw_drop[i])});
  return out;
}

namespace {

FeatureImportance normalized(std::vector<std::string> names, std::vector<double> raw_drop) {
  FeatureImportance imp;
  imp.names = std::move(names);
  imp.raw_drop = std::move(raw_drop);
  double max_drop = 0.0;
  for (double d : imp.raw_drop) max_drop = std::max(max_drop, d);
  for (double d : imp.raw_drop) imp.values.push_back(max_drop > 0.0 ? std::max(0.0, d) / max_drop : 0.0);
  return imp;
}

Matrix with_shuffled_column(const Matrix& X, std::size_t j, std::uint64_t seed) {
  Matrix shuffled = X;
  auto col = X.column_values(j);
  std::mt19937_64 rng(seed);
  std::shuffle(col.begin(), col.end(), rng);
  for (std::size_t i = 0; i < col.size(); ++i) shuffled(i, j) = col[i];
  return shuffled;
}

}  // namespace

FeatureImportance permutation_importance(const TrainedModel& model, const Dataset& data, int repeats,
                                         std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("repeats must be positive");
  if (data.class_names != model.class_names) throw SchemaError("dataset classes differ from the model's");
  const Matrix X = data.X.select_cols(resolve_columns(model.feature_names, data.feature_names));
  auto roc_of = [&](const Matrix& m) {
    const double roc = evaluate(model.predict_proba(m), data.y, data.class_names).weighted.roc_auc;
    return std::isnan(roc) ? 0.0 : roc;
  };
  const double baseline = roc_of(X);

  std::vector<double> drops;
  for (std::size_t j = 0; j < X.cols(); ++j) {
    double drop = 0.0;
    for (int r = 0; r < repeats; ++r)
      drop += baseline - roc_of(with_shuffled_column(
                             X, j, derive_seed(seed, j * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r))));
    drops.push_back(drop / repeats);
  }
  return normalized(model.feature_names, std::move(drops));
}

FeatureImportance cv_permutation_importance(const ClassifierSpec& spec, const Dataset& data, int folds, int repeats,
                                            std::uint64_t seed) {
  if (repeats < 1) throw ConfigError("repeats must be positive");
  spec.validate();
  const auto plan = stratified_kfold(data, folds, seed);
  std::vector<TrainedModel> models;
  std::vector<std::vector<std::size_t>> tests;
  for (int f = 0; f < folds; ++f) {
    models.push_back(train(spec, data.subset_rows(plan.train_rows(f)), derive_seed(seed, static_cast<std::uint64_t>(f))));
    tests.push_back(plan.test_rows(f));
  }
  auto pooled_roc = [&](const Matrix& X) {
    Matrix proba(data.rows(), data.class_count(), 0.0);
    for (std::size_t f = 0; f < models.size(); ++f) {
      const auto p = models[f].predict_proba(X.select_rows(tests[f]));
      for (std::size_t i = 0; i < tests[f].size(); ++i) {
        const auto src = p.row(i);
        std::copy(src.begin(), src.end(), proba.row(tests[f][i]).begin());
      }
    }
    const double roc = evaluate(proba, data.y, data.class_names).weighted.roc_auc;
    return std::isnan(roc) ? 0.0 : roc;
  };
  const double baseline = pooled_roc(data.X);
  std::vector<double> drops;
  for (std::size_t j = 0; j < data.X.cols(); ++j) {
    double drop = 0.0;
    for (int r = 0; r < repeats; ++r)
      drop += baseline - pooled_roc(with_shuffled_column(
                             data.X, j, derive_seed(seed, j * static_cast<std::size_t>(repeats) + static_cast<std::size_t>(r))));
    drops.push_back(drop / repeats);
  }
  return normalized(data.feature_names, std::move(drops));
}

std::vector<ClassifierSpec> default_grid(Family family) {
  std::vector<ClassifierSpec> grid;
  ClassifierSpec base;
  base.family = family;
  switch (family) {
    case Family::forest:
      for (int trees : {10, 29, 50})
        for (int k : {0, 13})
          for (int depth : {0, 3}) {
            auto s = base;
            s.trees = trees;
            s.features_per_split = k;
            s.max_depth = depth;
            grid.push_back(s);
          }
      break;
    case Family::bagging:
      for (int trees : {10, 29, 50})
        for (int depth : {0, 3}) {
          auto s = base;
          s.trees = trees;
          s.max_depth = depth;
          grid.push_back(s);
        }
      break;
    case Family::tree:
      for (int depth : {0, 3, 5})
        for (int leaf : {1, 2, 5}) {
          auto s = base;
          s.max_depth = depth;
          s.min_leaf = leaf;
          grid.push_back(s);
        }
      break;
    case Family::logistic:
      for (double ridge : {1e-8, 1e-4, 1e-2, 1.0, 10.0}) {
        auto s = base;
        s.ridge = ridge;
        grid.push_back(s);
      }
      break;
    case Family::knn:
      for (int k : {1, 3, 5, 7, 9}) {
        auto s = base;
        s.neighbours = k;
        grid.push_back(s);
      }
      break;
  }
  return grid;
}

GridSearchResult grid_search(const std::vector<ClassifierSpec>& candidates, const Dataset& data, int folds,
                             std::uint64_t seed) {
  if (candidates.empty()) throw ConfigError("empty hyperparameter grid");
  GridSearchResult out;
  out.candidates = candidates;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.roc.push_back(weighted_roc(candidates[i], data, folds, seed));
    if (out.roc[i] > out.roc[out.best]) out.best = i;
  }
  return out;
}

}  // namespace devmine
