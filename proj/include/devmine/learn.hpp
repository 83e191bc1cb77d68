#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "devmine/matrix.hpp"
#include "devmine/metrics.hpp"

namespace devmine {

// ---- data ------------------------------------------------------------------

struct Dataset {
  std::vector<std::string> feature_names;
  Matrix X;
  std::vector<std::string> class_names;  // sorted; index = class id
  std::vector<int> y;

  /// Validates shape, finiteness and that at least two classes occur.
  static Dataset from_labels(std::vector<std::string> feature_names, Matrix X,
                             const std::vector<std::string>& labels);
  static Dataset from_feature_table(const FeatureTable& table);

  std::size_t rows() const noexcept { return X.rows(); }
  std::size_t class_count() const noexcept { return class_names.size(); }

  /// Row subset sharing the full class list.
  Dataset subset_rows(std::span<const std::size_t> rows) const;
  /// Column subset by name, in the given order. SchemaError on unknown names.
  Dataset subset_features(const std::vector<std::string>& names) const;
  /// Same rows with label `y` replaced.
  Dataset with_labels(std::vector<int> y) const;
};

// ---- classifiers -----------------------------------------------------------

enum class Family { tree, forest, bagging, logistic, knn };

Family parse_family(std::string_view tag);
std::string_view to_string(Family family);

struct ClassifierSpec {
  Family family = Family::forest;
  int trees = 29;                // I, ensemble size [1, 1000]
  int features_per_split = 13;   // K, forest only; 0 = floor(log2(m)) + 1; capped at m
  int max_depth = 3;             // 0 = unlimited, else [1, 64]
  int min_leaf = 1;              // rows per leaf [1, 1000]
  bool bootstrap = true;         // forest only; bagging always resamples
  double ridge = 1e-8;           // logistic L2 penalty [0, 1e6]
  int neighbours = 1;            // knn k [1, 1000]

  /// ConfigError when a hyperparameter is out of range.
  void validate() const;
  /// Compact "family key=value ..." rendering of the relevant knobs.
  std::string describe() const;

  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  std::vector<double> distribution;  // class frequencies of training rows here

  friend bool operator==(const TreeNode&, const TreeNode&) = default;
};

/// CART tree with Gini impurity; node 0 is the root.
struct DecisionTree {
  std::vector<TreeNode> nodes;

  std::span<const double> distribution(std::span<const double> x) const;
  friend bool operator==(const DecisionTree&, const DecisionTree&) = default;
};

struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;  // 1 for constant columns

  static Standardizer fit(const Matrix& X);
  std::vector<double> apply(std::span<const double> x) const;
  Matrix apply(const Matrix& X) const;
  friend bool operator==(const Standardizer&, const Standardizer&) = default;
};

struct EnsembleParams {
  std::vector<DecisionTree> members;
  friend bool operator==(const EnsembleParams&, const EnsembleParams&) = default;
};

struct LogisticParams {
  Standardizer standardizer;
  Matrix weights;  // classes x (features + 1), last column the intercept
  int iterations = 0;
  friend bool operator==(const LogisticParams&, const LogisticParams&) = default;
};

struct KnnParams {
  Standardizer standardizer;
  Matrix points;  // standardized training rows
  std::vector<int> y;
  friend bool operator==(const KnnParams&, const KnnParams&) = default;
};

inline constexpr std::string_view kModelFormat = "devmine-model/1";

class TrainedModel {
 public:
  ClassifierSpec spec;
  std::vector<std::string> feature_names;
  std::vector<std::string> class_names;
  std::uint64_t seed = 0;
  std::variant<DecisionTree, EnsembleParams, LogisticParams, KnnParams> params;

  /// Rows in this model's feature order; one probability simplex per row.
  Matrix predict_proba(const Matrix& X) const;
  /// Resolves the model's features by name. SchemaError on missing columns.
  Matrix predict_proba(const Dataset& data) const;
  std::vector<int> predict(const Matrix& X) const;

  std::string to_json() const;
  /// SchemaError on a foreign or malformed document.
  static TrainedModel from_json(std::string_view text);

  friend bool operator==(const TrainedModel&, const TrainedModel&) = default;
};

/// Deterministic for fixed (spec, data, seed). DataError when fewer than two
/// classes occur in `data`.
TrainedModel train(const ClassifierSpec& spec, const Dataset& data, std::uint64_t seed);

/// Fits a single CART tree on the given rows. `features_per_split` random
/// candidate features per node (0 = all, considered in column order).
DecisionTree fit_tree(const Matrix& X, std::span<const int> y, std::size_t classes,
                      std::span<const std::size_t> rows, int max_depth, int min_leaf,
                      int features_per_split, std::uint64_t seed);

/// Index of the largest entry; ties resolve to the lowest index.
int argmax(std::span<const double> p);

// ---- evaluation ------------------------------------------------------------

struct ClassMetrics {
  std::string name;
  double support = 0.0;
  double tp_rate = 0.0;
  double fp_rate = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f_measure = 0.0;
  double mcc = 0.0;
  double roc_auc = 0.0;
  double prc_auc = 0.0;
};

struct EvalReport {
  std::vector<ClassMetrics> classes;
  ClassMetrics weighted;  // support-weighted means, name "Weighted Avg."
  double accuracy = 0.0;
  Matrix confusion;  // actual x predicted counts

  /// Per-class rows, then the weighted row; the accuracy column is filled on
  /// the weighted row only.
  std::string to_csv() const;
};

/// One-vs-rest ROC area of class `positive` by the rank statistic, tied scores counting half.
/// NaN when either group is empty.
double roc_auc(std::span<const double> scores, std::span<const int> labels, int positive);

/// Trapezoidal area under the precision/recall points taken at every
/// distinct score threshold, anchored at recall 0 with the first point's
/// precision. NaN without positives.
double prc_auc(std::span<const double> scores, std::span<const int> labels, int positive);

/// Argmax predictions (ties to the lowest class index). Precision, F and
/// MCC are 0 when their denominators vanish. ConfigError on shape mismatch
/// or fewer than two rows.
EvalReport evaluate(const Matrix& probabilities, std::span<const int> labels,
                    const std::vector<std::string>& class_names);

// ---- resampling ------------------------------------------------------------

struct FoldPlan {
  int folds = 0;
  std::vector<int> fold_of;  // row -> fold

  std::vector<std::size_t> test_rows(int fold) const;
  std::vector<std::size_t> train_rows(int fold) const;
};

/// Shuffles each class and deals it round-robin, continuing the rotation
/// across classes. ConfigError when folds < 2 or folds > rows; DataError
/// naming any class with fewer than `folds` rows.
FoldPlan stratified_kfold(const Dataset& data, int folds, std::uint64_t seed);

struct CrossValidation {
  EvalReport report;
  Matrix probabilities;  // pooled out-of-fold rows, in dataset order
};

/// Trains on k-1 folds, scores the held-out fold and evaluates the pooled
/// predictions once. Fold f trains with seed derive_seed(seed, f).
CrossValidation cross_validate(const ClassifierSpec& spec, const Dataset& data, int folds, std::uint64_t seed);

enum class Direction { forward, backward };
Direction parse_direction(std::string_view tag);

struct SelectionStep {
  std::vector<std::string> features;
  double roc = 0.0;
};

struct FeatureSelection {
  std::vector<std::string> selected;
  double roc = 0.0;
  std::vector<SelectionStep> path;  // accepted steps in order
};

/// Wrapper stepwise search on pooled CV weighted ROC. Forward adds while
/// the best addition gains more than 1e-4; backward drops while the best
/// removal costs nothing. Ties go to the earlier column. At least one
/// feature is always kept. ConfigError with fewer than two features.
FeatureSelection greedy_feature_select(const ClassifierSpec& spec, const Dataset& data, Direction direction,
                                       int folds, std::uint64_t seed);

struct FeatureImportance {
  std::vector<std::string> names;
  std::vector<double> values;  // in [0, 1], max = 1 unless all zero
  std::vector<double> raw_drop;  // mean ROC drop before clipping/normalizing

  std::string to_csv() const;
};

/// Mean weighted-ROC drop over `repeats` shuffles per column, clipped at 0
/// and divided by the largest drop.
FeatureImportance permutation_importance(const TrainedModel& model, const Dataset& data, int repeats,
                                         std::uint64_t seed);

/// Out-of-fold variant: each column is shuffled once per repeat across the
/// whole dataset, every fold model scores its held-out rows from the
/// shuffled matrix, and the drop is measured on the pooled predictions.
/// Noise the models memorised in training carries no credit here.
FeatureImportance cv_permutation_importance(const ClassifierSpec& spec, const Dataset& data, int folds,
                                            int repeats, std::uint64_t seed);

/// Candidate specs for a family; the forest grid includes I=29, K=13,
/// depth=3.
std::vector<ClassifierSpec> default_grid(Family family);

struct GridSearchResult {
  std::vector<ClassifierSpec> candidates;
  std::vector<double> roc;
  std::size_t best = 0;
};

/// Best pooled-CV weighted ROC; ties go to the earlier candidate.
GridSearchResult grid_search(const std::vector<ClassifierSpec>& candidates, const Dataset& data, int folds,
                             std::uint64_t seed);

}  // namespace devmine
