#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "devmine/error.hpp"
#include "devmine/learn.hpp"
#include "devmine/random.hpp"

using namespace devmine;

namespace {

// Two Gaussian blobs in `informative` dims plus `noise` pure-noise columns.
Dataset blobs(std::size_t n, std::size_t informative, std::size_t noise, double gap, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, 1.0);
  Matrix X(n, informative + noise);
  std::vector<std::string> labels, names;
  for (std::size_t j = 0; j < informative; ++j) names.push_back("x" + std::to_string(j));
  for (std::size_t j = 0; j < noise; ++j) names.push_back("noise" + std::to_string(j));
  for (std::size_t r = 0; r < n; ++r) {
    const bool pos = r % 2 == 1;
    for (std::size_t j = 0; j < informative; ++j) X(r, j) = g(rng) + (pos ? gap : 0.0);
    for (std::size_t j = 0; j < noise; ++j) X(r, informative + j) = g(rng);
    labels.push_back(pos ? "MR" : "AR");
  }
  return Dataset::from_labels(names, X, labels);
}

// Pairwise definition: P(score_pos > score_neg) + 0.5 P(tie).
double pairwise_auc(const std::vector<double>& s, const std::vector<int>& y, int positive) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == positive && y[j] != positive) {
        pairs += 1;
        wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
      }
  return wins / pairs;
}

Matrix two_class_probs(const std::vector<double>& p1) {
  Matrix P(p1.size(), 2);
  for (std::size_t r = 0; r < p1.size(); ++r) P(r, 0) = 1 - p1[r], P(r, 1) = p1[r];
  return P;
}

}  // namespace

TEST(Dataset, ValidationAndSubsets) {
  Matrix X(3, 2, 1.0);
  EXPECT_THROW(Dataset::from_labels({"a", "b"}, X, {"x", "x", "x"}), DataError);
  EXPECT_THROW(Dataset::from_labels({"a"}, X, {"x", "y", "x"}), SchemaError);
  EXPECT_THROW(Dataset::from_labels({"a", "a"}, X, {"x", "y", "x"}), SchemaError);
  X(1, 1) = std::nan("");
  EXPECT_THROW(Dataset::from_labels({"a", "b"}, X, {"x", "y", "x"}), DataError);
  X(1, 1) = 2;
  const auto d = Dataset::from_labels({"a", "b"}, X, {"y", "x", "y"});
  EXPECT_EQ(d.class_names, (std::vector<std::string>{"x", "y"}));
  EXPECT_EQ(d.y, (std::vector<int>{1, 0, 1}));
  const auto s = d.subset_features({"b"});
  EXPECT_EQ(s.X(1, 0), 2.0);
  EXPECT_THROW(d.subset_features({"c"}), SchemaError);
  const std::vector<std::size_t> rows{0, 2};
  EXPECT_EQ(d.subset_rows(rows).class_count(), 2u);
}

TEST(Spec, RangesAndParsing) {
  ClassifierSpec s;
  EXPECT_NO_THROW(s.validate());
  s.trees = 0;
  EXPECT_THROW(s.validate(), ConfigError);
  s = {};
  s.max_depth = 65;
  EXPECT_THROW(s.validate(), ConfigError);
  EXPECT_EQ(parse_family("knn"), Family::knn);
  EXPECT_THROW(parse_family("svm"), ConfigError);
  EXPECT_THROW(parse_direction("sideways"), ConfigError);
}

TEST(Train, LogisticSeparatesSeparableData) {
  const auto d = blobs(60, 2, 0, 12.0, 1);
  ClassifierSpec spec;
  spec.family = Family::logistic;
  const auto m = train(spec, d, 0);
  const auto pred = m.predict(d.X);
  EXPECT_EQ(pred, d.y);
  const auto P = m.predict_proba(d.X);
  for (std::size_t r = 0; r < P.rows(); ++r) EXPECT_NEAR(P(r, 0) + P(r, 1), 1.0, 1e-12);
}

TEST(Train, SingleMemberForestWithoutBootstrapIsOneTree) {
  const auto d = blobs(80, 3, 2, 1.0, 2);
  ClassifierSpec spec;
  spec.trees = 1;
  spec.features_per_split = static_cast<int>(d.X.cols());
  spec.bootstrap = false;
  spec.max_depth = 4;
  const std::uint64_t seed = 17;
  const auto forest = train(spec, d, seed);
  std::vector<std::size_t> rows(d.rows());
  std::iota(rows.begin(), rows.end(), 0u);
  const auto tree = fit_tree(d.X, d.y, 2, rows, 4, 1, spec.features_per_split, derive_seed(derive_seed(seed, 0), 1));
  const auto& members = std::get<EnsembleParams>(forest.params).members;
  ASSERT_EQ(members.size(), 1u);
  EXPECT_EQ(members[0], tree);

  // with every feature considered, the fitted tree predicts like the plain tree family
  ClassifierSpec single;
  single.family = Family::tree;
  single.max_depth = 4;
  EXPECT_EQ(train(single, d, seed).predict(d.X), forest.predict(d.X));
}

TEST(Train, ForestAveragesItsMembers) {
  const auto d = blobs(50, 2, 1, 1.5, 3);
  for (int trees = 1; trees <= 4; ++trees) {
    ClassifierSpec spec;
    spec.trees = trees;
    const auto m = train(spec, d, 5);
    const auto P = m.predict_proba(d.X);
    const auto& members = std::get<EnsembleParams>(m.params).members;
    for (std::size_t r = 0; r < d.rows(); ++r) {
      double mean = 0;
      for (const auto& t : members) mean += t.distribution(d.X.row(r))[1];
      EXPECT_NEAR(P(r, 1), mean / trees, 1e-12);
    }
  }
}

TEST(Train, DeterministicAndSerializable) {
  const auto d = blobs(40, 2, 2, 1.0, 4);
  for (auto family : {Family::tree, Family::forest, Family::bagging, Family::logistic, Family::knn}) {
    ClassifierSpec spec;
    spec.family = family;
    spec.trees = 5;
    const auto a = train(spec, d, 9);
    EXPECT_EQ(a, train(spec, d, 9)) << to_string(family);
    const auto back = TrainedModel::from_json(a.to_json());
    EXPECT_EQ(back.predict_proba(d.X), a.predict_proba(d.X)) << to_string(family);
    EXPECT_EQ(back.to_json(), a.to_json());
  }
  EXPECT_THROW(TrainedModel::from_json("{\"format\":\"other/1\"}"), SchemaError);
  EXPECT_THROW(TrainedModel::from_json("not json"), SchemaError);
}

TEST(Train, PredictResolvesColumnsByName) {
  const auto d = blobs(30, 2, 1, 3.0, 5);
  const auto m = train(ClassifierSpec{}, d, 1);
  const auto reordered = d.subset_features({"noise0", "x1", "x0"});
  EXPECT_EQ(m.predict_proba(reordered), m.predict_proba(d.X));
  EXPECT_THROW(m.predict_proba(d.subset_features({"x0", "x1"})), SchemaError);
}

TEST(Evaluate, PerfectPredictions) {
  const std::vector<int> y{0, 1, 0, 1};
  const auto r = evaluate(two_class_probs({0.1, 0.9, 0.2, 0.8}), y, {"AR", "MR"});
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.weighted.roc_auc, 1.0);
  EXPECT_EQ(r.weighted.mcc, 1.0);
  EXPECT_EQ(r.weighted.name, "Weighted Avg.");
}

TEST(Evaluate, RocAreaHandCase) {
  // positives 0.8, 0.4; negatives 0.6, 0.2: 3 of 4 pairs ordered
  const std::vector<double> s{0.8, 0.4, 0.6, 0.2};
  const std::vector<int> y{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(roc_auc(s, y, 1), 0.75);
  const std::vector<double> tied{0.5, 0.5, 0.5};
  const std::vector<int> y3{1, 0, 0};
  EXPECT_DOUBLE_EQ(roc_auc(tied, y3, 1), 0.5);
  const std::vector<int> one_class{1, 1, 1};
  EXPECT_TRUE(std::isnan(roc_auc(tied, one_class, 1)));
}

TEST(Evaluate, RocAreaMatchesPairwiseOracleAndIsRankInvariant) {
  std::mt19937_64 rng(6);
  for (int round = 0; round < 50; ++round) {
    const std::size_t n = 4 + rng() % 40;
    std::vector<double> s(n);
    std::vector<int> y(n);
    for (std::size_t i = 0; i < n; ++i) s[i] = static_cast<double>(rng() % 10) / 10.0, y[i] = static_cast<int>(i % 2);
    EXPECT_NEAR(roc_auc(s, y, 1), pairwise_auc(s, y, 1), 1e-12);
    std::vector<double> t(n);
    for (std::size_t i = 0; i < n; ++i) t[i] = std::exp(3 * s[i]) + 7;
    EXPECT_NEAR(roc_auc(t, y, 1), roc_auc(s, y, 1), 1e-12);
  }
}

TEST(Evaluate, CountsMatchBruteForce) {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> u(0, 1);
  for (int round = 0; round < 30; ++round) {
    const std::size_t n = 5 + rng() % 50;
    const std::size_t k = 2 + rng() % 2;
    Matrix P(n, k);
    std::vector<int> y(n);
    for (std::size_t r = 0; r < n; ++r) {
      double tot = 0;
      for (std::size_t c = 0; c < k; ++c) tot += (P(r, c) = u(rng));
      for (std::size_t c = 0; c < k; ++c) P(r, c) /= tot;
      y[r] = static_cast<int>(r % k);
    }
    std::vector<std::string> names;
    for (std::size_t c = 0; c < k; ++c) names.push_back("c" + std::to_string(c));
    const auto rep = evaluate(P, y, names);

    std::vector<int> pred(n);
    for (std::size_t r = 0; r < n; ++r) pred[r] = argmax(P.row(r));
    std::size_t correct = 0;
    for (std::size_t r = 0; r < n; ++r) correct += pred[r] == y[r];
    EXPECT_DOUBLE_EQ(rep.accuracy, static_cast<double>(correct) / n);

    Matrix confusion(k, k);
    for (std::size_t r = 0; r < n; ++r) confusion(static_cast<std::size_t>(y[r]), static_cast<std::size_t>(pred[r])) += 1;
    EXPECT_EQ(rep.confusion, confusion);

    double w_mcc = 0, w_recall = 0, w_auc = 0;
    for (std::size_t c = 0; c < k; ++c) {
      double tp = 0, fp = 0, fn = 0, tn = 0;
      for (std::size_t r = 0; r < n; ++r) {
        const bool a = y[r] == static_cast<int>(c), p = pred[r] == static_cast<int>(c);
        tp += a && p, fp += !a && p, fn += a && !p, tn += !a && !p;
      }
      const double den = std::sqrt((tp + fp) * (tp + fn) * (tn + fp) * (tn + fn));
      const double mcc = den == 0 ? 0 : (tp * tn - fp * fn) / den;
      std::vector<double> s(n);
      for (std::size_t r = 0; r < n; ++r) s[r] = P(r, c);
      const double auc = pairwise_auc(s, y, static_cast<int>(c));
      EXPECT_NEAR(rep.classes[c].mcc, mcc, 1e-12);
      EXPECT_NEAR(rep.classes[c].recall, tp / (tp + fn), 1e-12);
      EXPECT_NEAR(rep.classes[c].roc_auc, auc, 1e-12);
      const double support = tp + fn;
      w_mcc += support * mcc, w_recall += support * tp / (tp + fn), w_auc += support * auc;
    }
    EXPECT_NEAR(rep.weighted.mcc, w_mcc / n, 1e-12);
    EXPECT_NEAR(rep.weighted.recall, w_recall / n, 1e-12);
    EXPECT_NEAR(rep.weighted.roc_auc, w_auc / n, 1e-12);
    EXPECT_NEAR(rep.weighted.recall, rep.accuracy, 1e-12);
  }
}

TEST(Evaluate, PrcAreaBounds) {
  const std::vector<double> s{0.9, 0.8, 0.3, 0.1};
  const std::vector<int> y{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(prc_auc(s, y, 1), 1.0);
  const std::vector<int> none{0, 0, 0, 0};
  EXPECT_TRUE(std::isnan(prc_auc(s, none, 1)));
  const std::vector<int> mixed{0, 1, 0, 1};
  const double a = prc_auc(s, mixed, 1);
  EXPECT_GT(a, 0.0);
  EXPECT_LT(a, 1.0);
}

TEST(Evaluate, ShapeErrors) {
  const std::vector<int> y{0, 1};
  EXPECT_THROW(evaluate(two_class_probs({0.2, 0.8, 0.5}), y, {"a", "b"}), ConfigError);
  const std::vector<int> y1{0};
  EXPECT_THROW(evaluate(two_class_probs({0.2}), y1, {"a", "b"}), ConfigError);
}

TEST(Folds, StratifiedBalance) {
  const auto d = blobs(10, 1, 0, 1.0, 8);
  const auto plan = stratified_kfold(d, 5, 3);
  for (int f = 0; f < 5; ++f) {
    const auto test = plan.test_rows(f);
    ASSERT_EQ(test.size(), 2u);
    EXPECT_NE(d.y[test[0]], d.y[test[1]]);
  }
}

TEST(Folds, PartitionOfRows) {
  const auto d = blobs(37, 1, 0, 1.0, 9);
  for (int k : {2, 3, 7, 10}) {
    const auto plan = stratified_kfold(d, k, 11);
    std::multiset<std::size_t> seen;
    for (int f = 0; f < k; ++f) {
      const auto test = plan.test_rows(f);
      const auto train_rows = plan.train_rows(f);
      EXPECT_EQ(test.size() + train_rows.size(), d.rows());
      seen.insert(test.begin(), test.end());
      for (auto r : test) EXPECT_EQ(std::count(train_rows.begin(), train_rows.end(), r), 0);
      // per-class counts differ by at most one between folds
      const auto pos = std::count_if(test.begin(), test.end(), [&](std::size_t r) { return d.y[r] == 1; });
      const double expected = 18.0 / k;
      EXPECT_LE(std::abs(static_cast<double>(pos) - expected), 1.0);
    }
    EXPECT_EQ(seen.size(), d.rows());
    EXPECT_EQ(std::set<std::size_t>(seen.begin(), seen.end()).size(), d.rows());
  }
}

TEST(Folds, LeaveOneOutAndErrors) {
  const auto d = blobs(6, 1, 0, 1.0, 10);
  const auto plan = stratified_kfold(d, 6, 1);
  for (int f = 0; f < 6; ++f) EXPECT_EQ(plan.test_rows(f).size(), 1u);
  EXPECT_THROW(stratified_kfold(d, 1, 1), ConfigError);
  EXPECT_THROW(stratified_kfold(d, 7, 1), ConfigError);
  auto y = d.y;
  std::fill(y.begin(), y.end(), 0);
  y[0] = 1;
  y[1] = 1;
  EXPECT_THROW(stratified_kfold(d.with_labels(y), 3, 1), DataError);
}

TEST(CrossValidation, NearestNeighbourOnDuplicatedRows) {
  // every row appears twice; 1-NN finds the twin unless it shares the fold
  const auto base = blobs(20, 2, 0, 0.0, 12);
  Matrix X(40, 2);
  std::vector<std::string> labels;
  for (std::size_t r = 0; r < 40; ++r) {
    X(r, 0) = base.X(r % 20, 0), X(r, 1) = base.X(r % 20, 1);
    labels.push_back(base.class_names[static_cast<std::size_t>(base.y[r % 20])]);
  }
  const auto d = Dataset::from_labels({"a", "b"}, X, labels);
  ClassifierSpec spec;
  spec.family = Family::knn;
  const auto cv = cross_validate(spec, d, 40 / 2, 1);
  EXPECT_EQ(cv.probabilities.rows(), 40u);
  const auto loo = cross_validate(spec, d, 20, 1);
  EXPECT_GE(loo.report.accuracy, 0.5);
  EXPECT_EQ(cross_validate(spec, d, 20, 1).probabilities, loo.probabilities);
}

TEST(CrossValidation, ShuffledLabelsScoreNearChance) {
  auto d = blobs(200, 3, 0, 3.0, 13);
  const auto real = cross_validate(ClassifierSpec{}, d, 10, 2).report.weighted.roc_auc;
  EXPECT_GT(real, 0.95);
  auto y = d.y;
  std::shuffle(y.begin(), y.end(), std::mt19937_64(14));
  const auto null = cross_validate(ClassifierSpec{}, d.with_labels(y), 10, 2).report.weighted.roc_auc;
  EXPECT_NEAR(null, 0.5, 0.12);
}

TEST(Selection, ForwardFindsTheInformativeColumn) {
  const auto d = blobs(60, 1, 3, 4.0, 15);
  ClassifierSpec spec;
  spec.family = Family::logistic;
  const auto sel = greedy_feature_select(spec, d, Direction::forward, 5, 1);
  ASSERT_FALSE(sel.selected.empty());
  EXPECT_EQ(sel.selected.front(), "x0");
  EXPECT_FALSE(sel.path.empty());
  EXPECT_DOUBLE_EQ(sel.path.back().roc, sel.roc);
}

TEST(Selection, BackwardKeepsTheInformativeColumn) {
  const auto d = blobs(60, 1, 3, 4.0, 16);
  ClassifierSpec spec;
  spec.family = Family::logistic;
  const auto sel = greedy_feature_select(spec, d, Direction::backward, 5, 1);
  EXPECT_NE(std::find(sel.selected.begin(), sel.selected.end(), "x0"), sel.selected.end());
  EXPECT_GE(sel.selected.size(), 1u);
  EXPECT_THROW(greedy_feature_select(spec, d.subset_features({"x0"}), Direction::backward, 5, 1), ConfigError);
}

TEST(Importance, SolePredictorDominatesNoise) {
  const auto d = blobs(120, 1, 3, 3.0, 17);
  const auto m = train(ClassifierSpec{}, d, 1);
  const auto imp = permutation_importance(m, d, 10, 2);
  ASSERT_EQ(imp.names.size(), 4u);
  EXPECT_EQ(imp.values[0], 1.0);
  for (std::size_t j = 1; j < 4; ++j) EXPECT_LT(imp.values[j], 0.2);
  for (double v : imp.values) EXPECT_TRUE(v >= 0.0 && v <= 1.0);

  const auto cv = cv_permutation_importance(ClassifierSpec{}, d, 5, 5, 3);
  EXPECT_EQ(cv.values[0], 1.0);
  for (std::size_t j = 1; j < 4; ++j) EXPECT_LT(cv.values[j], 0.1);
  EXPECT_NE(imp.to_csv().find("x0"), std::string::npos);
}

TEST(Grid, ContainsDefaultForestAndPicksTheBest) {
  const auto grid = default_grid(Family::forest);
  const bool has = std::any_of(grid.begin(), grid.end(), [](const ClassifierSpec& s) {
    return s.trees == 29 && s.features_per_split == 13 && s.max_depth == 3;
  });
  EXPECT_TRUE(has);
  for (auto family : {Family::tree, Family::bagging, Family::logistic, Family::knn}) EXPECT_FALSE(default_grid(family).empty());

  const auto d = blobs(40, 2, 0, 2.0, 18);
  const auto knn = default_grid(Family::knn);
  const auto r = grid_search(knn, d, 5, 1);
  ASSERT_EQ(r.roc.size(), knn.size());
  EXPECT_EQ(*std::max_element(r.roc.begin(), r.roc.end()), r.roc[r.best]);
  EXPECT_EQ(std::find(r.roc.begin(), r.roc.end(), r.roc[r.best]) - r.roc.begin(), static_cast<std::ptrdiff_t>(r.best));
}
