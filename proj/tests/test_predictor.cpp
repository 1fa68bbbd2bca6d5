#include <algorithm>
#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "driftcast/predictor.hpp"
#include "driftcast/synthgen.hpp"

using namespace driftcast;

namespace {

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      ++pairs;
      if (s[i] > s[j])
        wins += 1.0;
      else if (s[i] == s[j])
        wins += 0.5;
    }
  }
  return wins / static_cast<double>(pairs);
}

FeatureMatrix make_features(const Mat& rows, std::vector<int> labels, std::vector<Timestamp> ts = {}) {
  FeatureMatrix fm;
  fm.rows = rows;
  fm.labels = std::move(labels);
  for (std::size_t k = 0; k < fm.labels.size(); ++k) {
    fm.user_ids.push_back("u" + std::to_string(100 + k));
    fm.candidate_ts.push_back(ts.empty() ? static_cast<Timestamp>(k) : ts[k]);
  }
  return fm;
}

TrainedUser trained(std::string id, Vec m, Vec v, int label, Timestamp ts) {
  TrainedUser u;
  u.user_id = std::move(id);
  u.m = std::move(m);
  u.v = std::move(v);
  u.label = label;
  u.candidate_ts = ts;
  return u;
}

}  // namespace

TEST(RocAuc, PairCountingFixture) {
  EXPECT_DOUBLE_EQ(roc_auc({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0}), 0.75);
  EXPECT_DOUBLE_EQ(pair_count_auc({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0}), 0.75);
}

TEST(RocAuc, PerfectAndConstant) {
  EXPECT_DOUBLE_EQ(roc_auc({0.1, 0.2, 0.8, 0.9}, {0, 0, 1, 1}), 1.0);
  EXPECT_DOUBLE_EQ(roc_auc({0.4, 0.4, 0.4, 0.4, 0.4}, {0, 1, 0, 1, 1}), 0.5);
}

TEST(RocAuc, SingleClassIsNaN) {
  EXPECT_TRUE(std::isnan(roc_auc({0.1, 0.2}, {1, 1})));
  EXPECT_TRUE(std::isnan(roc_auc({0.1, 0.2}, {0, 0})));
}

TEST(RocAuc, EqualsPairCountingExactly) {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int n = 2 + static_cast<int>(rng() % 199);
    std::vector<double> s;
    std::vector<int> y;
    std::uniform_int_distribution<int> coarse(0, 9);  // many ties
    std::normal_distribution<double> fine(0.0, 1.0);
    for (int i = 0; i < n; ++i) {
      s.push_back(trial % 2 ? coarse(rng) / 10.0 : fine(rng));
      y.push_back(static_cast<int>(rng() % 2));
    }
    y[0] = 0;
    y[1] = 1;
    EXPECT_EQ(roc_auc(s, y), pair_count_auc(s, y)) << "trial " << trial;
  }
}

TEST(RocAuc, InvariantUnderIncreasingTransform) {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> d(0.0, 1.0);
  std::vector<double> s, t;
  std::vector<int> y;
  for (int i = 0; i < 150; ++i) {
    s.push_back(std::round(d(rng) * 4) / 4);
    t.push_back(std::exp(3 * s.back()) + 7);
    y.push_back(i % 3 == 0);
  }
  EXPECT_EQ(roc_auc(s, y), roc_auc(t, y));
}

TEST(Metrics, ConsistentWithConfusion) {
  const std::vector<int> pred{1, 1, 0, 0, 1, 0}, lab{1, 0, 0, 1, 1, 0};
  const auto c = confusion_of(pred, lab);
  EXPECT_EQ(c.tp, 2);
  EXPECT_EQ(c.fp, 1);
  EXPECT_EQ(c.tn, 2);
  EXPECT_EQ(c.fn, 1);
  EXPECT_DOUBLE_EQ(accuracy_of(c), 4.0 / 6.0);
  const double p = 2.0 / 3.0, r = 2.0 / 3.0;
  EXPECT_DOUBLE_EQ(f1_of(c), 2 * p * r / (p + r));
}

TEST(Metrics, F1IsZeroWithoutPredictedPositives) {
  EXPECT_EQ(f1_of(confusion_of({0, 0, 0}, {1, 0, 1})), 0.0);
  EXPECT_EQ(f1_of(confusion_of({0, 0}, {0, 0})), 0.0);
}

TEST(Evaluate, PerfectScores) {
  Mat X(4, 1);
  X << -2, -1, 1, 2;
  LinearDiscriminant clf{Vec::Ones(1), 0.0, 0.0};
  const auto r = evaluate(clf, make_features(X, {0, 0, 1, 1}));
  EXPECT_EQ(r.accuracy, 1.0);
  EXPECT_EQ(r.auc, 1.0);
  EXPECT_EQ(r.f1_positive, 1.0);
}

TEST(Evaluate, SingleClassTestStillReportsAccuracy) {
  Mat X(2, 1);
  X << 1, -1;
  LinearDiscriminant clf{Vec::Ones(1), 0.0, 0.0};
  const auto r = evaluate(clf, make_features(X, {1, 1}));
  EXPECT_TRUE(std::isnan(r.auc));
  EXPECT_DOUBLE_EQ(r.accuracy, 0.5);
  EXPECT_DOUBLE_EQ(r.f1_positive, 2 * 1.0 * 0.5 / 1.5);
}

TEST(ChronologicalSplit, HalfAndNinety) {
  Mat X = Mat::Zero(10, 1);
  std::vector<Timestamp> ts{50, 10, 90, 20, 80, 30, 70, 40, 60, 100};
  auto fm = make_features(X, {0, 1, 0, 1, 0, 1, 0, 1, 0, 1}, ts);
  auto [tr, te] = chronological_split(fm, 0.5);
  ASSERT_EQ(tr.size(), 5u);
  ASSERT_EQ(te.size(), 5u);
  EXPECT_EQ(tr.candidate_ts, (std::vector<Timestamp>{10, 20, 30, 40, 50}));
  EXPECT_LE(tr.candidate_ts.back(), te.candidate_ts.front());
  auto [tr9, te9] = chronological_split(fm, 0.9);
  EXPECT_EQ(tr9.size(), 9u);
  EXPECT_EQ(te9.size(), 1u);
  EXPECT_EQ(te9.candidate_ts.front(), 100);
  auto [tr3, te3] = chronological_split(fm, 0.3);
  EXPECT_EQ(tr3.size(), 3u);
}

TEST(ChronologicalSplit, TiesBrokenByUserId) {
  Mat X = Mat::Zero(4, 1);
  auto fm = make_features(X, {0, 1, 0, 1}, {5, 5, 5, 5});
  fm.user_ids = {"d", "b", "c", "a"};
  auto [tr, te] = chronological_split(fm, 0.5);
  EXPECT_EQ(tr.user_ids, (std::vector<std::string>{"a", "b"}));
  EXPECT_EQ(te.user_ids, (std::vector<std::string>{"c", "d"}));
  auto again = chronological_split(fm, 0.5);
  EXPECT_EQ(again.first.user_ids, tr.user_ids);
}

TEST(ChronologicalSplit, RejectsEmptySides) {
  Mat X = Mat::Zero(3, 1);
  auto fm = make_features(X, {0, 1, 0});
  EXPECT_THROW(chronological_split(fm, 0.0), Error);
  EXPECT_THROW(chronological_split(fm, 1.0), Error);
  EXPECT_THROW(chronological_split(fm, 0.99), Error);
}

TEST(FitDiscriminant, SeparatedClusters) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 1.0);
  const int n = 200, I = 5;
  Mat X(n, I);
  std::vector<int> y;
  for (int k = 0; k < n; ++k) {
    y.push_back(k % 2);
    for (int i = 0; i < I; ++i) X(k, i) = d(rng) + (y.back() ? 3.0 : -3.0);
  }
  auto fm = make_features(X, y);
  auto clf = fit_discriminant(fm);
  EXPECT_GE(evaluate(clf, fm).accuracy, 0.95);
}

TEST(FitDiscriminant, OneDimensionalClosedForm) {
  Mat X(6, 1);
  X << -1.5, -1.0, -0.5, 0.5, 1.0, 1.5;
  auto fm = make_features(X, {0, 0, 0, 1, 1, 1});
  auto clf = fit_discriminant(fm);
  // class means -1 and 1, scatter 2 * (0.25 + 0 + 0.25) = 1
  const double sw = 1.0, lambda = 1e-3 * sw;
  EXPECT_NEAR(clf.weights(0), 2.0 / (sw + lambda), 1e-12);
  EXPECT_NEAR(clf.bias, 0.0, 1e-12);
  EXPECT_EQ(clf.predict((Eigen::RowVectorXd(1) << 0.2).finished()), 1);
  EXPECT_EQ(clf.predict((Eigen::RowVectorXd(1) << -0.2).finished()), 0);
}

TEST(FitDiscriminant, IdenticalMeansGiveZeroWeights) {
  Mat X(4, 2);
  X << 1, 0, -1, 0, 1, 0, -1, 0;
  auto clf = fit_discriminant(make_features(X, {0, 0, 1, 1}));
  EXPECT_LT(clf.weights.norm(), 1e-12);
}

TEST(FitDiscriminant, SingleClassFails) {
  Mat X = Mat::Zero(3, 2);
  EXPECT_THROW(fit_discriminant(make_features(X, {1, 1, 1})), Error);
}

TEST(RandomBaseline, MatchesExpectedRates) {
  Mat X = Mat::Zero(400, 1);
  std::vector<int> y;
  for (int k = 0; k < 400; ++k) y.push_back(k % 4 == 0);
  auto fm = make_features(X, y);
  auto [tr, te] = chronological_split(fm, 0.5);
  const auto r = random_baseline(tr, te, 9, 100);
  const double p = 0.25;
  EXPECT_NEAR(r.accuracy, p * p + (1 - p) * (1 - p), 0.01);
  EXPECT_NEAR(r.auc, 0.5, 0.01);
  EXPECT_NEAR(r.f1_positive, p, 0.02);
  EXPECT_EQ(r.confusion.total(), 100 * 200);
  EXPECT_EQ(to_json(r), to_json(random_baseline(tr, te, 9, 100)));
}

TEST(BuildFeatureMatrix, SortedById) {
  std::vector<TrainedUser> users{trained("c", Vec::Constant(2, 3.0), Vec::Ones(2), 1, 3),
                                 trained("a", Vec::Constant(2, 1.0), Vec::Ones(2), 0, 1),
                                 trained("b", Vec::Constant(2, 2.0), Vec::Ones(2), 1, 2)};
  Hyperparams h;
  auto fm = build_feature_matrix(users, h);
  ASSERT_EQ(fm.rows.rows(), 3);
  ASSERT_EQ(fm.rows.cols(), 2);
  EXPECT_EQ(fm.user_ids, (std::vector<std::string>{"a", "b", "c"}));
  EXPECT_EQ(fm.rows(0, 0), 1.0);
  EXPECT_EQ(fm.rows(2, 1), 3.0);
  EXPECT_EQ(fm.labels, (std::vector<int>{0, 1, 1}));
  EXPECT_EQ(build_feature_matrix(users, h).rows, fm.rows);
}

TEST(BuildFeatureMatrix, SamplingIsSeeded) {
  std::vector<TrainedUser> users{trained("a", Vec::Zero(3), Vec::Ones(3), 0, 1),
                                 trained("b", Vec::Zero(3), Vec::Ones(3), 1, 2)};
  Hyperparams h;
  h.deterministic_predict = false;
  h.seed = 17;
  auto f1 = build_feature_matrix(users, h);
  auto f2 = build_feature_matrix(users, h);
  EXPECT_EQ(f1.rows, f2.rows);
  EXPECT_NE(f1.rows.row(0), f1.rows.row(1));
  h.seed = 18;
  EXPECT_NE(build_feature_matrix(users, h).rows, f1.rows);
}

TEST(BuildFeatureMatrix, RejectsUntrainedAndUnlabeled) {
  std::vector<TrainOutcome> outcomes(1);
  outcomes[0].user_id = "a";
  outcomes[0].error = "insufficient history";
  EXPECT_THROW(build_feature_matrix(outcomes, Hyperparams{}), Error);
  auto u = trained("a", Vec::Zero(2), Vec::Ones(2), 0, 1);
  u.label.reset();
  EXPECT_THROW(build_feature_matrix(std::vector<TrainedUser>{u}, Hyperparams{}), Error);
}

namespace {

Corpus small_synth_corpus() {
  SynthConfig cfg;
  cfg.seed = 2;
  cfg.n_users = 24;
  cfg.statuses_per_user = 6;
  cfg.positive_rate = 0.5;
  cfg.vocab_status = cfg.vocab_interaction = cfg.vocab_interactor = 20;
  return synth_corpus(generate(cfg));
}

Hyperparams small_hyper() {
  Hyperparams h;
  h.dims = 3;
  h.max_iters = 5;
  h.eta = 1e-3;
  return h;
}

}  // namespace

TEST(RunExperiment, SinglePointGrid) {
  const auto corpus = small_synth_corpus();
  Protocol p;
  p.ablation = false;
  p.random_baseline = false;
  const auto res = run_experiment(corpus, small_hyper(), p);
  ASSERT_EQ(res.reports.size(), 1u);
  EXPECT_EQ(res.reports[0].method, "full");
  EXPECT_EQ(res.reports[0].n_train + res.reports[0].n_test, corpus.timelines().size());
}

TEST(RunExperiment, GridFractionsAndBaselines) {
  const auto corpus = small_synth_corpus();
  Protocol p;
  p.w_reg_grid = {0.0, 1.0};
  p.train_fractions = {0.4, 0.6};
  const auto res = run_experiment(corpus, small_hyper(), p);
  ASSERT_EQ(res.reports.size(), 2u * 2u + 2u + 2u);
  EXPECT_EQ(res.reports[4].method, "-Int");
  EXPECT_EQ(res.reports[6].method, "Random");
  for (const auto& r : res.reports) {
    if (r.method == "Random") continue;
    EXPECT_DOUBLE_EQ(r.accuracy, accuracy_of(r.confusion));
    EXPECT_DOUBLE_EQ(r.f1_positive, f1_of(r.confusion));
  }
  const auto table = format_table(res.reports);
  EXPECT_NE(table.find("Accuracy"), std::string::npos);
  EXPECT_NE(table.find("-Int"), std::string::npos);
}

TEST(RunExperiment, IndependentOfJobs) {
  const auto corpus = small_synth_corpus();
  Protocol p;
  const auto a = to_json(run_experiment(corpus, small_hyper(), p, 1)).dump();
  const auto b = to_json(run_experiment(corpus, small_hyper(), p, 3)).dump();
  EXPECT_EQ(a, b);
}
