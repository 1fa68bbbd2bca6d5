#pragma once

// Feature assembly, the two-class linear discriminant and evaluation metrics.

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftcast/common.hpp"
#include "driftcast/corpus.hpp"
#include "driftcast/dynamics.hpp"
#include "driftcast/learner.hpp"

namespace driftcast {

/// One row per candidate user, in a stable order.
struct FeatureMatrix {
  Mat rows;
  std::vector<std::string> user_ids;
  std::vector<int> labels;
  std::vector<Timestamp> candidate_ts;

  std::size_t size() const { return user_ids.size(); }

  void check() const {
    const auto n = static_cast<Eigen::Index>(user_ids.size());
    if (rows.rows() != n || labels.size() != user_ids.size() || candidate_ts.size() != user_ids.size())
      throw Error("feature matrix rows, ids and labels are misaligned");
    if (!rows.allFinite()) throw NumericError("feature matrix has nonfinite entries");
    for (int y : labels)
      if (y != 0 && y != 1) throw Error("labels must be 0 or 1");
  }

  std::size_t positives() const { return static_cast<std::size_t>(std::count(labels.begin(), labels.end(), 1)); }

  FeatureMatrix subset(const std::vector<std::size_t>& idx) const {
    FeatureMatrix out;
    out.rows.resize(static_cast<Eigen::Index>(idx.size()), rows.cols());
    for (std::size_t k = 0; k < idx.size(); ++k) {
      out.rows.row(static_cast<Eigen::Index>(k)) = rows.row(static_cast<Eigen::Index>(idx[k]));
      out.user_ids.push_back(user_ids[idx[k]]);
      out.labels.push_back(labels[idx[k]]);
      out.candidate_ts.push_back(candidate_ts[idx[k]]);
    }
    return out;
  }
};

/// Stacks the predicted next-post latent vectors of trained, labeled users in
/// user id order.
inline FeatureMatrix build_feature_matrix(std::vector<const TrainedUser*> users, const Hyperparams& hyper) {
  std::sort(users.begin(), users.end(), [](auto* a, auto* b) { return a->user_id < b->user_id; });
  FeatureMatrix fm;
  if (users.empty()) return fm;
  const auto I = users.front()->m.size();
  fm.rows.resize(static_cast<Eigen::Index>(users.size()), I);
  for (std::size_t k = 0; k < users.size(); ++k) {
    const auto& u = *users[k];
    if (!u.label) throw Error("user " + u.user_id + " has no label");
    if (u.m.size() != I) throw Error("user " + u.user_id + " has a different latent dimension");
    fm.rows.row(static_cast<Eigen::Index>(k)) = predict_next_latent(u, hyper).transpose();
    fm.user_ids.push_back(u.user_id);
    fm.labels.push_back(*u.label);
    fm.candidate_ts.push_back(u.candidate_ts);
  }
  fm.check();
  return fm;
}

inline FeatureMatrix build_feature_matrix(const std::vector<TrainedUser>& users, const Hyperparams& hyper) {
  std::vector<const TrainedUser*> ptrs;
  for (const auto& u : users) ptrs.push_back(&u);
  return build_feature_matrix(std::move(ptrs), hyper);
}

/// Fails on any untrained user.
inline FeatureMatrix build_feature_matrix(const std::vector<TrainOutcome>& outcomes, const Hyperparams& hyper) {
  std::vector<const TrainedUser*> ptrs;
  for (const auto& o : outcomes) {
    if (!o.model) throw Error("user " + o.user_id + " is not trained: " + o.error);
    ptrs.push_back(&*o.model);
  }
  return build_feature_matrix(std::move(ptrs), hyper);
}

/// Earliest ceil(fraction * n) users by candidate timestamp go to training;
/// timestamp ties are broken by user id.
inline std::pair<FeatureMatrix, FeatureMatrix> chronological_split(const FeatureMatrix& fm, double fraction) {
  if (!(fraction > 0.0 && fraction < 1.0)) throw Error("train fraction must lie in (0, 1)");
  const std::size_t n = fm.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::tie(fm.candidate_ts[a], fm.user_ids[a]) < std::tie(fm.candidate_ts[b], fm.user_ids[b]);
  });
  // the epsilon keeps exact products such as 0.3 * 10 from rounding up
  const auto n_train = static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n) - 1e-9));
  if (n_train == 0 || n_train >= n)
    throw Error("split of " + std::to_string(n) + " users at fraction " + std::to_string(fraction) +
                " leaves one side empty");
  std::vector<std::size_t> tr(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  std::vector<std::size_t> te(order.begin() + static_cast<std::ptrdiff_t>(n_train), order.end());
  return {fm.subset(tr), fm.subset(te)};
}

struct LinearDiscriminant {
  Vec weights;
  double bias = 0.0;
  double threshold = 0.0;

  double score(const Eigen::Ref<const Eigen::RowVectorXd>& u) const { return u.dot(weights) + bias; }
  int predict(const Eigen::Ref<const Eigen::RowVectorXd>& u) const { return score(u) > threshold ? 1 : 0; }
};

/// Two-class Fisher discriminant with scatter shrinkage
/// lambda = 1e-3 * trace(S_W) / I. The cutoff sits at the midpoint of the
/// projected class means.
inline LinearDiscriminant fit_discriminant(const FeatureMatrix& train) {
  train.check();
  const auto I = train.rows.cols();
  Vec sum_pos = Vec::Zero(I), sum_neg = Vec::Zero(I);
  std::size_t n_pos = 0, n_neg = 0;
  for (std::size_t k = 0; k < train.size(); ++k) {
    const Vec x = train.rows.row(static_cast<Eigen::Index>(k)).transpose();
    if (train.labels[k] == 1) {
      sum_pos += x;
      ++n_pos;
    } else {
      sum_neg += x;
      ++n_neg;
    }
  }
  if (n_pos == 0 || n_neg == 0) throw Error("discriminant training data has a single class");
  const Vec mean_pos = sum_pos / static_cast<double>(n_pos);
  const Vec mean_neg = sum_neg / static_cast<double>(n_neg);

  Eigen::MatrixXd Sw = Eigen::MatrixXd::Zero(I, I);
  for (std::size_t k = 0; k < train.size(); ++k) {
    const Vec d = train.rows.row(static_cast<Eigen::Index>(k)).transpose() - (train.labels[k] == 1 ? mean_pos : mean_neg);
    Sw.noalias() += d * d.transpose();
  }
  double lambda = 1e-3 * Sw.trace() / static_cast<double>(I);
  if (!(lambda > 0.0)) lambda = 1e-12;  // all rows identical within class
  Sw.diagonal().array() += lambda;

  LinearDiscriminant clf;
  clf.weights = Sw.ldlt().solve(mean_pos - mean_neg);
  if (!clf.weights.allFinite()) throw NumericError("discriminant solve produced nonfinite weights");
  clf.bias = -0.5 * clf.weights.dot(mean_pos + mean_neg);
  return clf;
}

struct Confusion {
  std::int64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::int64_t total() const { return tp + fp + tn + fn; }
};

struct EvalReport {
  std::string method = "full";
  std::optional<double> w_reg;
  double train_fraction = 0.0;
  std::size_t n_train = 0;
  std::size_t n_test = 0;
  double accuracy = 0.0;
  double auc = 0.0;  // NaN when the test set has one class
  double f1_positive = 0.0;
  Confusion confusion;  // pooled over trials for the Random baseline
  int trials = 1;
};

/// ROC-AUC as the normalized Mann-Whitney statistic, using average ranks so
/// that tied (positive, negative) pairs count one half. NaN for one class.
inline double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw Error("scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  double rank_sum_pos = 0.0;
  std::size_t n_pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[order[j]] == scores[order[i]]) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks i+1 .. j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]] == 1) {
        rank_sum_pos += avg_rank;
        ++n_pos;
      }
    }
    i = j;
  }
  const std::size_t n_neg = n - n_pos;
  if (n_pos == 0 || n_neg == 0) return std::numeric_limits<double>::quiet_NaN();
  const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * static_cast<double>(n_pos + 1);
  return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

inline Confusion confusion_of(const std::vector<int>& predicted, const std::vector<int>& labels) {
  Confusion c;
  for (std::size_t k = 0; k < labels.size(); ++k) {
    if (predicted[k] == 1)
      ++(labels[k] == 1 ? c.tp : c.fp);
    else
      ++(labels[k] == 1 ? c.fn : c.tn);
  }
  return c;
}

inline double accuracy_of(const Confusion& c) {
  return c.total() == 0 ? 0.0 : static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total());
}

/// Positive-class F1; 0 when precision + recall is 0.
inline double f1_of(const Confusion& c) {
  const double p = c.tp + c.fp == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  const double r = c.tp + c.fn == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn);
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

namespace detail {

inline EvalReport report_from(const std::vector<double>& scores, const std::vector<int>& predicted,
                              const std::vector<int>& labels) {
  EvalReport r;
  r.n_test = labels.size();
  r.confusion = confusion_of(predicted, labels);
  r.accuracy = accuracy_of(r.confusion);
  r.f1_positive = f1_of(r.confusion);
  r.auc = roc_auc(scores, labels);
  return r;
}

}  // namespace detail

inline EvalReport evaluate(const LinearDiscriminant& clf, const FeatureMatrix& test) {
  if (test.size() == 0) throw Error("test set is empty");
  test.check();
  std::vector<double> scores;
  std::vector<int> predicted;
  for (Eigen::Index k = 0; k < test.rows.rows(); ++k) {
    scores.push_back(clf.score(test.rows.row(k)));
    predicted.push_back(scores.back() > clf.threshold ? 1 : 0);
  }
  auto r = detail::report_from(scores, predicted, test.labels);
  if (std::isnan(r.auc)) log_warn("test set has a single class; AUC is undefined");
  return r;
}

/// Random reference: each test user is labeled 1 with the training positive
/// rate. Metrics are means over `trials`; the confusion counts are pooled.
inline EvalReport random_baseline(const FeatureMatrix& train, const FeatureMatrix& test, std::uint64_t seed,
                                  int trials = 100) {
  if (test.size() == 0) throw Error("test set is empty");
  if (trials <= 0) throw Error("trials must be positive");
  const double rate = static_cast<double>(train.positives()) / static_cast<double>(std::max<std::size_t>(1, train.size()));
  auto rng = make_rng(seed, "random-baseline");
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  EvalReport out;
  out.method = "Random";
  out.n_test = test.size();
  out.trials = trials;
  double acc = 0.0, auc = 0.0, f1 = 0.0;
  int auc_trials = 0;
  for (int t = 0; t < trials; ++t) {
    std::vector<int> pred;
    std::vector<double> scores;
    for (std::size_t k = 0; k < test.size(); ++k) {
      pred.push_back(unif(rng) < rate ? 1 : 0);
      scores.push_back(pred.back());
    }
    const auto r = detail::report_from(scores, pred, test.labels);
    acc += r.accuracy;
    f1 += r.f1_positive;
    if (!std::isnan(r.auc)) {
      auc += r.auc;
      ++auc_trials;
    }
    out.confusion.tp += r.confusion.tp;
    out.confusion.fp += r.confusion.fp;
    out.confusion.tn += r.confusion.tn;
    out.confusion.fn += r.confusion.fn;
  }
  out.accuracy = acc / trials;
  out.f1_positive = f1 / trials;
  out.auc = auc_trials ? auc / auc_trials : std::numeric_limits<double>::quiet_NaN();
  return out;
}

// ---------------------------------------------------------------------------
// Experiments

struct Protocol {
  std::vector<double> train_fractions{0.5};
  std::vector<double> w_reg_grid;  // empty: use hyper.w_reg
  bool ablation = true;
  bool random_baseline = true;
  int random_trials = 100;
};

inline const std::vector<double> kWregGrid{0.0, 0.1, 0.2, 0.5, 1.0, 2.0, 5.0, 10.0};
inline const std::vector<double> kTrainFractions{0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9};

struct ExperimentResult {
  std::vector<EvalReport> reports;
  std::vector<std::string> failed_users;  // per training run, "<method>:<user>"
};

namespace detail {

inline void evaluate_fractions(const FeatureMatrix& fm, const Protocol& protocol, const std::string& method,
                               std::optional<double> w_reg, std::vector<EvalReport>& out) {
  for (double frac : protocol.train_fractions) {
    auto [train, test] = chronological_split(fm, frac);
    EvalReport r = evaluate(fit_discriminant(train), test);
    r.method = method;
    r.w_reg = w_reg;
    r.train_fraction = frac;
    r.n_train = train.size();
    out.push_back(r);
  }
}

inline FeatureMatrix trained_features(const Corpus& corpus, const Hyperparams& hyper, unsigned jobs,
                                      const std::string& method, ExperimentResult& res) {
  const auto outcomes = train_users(corpus, hyper, jobs);
  std::vector<const TrainedUser*> ok;
  for (const auto& o : outcomes) {
    if (o.model)
      ok.push_back(&*o.model);
    else
      res.failed_users.push_back(method + ":" + o.user_id);
  }
  return build_feature_matrix(std::move(ok), hyper);
}

inline void random_fractions(const FeatureMatrix& fm, const Protocol& protocol, std::uint64_t seed,
                             std::vector<EvalReport>& out) {
  for (double frac : protocol.train_fractions) {
    auto [train, test] = chronological_split(fm, frac);
    EvalReport r = random_baseline(train, test, seed, protocol.random_trials);
    r.train_fraction = frac;
    r.n_train = train.size();
    out.push_back(r);
  }
}

}  // namespace detail

/// Trains every candidate user once per w_reg value (and once for the
/// ablation), then fits and evaluates a discriminant for each train
/// fraction. Users whose training fails are left out and listed.
inline ExperimentResult run_experiment(const Corpus& corpus, const Hyperparams& hyper, const Protocol& protocol,
                                       unsigned jobs = 1) {
  ExperimentResult res;
  if (protocol.train_fractions.empty()) throw Error("protocol needs at least one train fraction");
  std::vector<double> grid = protocol.w_reg_grid.empty() ? std::vector<double>{hyper.w_reg} : protocol.w_reg_grid;
  std::optional<FeatureMatrix> any;
  for (double w : grid) {
    Hyperparams h = hyper;
    h.w_reg = w;
    h.ablation_int = false;
    auto fm = detail::trained_features(corpus, h, jobs, "full", res);
    detail::evaluate_fractions(fm, protocol, "full", w, res.reports);
    if (!any) any = std::move(fm);
  }
  if (protocol.ablation) {
    Hyperparams h = hyper;
    h.ablation_int = true;
    auto fm = detail::trained_features(corpus, h, jobs, "-Int", res);
    detail::evaluate_fractions(fm, protocol, "-Int", std::nullopt, res.reports);
  }
  if (protocol.random_baseline && any) detail::random_fractions(*any, protocol, hyper.seed, res.reports);
  return res;
}

/// Evaluates already trained models: one report per train fraction, plus the
/// random baseline. The method follows the models' ablation flag.
inline ExperimentResult evaluate_trained(const std::vector<TrainedUser>& users, const Hyperparams& hyper,
                                         const Protocol& protocol) {
  if (protocol.train_fractions.empty()) throw Error("protocol needs at least one train fraction");
  ExperimentResult res;
  const auto fm = build_feature_matrix(users, hyper);
  detail::evaluate_fractions(fm, protocol, hyper.ablation_int ? "-Int" : "full",
                             hyper.ablation_int ? std::nullopt : std::optional(hyper.w_reg), res.reports);
  if (protocol.random_baseline) detail::random_fractions(fm, protocol, hyper.seed, res.reports);
  return res;
}

// ---------------------------------------------------------------------------
// Output

inline nlohmann::json to_json(const EvalReport& r) {
  auto num = [](double x) { return std::isfinite(x) ? nlohmann::json(x) : nlohmann::json(nullptr); };
  return {{"method", r.method},
          {"w_reg", r.w_reg ? nlohmann::json(*r.w_reg) : nlohmann::json(nullptr)},
          {"train_fraction", r.train_fraction},
          {"n_train", r.n_train},
          {"n_test", r.n_test},
          {"accuracy", num(r.accuracy)},
          {"auc", num(r.auc)},
          {"f1_positive", num(r.f1_positive)},
          {"confusion", {{"tp", r.confusion.tp}, {"fp", r.confusion.fp}, {"tn", r.confusion.tn}, {"fn", r.confusion.fn}}},
          {"trials", r.trials},
          {"split", "chronological by candidate post timestamp, ties by user id"}};
}

inline nlohmann::json to_json(const ExperimentResult& res) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : res.reports) reports.push_back(to_json(r));
  return {{"reports", reports}, {"failed_users", res.failed_users}};
}

/// Aligned text table: Method | w_reg | Train | Accuracy | AUC | F1.
inline std::string format_table(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  auto fmt = [](double x) {
    if (std::isnan(x)) return std::string("n/a");
    std::ostringstream s;
    s << std::fixed << std::setprecision(3) << x;
    return s.str();
  };
  os << std::left << std::setw(8) << "Method" << std::right << std::setw(7) << "w_reg" << std::setw(7) << "Train"
     << std::setw(10) << "Accuracy" << std::setw(8) << "AUC" << std::setw(8) << "F1" << "\n";
  for (const auto& r : reports) {
    os << std::left << std::setw(8) << r.method << std::right << std::setw(7)
       << (r.w_reg ? fmt(*r.w_reg).substr(0, 5) : std::string("-")) << std::setw(7) << fmt(r.train_fraction).substr(0, 4)
       << std::setw(10) << fmt(r.accuracy) << std::setw(8) << fmt(r.auc) << std::setw(8) << fmt(r.f1_positive)
       << "\n";
  }
  return os.str();
}

}  // namespace driftcast
