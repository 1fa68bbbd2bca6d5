#pragma once

// Postulate checks: protest lexicon, tie scores and two-sample t-tests.

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftcast/common.hpp"
#include "driftcast/corpus.hpp"

namespace driftcast {

// ---------------------------------------------------------------------------
// Lexicon and tie scores

struct ProtestLexicon {
  std::set<std::string> words;
};

/// Labels per candidate user; defaults to the corpus labels.
using LabelMap = std::map<std::string, int>;

inline LabelMap corpus_labels(const Corpus& corpus) {
  LabelMap out;
  for (const auto& tl : corpus.timelines())
    if (tl.label) out[tl.user_id] = *tl.label;
  return out;
}

/// Tokens of all positively labeled candidate posts that occur in at least
/// one of the three vocabularies.
inline ProtestLexicon build_lexicon(const Corpus& corpus, const LabelMap& labels) {
  ProtestLexicon lex;
  std::size_t positives = 0;
  for (const auto& tl : corpus.timelines()) {
    auto it = labels.find(tl.user_id);
    if (it == labels.end() || it->second != 1) continue;
    ++positives;
    for (const auto& t : tl.candidate_tokens)
      if (corpus.status_vocab().find(t) || corpus.interaction_vocab().find(t) || corpus.interactor_vocab().find(t))
        lex.words.insert(t);
  }
  if (positives == 0) throw Error("no positive candidate posts to build a lexicon from");
  return lex;
}

inline ProtestLexicon build_lexicon(const Corpus& corpus) { return build_lexicon(corpus, corpus_labels(corpus)); }

struct TieScorePair {
  std::string user_id;
  double support_score = 0.0;
  double alternative_score = 0.0;
};

/// Column pairs (interaction column, interactor column) for tokens present in
/// both vocabularies, split by lexicon membership.
struct LexiconColumns {
  std::vector<std::pair<std::size_t, std::size_t>> lexicon;
  std::vector<std::pair<std::size_t, std::size_t>> complement;
};

inline LexiconColumns lexicon_columns(const Corpus& corpus, const ProtestLexicon& lex) {
  LexiconColumns cols;
  const auto& vp = corpus.interaction_vocab();
  const auto& vw = corpus.interactor_vocab();
  for (std::size_t c = 0; c < vp.size(); ++c) {
    const auto& tok = vp.token(c);
    auto w = vw.find(tok);
    if (!w) continue;
    (lex.words.count(tok) ? cols.lexicon : cols.complement).emplace_back(c, *w);
  }
  return cols;
}

/// Sums of products of mention-text counts and author-content counts over the
/// user's mentions, on lexicon columns (support) and the rest (alternative).
inline TieScorePair tie_scores(const UserTimeline& tl, const Corpus& corpus, const LexiconColumns& cols) {
  TieScorePair out;
  out.user_id = tl.user_id;
  auto dot = [](const WordVector& a, const WordVector& b, const std::vector<std::pair<std::size_t, std::size_t>>& pairs) {
    double s = 0.0;
    for (auto [ca, cb] : pairs) {
      auto ia = std::lower_bound(a.entries.begin(), a.entries.end(), ca, [](const CountEntry& e, std::size_t c) { return e.col < c; });
      if (ia == a.entries.end() || ia->col != ca) continue;
      auto ib = std::lower_bound(b.entries.begin(), b.entries.end(), cb, [](const CountEntry& e, std::size_t c) { return e.col < c; });
      if (ib == b.entries.end() || ib->col != cb) continue;
      s += static_cast<double>(ia->count) * static_cast<double>(ib->count);
    }
    return s;
  };
  for (const auto& m : tl.mentions) {
    if (m.ts > tl.candidate_ts) continue;
    const auto p = corpus.interactions().row_vector(m.row);
    const auto w = corpus.interactor_content().row_vector(m.row);
    out.support_score += dot(p, w, cols.lexicon);
    out.alternative_score += dot(p, w, cols.complement);
  }
  return out;
}

inline TieScorePair tie_scores(const UserTimeline& tl, const Corpus& corpus, const ProtestLexicon& lex) {
  return tie_scores(tl, corpus, lexicon_columns(corpus, lex));
}

// ---------------------------------------------------------------------------
// t-tests

namespace detail {

/// Continued fraction for the regularized incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr int kMaxIter = 10000;
  constexpr double kEps = 1e-16;
  constexpr double kTiny = 1e-300;
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= kMaxIter; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0)) throw Error("incomplete_beta: a and b must be positive");
  if (!(x >= 0.0 && x <= 1.0)) throw Error("incomplete_beta: x outside [0, 1]");
  if (x == 0.0 || x == 1.0) return x;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// Two-sided p-value of Student's t with df degrees of freedom.
inline double student_t_two_sided(double t, double df) {
  if (!(df > 0.0)) throw Error("degrees of freedom must be positive");
  if (std::isnan(t)) throw NumericError("t statistic is NaN");
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(0.5 * df, 0.5, df / (df + t * t));
}

enum class TTestMode { paired, welch };

inline std::string_view mode_name(TTestMode m) { return m == TTestMode::paired ? "paired" : "welch"; }

inline TTestMode parse_mode(std::string_view s) {
  if (s == "paired") return TTestMode::paired;
  if (s == "welch") return TTestMode::welch;
  throw Error("unknown t-test mode '" + std::string(s) + "' (expected paired or welch)");
}

struct TTestResult {
  double t = 0.0;
  double p = 1.0;
  double df = 0.0;
};

namespace detail {

inline double mean_of(const std::vector<double>& x) {
  double s = 0.0;
  for (double v : x) s += v;
  return s / static_cast<double>(x.size());
}

inline double sample_var(const std::vector<double>& x, double mean) {
  double s = 0.0;
  for (double v : x) s += (v - mean) * (v - mean);
  return s / static_cast<double>(x.size() - 1);
}

/// t = 0, p = 1 for a zero mean difference; otherwise t = +-inf, p = 0.
inline TTestResult degenerate(double diff, double df) {
  if (diff == 0.0) return {0.0, 1.0, df};
  return {diff > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity(), 0.0, df};
}

}  // namespace detail

/// Two-sided two-sample t-test. Paired mode tests the mean of x - y; Welch
/// mode uses the Welch-Satterthwaite degrees of freedom. When the standard
/// error is zero the result is t = 0, p = 1 for equal means and t = +-inf,
/// p = 0 otherwise.
inline TTestResult two_sample_t_test(const std::vector<double>& x, const std::vector<double>& y, TTestMode mode) {
  if (mode == TTestMode::paired) {
    if (x.size() != y.size()) throw Error("paired t-test needs samples of equal size");
    if (x.size() < 2) throw Error("paired t-test needs at least two pairs");
    std::vector<double> d(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
    const double n = static_cast<double>(d.size());
    const double mean = detail::mean_of(d);
    const double var = detail::sample_var(d, mean);
    const double df = n - 1.0;
    if (var == 0.0) return detail::degenerate(mean, df);
    const double t = mean / std::sqrt(var / n);
    return {t, student_t_two_sided(t, df), df};
  }
  if (x.size() < 2 || y.size() < 2) throw Error("Welch t-test needs at least two values per sample");
  const double nx = static_cast<double>(x.size()), ny = static_cast<double>(y.size());
  const double mx = detail::mean_of(x), my = detail::mean_of(y);
  const double vx = detail::sample_var(x, mx) / nx, vy = detail::sample_var(y, my) / ny;
  const double se2 = vx + vy;
  if (se2 == 0.0) return detail::degenerate(mx - my, nx + ny - 2.0);
  const double df = se2 * se2 / (vx * vx / (nx - 1.0) + vy * vy / (ny - 1.0));
  const double t = (mx - my) / std::sqrt(se2);
  return {t, student_t_two_sided(t, df), df};
}

// ---------------------------------------------------------------------------
// Postulate report

struct PostulateTest {
  TTestResult test;
  std::string direction;  // "positives_higher", "negatives_higher" or "equal"
};

struct PostulateReport {
  TTestMode mode = TTestMode::welch;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  std::uint64_t seed = 0;
  PostulateTest support;
  PostulateTest alternative;
  std::size_t lexicon_size = 0;
  std::vector<TieScorePair> positives, negatives;
};

namespace detail {

inline PostulateTest compare(const std::vector<double>& pos, const std::vector<double>& neg, TTestMode mode) {
  PostulateTest out;
  out.test = two_sample_t_test(pos, neg, mode);
  out.direction = out.test.t > 0.0 ? "positives_higher" : out.test.t < 0.0 ? "negatives_higher" : "equal";
  return out;
}

}  // namespace detail

/// Compares tie scores of positive users with an equally sized, seeded
/// uniform sample of negative users. In paired mode the larger group is
/// subsampled so both have the same size; pairs follow user id order.
inline PostulateReport verify_postulates(const Corpus& corpus, const LabelMap& labels, std::uint64_t seed,
                                         TTestMode mode = TTestMode::welch) {
  std::vector<const UserTimeline*> pos, neg;
  for (const auto& tl : corpus.timelines()) {
    auto it = labels.find(tl.user_id);
    if (it == labels.end()) continue;
    (it->second == 1 ? pos : neg).push_back(&tl);
  }
  if (pos.empty() || neg.empty()) throw Error("postulate checks need both positive and negative users");

  auto rng = make_rng(seed, "negative-sample");
  auto sample = [&](std::vector<const UserTimeline*>& v, std::size_t k) {
    std::shuffle(v.begin(), v.end(), rng);
    v.resize(k);
    std::sort(v.begin(), v.end(), [](auto* a, auto* b) { return a->user_id < b->user_id; });
  };
  sample(neg, std::min(pos.size(), neg.size()));
  if (mode == TTestMode::paired && pos.size() > neg.size()) sample(pos, neg.size());

  const auto lex = build_lexicon(corpus, labels);
  const auto cols = lexicon_columns(corpus, lex);
  PostulateReport rep;
  rep.mode = mode;
  rep.seed = seed;
  rep.lexicon_size = lex.words.size();
  std::vector<double> sp, sn, ap, an;
  for (auto* tl : pos) {
    rep.positives.push_back(tie_scores(*tl, corpus, cols));
    sp.push_back(rep.positives.back().support_score);
    ap.push_back(rep.positives.back().alternative_score);
  }
  for (auto* tl : neg) {
    rep.negatives.push_back(tie_scores(*tl, corpus, cols));
    sn.push_back(rep.negatives.back().support_score);
    an.push_back(rep.negatives.back().alternative_score);
  }
  rep.n_pos = pos.size();
  rep.n_neg = neg.size();
  rep.support = detail::compare(sp, sn, mode);
  rep.alternative = detail::compare(ap, an, mode);
  return rep;
}

inline PostulateReport verify_postulates(const Corpus& corpus, std::uint64_t seed, TTestMode mode = TTestMode::welch) {
  return verify_postulates(corpus, corpus_labels(corpus), seed, mode);
}

inline nlohmann::json to_json(const PostulateReport& r) {
  auto num = [](double x) {
    if (std::isfinite(x)) return nlohmann::json(x);
    if (std::isnan(x)) return nlohmann::json(nullptr);
    return nlohmann::json(x > 0 ? "inf" : "-inf");
  };
  auto part = [&](const PostulateTest& p) {
    return nlohmann::json{{"t", num(p.test.t)}, {"p", num(p.test.p)}, {"df", num(p.test.df)}, {"direction", p.direction}};
  };
  return {{"mode", mode_name(r.mode)},
          {"n_pos", r.n_pos},
          {"n_neg", r.n_neg},
          {"support", part(r.support)},
          {"alternative", part(r.alternative)},
          {"lexicon_size", r.lexicon_size},
          {"seed", r.seed}};
}

/// Human-readable summary with the conventional significance thresholds.
inline std::string format_postulates(const PostulateReport& r) {
  auto line = [](const char* name, const PostulateTest& p, const char* expected, double alpha) {
    char buf[256];
    const bool ok = p.direction == expected && p.test.p < alpha;
    std::snprintf(buf, sizeof buf, "%-12s t = %9.4f  p = %.3g  %-17s %s at p < %.2f\n", name, p.test.t, p.test.p,
                  p.direction.c_str(), ok ? "supported" : "not supported", alpha);
    return std::string(buf);
  };
  std::string s = "mode " + std::string(mode_name(r.mode)) + ", " + std::to_string(r.n_pos) + " positive vs " +
                  std::to_string(r.n_neg) + " negative users\n";
  s += line("support", r.support, "positives_higher", 0.01);
  s += line("alternative", r.alternative, "negatives_higher", 0.05);
  return s;
}

}  // namespace driftcast
