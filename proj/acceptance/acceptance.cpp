// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails. Tolerances are pinned below.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "driftcast/dynamics.hpp"
#include "driftcast/learner.hpp"
#include "driftcast/predictor.hpp"
#include "driftcast/sociolab.hpp"
#include "driftcast/synthgen.hpp"
#include "random_instances.hpp"

using namespace driftcast;

namespace {

// Pinned tolerances and budgets.
constexpr int kGradientInstances = 50;
constexpr double kGradientRel = 1e-4;
constexpr double kGradientAbs = 1e-8;
constexpr double kGradientBudgetSec = 30.0;
constexpr int kGbmDraws = 100000;
constexpr double kGbmMeanSe = 4.0;
constexpr double kGbmVarRel = 0.05;
constexpr double kKsAlpha = 0.01;
constexpr double kGbmBudgetSec = 10.0;
constexpr double kClosedFormTol = 1e-3;
constexpr int kAucFixtures = 500;
constexpr int kSeeds = 5;
constexpr int kUsers = 200;
constexpr double kMinAucGap = 0.05;
constexpr double kTableBudgetSec = 300.0;
constexpr double kNullLow = 0.4, kNullHigh = 0.6;
constexpr double kSupportP = 0.01, kAlternativeP = 0.05;
constexpr double kMaxGridSpread = 0.15;
constexpr double kTTestTol = 1e-9;

/// Training settings for the synthetic protocol runs. One seed drives both
/// the synthetic corpus and the model initialization.
Hyperparams protocol_hyper(int seed) {
  Hyperparams h;
  h.dims = 10;
  h.eta = 1e-4;
  h.max_iters = 5;
  h.seed = static_cast<std::uint64_t>(seed);
  return h;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

int failures = 0;

void report(int id, const std::string& name, bool pass, const std::string& detail) {
  if (!pass) ++failures;
  std::cout << "criterion " << id << " " << (pass ? "PASS" : "FAIL") << "  " << name << ": " << detail << std::endl;
}

// ---------------------------------------------------------------------------

void gradient_oracle() {
  const auto t0 = std::chrono::steady_clock::now();
  double worst = -1.0;
  const double w_reg = 0.5;
  for (int s = 0; s < kGradientInstances; ++s) {
    const auto inst = fixtures::random_instance(static_cast<std::uint64_t>(1000 + s), 3, 8, 4, 2);
    const auto g = gradients(inst.params, inst.data, w_reg);
    const auto fd = fixtures::finite_difference_gradients(inst.params, inst.data, w_reg, 1e-5);
    for (double v : {fixtures::worst_violation(g.d_mu, fd.d_mu, kGradientRel, kGradientAbs),
                     fixtures::worst_violation(g.d_sigma, fd.d_sigma, kGradientRel, kGradientAbs),
                     fixtures::worst_violation(g.d_U, fd.d_U, kGradientRel, kGradientAbs),
                     fixtures::worst_violation(g.d_V, fd.d_V, kGradientRel, kGradientAbs),
                     fixtures::worst_violation(g.d_T, fd.d_T, kGradientRel, kGradientAbs)})
      worst = std::max(worst, v);
  }
  const double secs = seconds_since(t0);
  report(1, "gradient oracle", worst <= 0.0 && secs < kGradientBudgetSec,
         fmt("%d instances, worst excess error %.2e, %.2fs", kGradientInstances, std::max(worst, 0.0), secs));
}

/// Asymptotic Kolmogorov tail P(K > lambda).
double kolmogorov_tail(double lambda) {
  if (lambda < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) sum += (k % 2 ? 2.0 : -2.0) * std::exp(-2.0 * k * k * lambda * lambda);
  return std::clamp(sum, 0.0, 1.0);
}

void gbm_law() {
  const auto t0 = std::chrono::steady_clock::now();
  const double prev = 0.3, mu = 0.2, sigma = 0.5, n = 1.8, t = 3.0;
  const double m = prev + (mu * n - 0.5 * sigma * sigma) * t, v = sigma * std::sqrt(t);
  std::mt19937_64 rng(7);
  std::normal_distribution<double> normal;
  std::vector<double> xs(kGbmDraws);
  for (auto& x : xs) x = gbm_step(prev, mu, sigma, n, t, normal(rng));
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= kGbmDraws;
  double var = 0.0;
  for (double x : xs) var += (x - mean) * (x - mean);
  var /= kGbmDraws - 1;
  std::sort(xs.begin(), xs.end());
  double D = 0.0;
  const double N = kGbmDraws;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double F = 0.5 * std::erfc(-(xs[i] - m) / (v * std::sqrt(2.0)));
    D = std::max({D, (i + 1.0) / N - F, F - static_cast<double>(i) / N});
  }
  const double p = kolmogorov_tail((std::sqrt(N) + 0.12 + 0.11 / std::sqrt(N)) * D);
  const double z = std::abs(mean - m) / (v / std::sqrt(N));
  const double var_rel = std::abs(var - v * v) / (v * v);
  const double secs = seconds_since(t0);
  report(2, "GBM law", z < kGbmMeanSe && var_rel < kGbmVarRel && p > kKsAlpha && secs < kGbmBudgetSec,
         fmt("mean off by %.2f SE, variance off by %.2f%%, KS p=%.3f, %.2fs", z, 100 * var_rel, p, secs));
}

void closed_form_recovery() {
  double worst = 0.0;
  for (auto [prev, t, v0] : std::vector<std::tuple<double, double, double>>{{0.2, 2.0, 0.8}, {-0.5, 0.5, 0.3},
                                                                            {1.0, 5.0, 1.2}}) {
    ModelParams p;
    p.basis.U = Mat::Zero(1, 1);
    p.basis.V = Mat::Constant(1, 1, v0);
    p.basis.T = Mat::Identity(1, 1);
    p.drift.mu = Vec::Constant(1, 0.01);
    p.drift.sigma = Vec::Constant(1, 0.1);
    TransitionData d;
    d.log_s_prev = Vec::Constant(1, prev);
    d.observed = WordVector{1, {{0, 1}}};
    d.elapsed_days = t;
    Hyperparams h;
    h.w_reg = 0.0;
    h.max_iters = 100000;
    h.tol = 1e-15;
    const auto r = fit_message(p, d, h);
    const double a = r.params.basis.V(0, 0), s = r.params.drift.sigma(0);
    const double mu_star = (a - prev + s * s * t / 2.0) / t;
    worst = std::max(worst, std::abs(r.params.drift.mu(0) - mu_star));
  }
  report(3, "closed-form recovery", worst <= kClosedFormTol, fmt("max |mu - mu*| = %.2e over 3 problems", worst));
}

double pair_count_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0.0;
  std::int64_t pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i)
    for (std::size_t j = 0; j < s.size(); ++j)
      if (y[i] == 1 && y[j] == 0) {
        ++pairs;
        wins += s[i] > s[j] ? 1.0 : s[i] == s[j] ? 0.5 : 0.0;
      }
  return wins / static_cast<double>(pairs);
}

void metric_oracles() {
  std::mt19937_64 rng(11);
  int mismatches = 0;
  for (int k = 0; k < kAucFixtures; ++k) {
    const int n = std::uniform_int_distribution<int>(2, 200)(rng);
    std::uniform_int_distribution<int> level(0, k % 2 ? 5 : 1000);  // odd fixtures are tie heavy
    std::vector<double> s(static_cast<std::size_t>(n));
    std::vector<int> y(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
      s[static_cast<std::size_t>(i)] = level(rng) / 7.0;
      y[static_cast<std::size_t>(i)] = std::bernoulli_distribution(0.4)(rng);
    }
    y[0] = 1;
    y[1] = 0;
    mismatches += roc_auc(s, y) != pair_count_auc(s, y);
  }
  const double fixed = roc_auc({0.9, 0.8, 0.3, 0.1}, {1, 0, 1, 0});
  const double constant = roc_auc({0.4, 0.4, 0.4, 0.4, 0.4}, {1, 0, 0, 1, 0});
  report(4, "metric oracles", mismatches == 0 && fixed == 0.75 && constant == 0.5,
         fmt("%d/%d pair-count mismatches, fixture AUC %.4f, constant AUC %.4f", mismatches, kAucFixtures, fixed,
             constant));
}

// ---------------------------------------------------------------------------
// Synthetic protocol runs (criteria 5 to 9)

struct Metrics {
  double accuracy = 0, auc = 0, f1 = 0;
};

const EvalReport& find(const ExperimentResult& r, const std::string& method) {
  for (const auto& rep : r.reports)
    if (rep.method == method) return rep;
  throw Error("missing report for " + method);
}

Corpus synthetic(int seed, double signal) {
  SynthConfig cfg;
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.n_users = kUsers;
  cfg.signal_strength = signal;
  return synth_corpus(generate(cfg));
}

/// All protocol runs for criteria 5, 6 and 8 at one parallelism level.
struct ProtocolRuns {
  std::vector<ExperimentResult> table, null_control;
  ExperimentResult grid, fractions;
  double table_seconds = 0;

  std::string json() const {
    nlohmann::json j;
    for (const auto& r : table) j["table"].push_back(to_json(r));
    for (const auto& r : null_control) j["null"].push_back(to_json(r));
    j["grid"] = to_json(grid);
    j["fractions"] = to_json(fractions);
    return j.dump(2);
  }
};

ProtocolRuns run_protocols(unsigned jobs) {
  ProtocolRuns out;
  const auto t0 = std::chrono::steady_clock::now();
  for (int s = 0; s < kSeeds; ++s)
    out.table.push_back(run_experiment(synthetic(s, 1.0), protocol_hyper(s), Protocol{}, jobs));
  out.table_seconds = seconds_since(t0);

  Protocol only_full;
  only_full.ablation = false;
  only_full.random_baseline = false;
  for (int s = 0; s < kSeeds; ++s)
    out.null_control.push_back(run_experiment(synthetic(s, 0.0), protocol_hyper(s), only_full, jobs));

  const Corpus corpus = synthetic(0, 1.0);
  Protocol grid = only_full;
  grid.w_reg_grid = kWregGrid;
  out.grid = run_experiment(corpus, protocol_hyper(0), grid, jobs);
  Protocol sweep;
  sweep.train_fractions = kTrainFractions;
  out.fractions = run_experiment(corpus, protocol_hyper(0), sweep, jobs);
  return out;
}

void table_ordering(const ProtocolRuns& runs) {
  Metrics full, ablated, random;
  auto add = [](Metrics& m, const EvalReport& r) {
    m.accuracy += r.accuracy / kSeeds;
    m.auc += r.auc / kSeeds;
    m.f1 += r.f1_positive / kSeeds;
  };
  for (const auto& r : runs.table) {
    add(full, find(r, "full"));
    add(ablated, find(r, "-Int"));
    add(random, find(r, "Random"));
  }
  auto geq = [](const Metrics& a, const Metrics& b) {
    return a.accuracy >= b.accuracy && a.auc >= b.auc && a.f1 >= b.f1;
  };
  const double gap = full.auc - ablated.auc;
  const bool pass =
      geq(full, ablated) && geq(ablated, random) && gap >= kMinAucGap && runs.table_seconds < kTableBudgetSec;
  report(5, "full >= -Int >= Random", pass,
         fmt("%d-seed means acc/AUC/F1 full %.3f/%.3f/%.3f, -Int %.3f/%.3f/%.3f, Random %.3f/%.3f/%.3f, "
             "AUC gap %.3f (seeds 0-4 for data and init), %.1fs",
             kSeeds, full.accuracy, full.auc, full.f1, ablated.accuracy, ablated.auc, ablated.f1, random.accuracy,
             random.auc, random.f1, gap, runs.table_seconds));
}

void null_control(const ProtocolRuns& runs) {
  double mean = 0.0, lo = 1.0, hi = 0.0;
  for (const auto& r : runs.null_control) {
    const double a = find(r, "full").auc;
    mean += a / kSeeds;
    lo = std::min(lo, a);
    hi = std::max(hi, a);
  }
  report(6, "null control", mean >= kNullLow && mean <= kNullHigh,
         fmt("%d-seed mean AUC %.3f (per seed %.3f to %.3f)", kSeeds, mean, lo, hi));
}

void postulates() {
  const Corpus corpus = synthetic(0, 1.0);
  bool pass = true;
  std::string detail;
  for (auto mode : {TTestMode::welch, TTestMode::paired}) {
    const auto rep = verify_postulates(corpus, 0, mode);
    pass = pass && rep.support.direction == "positives_higher" && rep.support.test.p < kSupportP &&
           rep.alternative.direction == "negatives_higher" && rep.alternative.test.p < kAlternativeP;
    detail += fmt("%s%s support p=%.2e (%s), alternative p=%.2e (%s)", detail.empty() ? "" : "; ",
                  std::string(mode_name(mode)).c_str(), rep.support.test.p, rep.support.direction.c_str(),
                  rep.alternative.test.p, rep.alternative.direction.c_str());
  }
  report(7, "postulate directions", pass, detail);
}

void robustness(const ProtocolRuns& runs) {
  auto spread = [&](auto get) {
    double lo = 1e300, hi = -1e300;
    for (const auto& r : runs.grid.reports) {
      lo = std::min(lo, get(r));
      hi = std::max(hi, get(r));
    }
    return hi - lo;
  };
  const double sa = spread([](const EvalReport& r) { return r.accuracy; });
  const double sauc = spread([](const EvalReport& r) { return r.auc; });
  const double sf = spread([](const EvalReport& r) { return r.f1_positive; });
  std::size_t per_method[3] = {0, 0, 0};
  bool finite = true;
  for (const auto& r : runs.fractions.reports) {
    per_method[r.method == "full" ? 0 : r.method == "-Int" ? 1 : 2]++;
    finite = finite && std::isfinite(r.accuracy) && std::isfinite(r.auc) && std::isfinite(r.f1_positive);
  }
  const bool shaped = runs.grid.reports.size() == kWregGrid.size() && per_method[0] == kTrainFractions.size() &&
                      per_method[1] == kTrainFractions.size() && per_method[2] == kTrainFractions.size();
  const bool pass =
      shaped && finite && sa < kMaxGridSpread && sauc < kMaxGridSpread && sf < kMaxGridSpread;
  report(8, "robustness sweeps", pass,
         fmt("%zu grid reports, %zu fraction reports, grid spread acc %.3f AUC %.3f F1 %.3f", runs.grid.reports.size(),
             runs.fractions.reports.size(), sa, sauc, sf));
}

void determinism(const ProtocolRuns& parallel, unsigned jobs) {
  const auto serial = run_protocols(1);
  const bool same = serial.json() == parallel.json();
  report(9, "determinism", same,
         fmt("report JSON %s between --jobs 1 and --jobs %u (%zu bytes)", same ? "identical" : "differs", jobs,
             parallel.json().size()));
}

void t_test_oracle() {
  const std::vector<double> x{3.1, 2.4, 4.0, 3.3}, y{2.0, 2.2, 2.9, 1.8};
  double dbar = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) dbar += (x[i] - y[i]) / 4.0;
  double ss = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) ss += std::pow(x[i] - y[i] - dbar, 2);
  const double t_star = dbar / (std::sqrt(ss / 3.0) / 2.0);
  const boost::math::students_t dist(3.0);
  const double p_star = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(t_star)));
  const auto r = two_sample_t_test(x, y, TTestMode::paired);
  const auto same = two_sample_t_test(x, x, TTestMode::paired);
  const double t_err = std::abs(r.t - t_star), p_err = std::abs(r.p - p_star);
  report(10, "t-test oracle", t_err <= kTTestTol && p_err <= kTTestTol && same.t == 0.0 && same.p == 1.0,
         fmt("|t - t*| = %.1e, |p - p*| = %.1e, x = y gives t=%g p=%g", t_err, p_err, same.t, same.p));
}

}  // namespace

int main() {
  log_threshold() = LogLevel::error;
  const unsigned jobs = std::max(3u, std::thread::hardware_concurrency());
  auto guarded = [](int id, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::exception& e) {
      report(id, "error", false, e.what());
    }
  };
  guarded(1, gradient_oracle);
  guarded(2, gbm_law);
  guarded(3, closed_form_recovery);
  guarded(4, metric_oracles);
  ProtocolRuns runs;
  bool have_runs = false;
  guarded(5, [&] {
    runs = run_protocols(jobs);
    have_runs = true;
    table_ordering(runs);
  });
  if (have_runs) {
    guarded(6, [&] { null_control(runs); });
  } else {
    report(6, "null control", false, "protocol runs failed");
  }
  guarded(7, postulates);
  if (have_runs) {
    guarded(8, [&] { robustness(runs); });
    guarded(9, [&] { determinism(runs, jobs); });
  } else {
    report(8, "robustness sweeps", false, "protocol runs failed");
    report(9, "determinism", false, "protocol runs failed");
  }
  guarded(10, t_test_oracle);
  std::cout << (failures == 0 ? "all criteria passed" : std::to_string(failures) + " criteria failed") << std::endl;
  return failures == 0 ? 0 : 1;
}
