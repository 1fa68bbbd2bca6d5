#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include <gtest/gtest.h>

#include "driftcast/learner.hpp"
#include "fixtures.hpp"
#include "random_instances.hpp"

using namespace driftcast;
using fixtures::worst_violation;

TEST(NegLogLikelihood, ForcedValue) {
  EXPECT_NEAR(neg_log_likelihood(0.3, 0.3, 1.0, 1.0), 0.5 * std::log(2 * std::numbers::pi), 1e-15);
  EXPECT_NEAR(neg_log_likelihood(0.3, 0.3, 1.0, 1.0), 0.91894, 1e-5);
}

TEST(NegLogLikelihood, EvenInResidual) {
  for (double delta : {0.1, 0.7, 3.0})
    EXPECT_DOUBLE_EQ(neg_log_likelihood(1.0 + delta, 1.0, 0.4, 2.0), neg_log_likelihood(1.0 - delta, 1.0, 0.4, 2.0));
}

TEST(NegLogLikelihood, MatchesDensityFormula) {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(-2, 2), pos(0.05, 2.0);
  for (int i = 0; i < 100; ++i) {
    const double a = u(rng), m = u(rng), s = pos(rng), t = pos(rng);
    const double v = s * std::sqrt(t);
    const double density = 1.0 / (s * std::sqrt(2 * std::numbers::pi * t)) * std::exp(-(a - m) * (a - m) / (2 * v * v));
    EXPECT_NEAR(neg_log_likelihood(a, m, s, t), -std::log(density), 1e-10);
  }
}

TEST(HomogeneityPenalty, ClosedForms) {
  Mat X(2, 2);
  X << 1, 0, 0, 1;
  EXPECT_EQ(homogeneity_penalty(X, std::vector<std::pair<std::size_t, std::size_t>>{}), 0.0);
  EXPECT_DOUBLE_EQ(homogeneity_penalty(X, {{0, 1}}), 0.25);
  X << 4, 2, 4, 2;  // dot = 20
  const long double e = std::exp(-20.0L);
  const double expected = static_cast<double>((e / (1 + e)) * (e / (1 + e)));
  EXPECT_NEAR(homogeneity_penalty(X, {{0, 1}}) / expected, 1.0, 1e-9);
  EXPECT_NEAR(expected, 4.25e-18, 0.01e-18);

  InteractionNetwork net;
  net.users = {"a", "b"};
  net.edges = {{0, 1, 3}};
  EXPECT_DOUBLE_EQ(homogeneity_penalty(X, net), homogeneity_penalty(X, {{0, 1}}));
}

TEST(Objective, DecomposesIntoParts) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto inst = fixtures::random_instance(seed);
    const auto& p = inst.params;
    const auto& d = inst.data;
    // independent recomputation of both parts
    auto [L, X] = project_interactions(d.window, p.basis);
    Vec n = drift_factors(L, X, p.basis.T);
    Vec a = project_row(d.observed, p.basis.V).transpose();
    double nll = 0;
    for (Eigen::Index i = 0; i < p.dims(); ++i) {
      const double m = gbm_step(d.log_s_prev(i), p.drift.mu(i), p.drift.sigma(i), n(i), d.elapsed_days, 0.0);
      nll += neg_log_likelihood(a(i), m, p.drift.sigma(i), d.elapsed_days);
    }
    Mat Xn(3, p.dims());
    for (int u = 0; u < 3; ++u) Xn.row(u) = project_row(d.network.profiles[static_cast<std::size_t>(u)], p.basis.V);
    const double fr = homogeneity_penalty(Xn, d.network.edges);
    EXPECT_NEAR(objective(p, d, 0.7), nll + 0.7 * fr, 1e-12);
    EXPECT_NEAR(objective(p, d, 0.0), nll, 1e-12);
    auto empty = d;
    empty.network.edges.clear();
    EXPECT_NEAR(objective(p, empty, 5.0), nll, 1e-12);
  }
}

TEST(Gradients, ZeroResidual) {
  auto inst = fixtures::random_instance(21);
  auto& p = inst.params;
  auto& d = inst.data;
  // choose log_s_prev so that m = a exactly
  auto [L, X] = project_interactions(d.window, p.basis);
  Vec n = drift_factors(L, X, p.basis.T);
  Vec a = project_row(d.observed, p.basis.V).transpose();
  const double t = d.elapsed_days;
  d.log_s_prev = a.array() - (p.drift.mu.array() * n.array() - 0.5 * p.drift.sigma.array().square()) * t;
  auto g = gradients(p, d, 0.0);
  EXPECT_LT(g.d_mu.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(g.d_U.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(g.d_T.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT(g.d_V.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_NEAR(g.d_sigma(0), 1.0 / p.drift.sigma(0), 1e-9);
}

TEST(Gradients, MatchFiniteDifferences) {
  for (std::uint64_t seed = 100; seed < 150; ++seed) {
    auto inst = fixtures::random_instance(seed);
    const double w_reg = 0.5;
    auto g = gradients(inst.params, inst.data, w_reg);
    auto fd = fixtures::finite_difference_gradients(inst.params, inst.data, w_reg);
    EXPECT_LE(worst_violation(g.d_mu, fd.d_mu), 0.0) << "mu, seed " << seed;
    EXPECT_LE(worst_violation(g.d_sigma, fd.d_sigma), 0.0) << "sigma, seed " << seed;
    EXPECT_LE(worst_violation(g.d_U, fd.d_U), 0.0) << "U, seed " << seed;
    EXPECT_LE(worst_violation(g.d_V, fd.d_V), 0.0) << "V, seed " << seed;
    EXPECT_LE(worst_violation(g.d_T, fd.d_T), 0.0) << "T, seed " << seed;
  }
}

TEST(Gradients, AblationIgnoresWindow) {
  auto inst = fixtures::random_instance(8);
  inst.data.interactions = false;
  auto g = gradients(inst.params, inst.data, 0.0);
  EXPECT_TRUE(g.d_U.isZero());
  EXPECT_TRUE(g.d_T.isZero());
  auto fd = fixtures::finite_difference_gradients(inst.params, inst.data, 0.0);
  EXPECT_LE(worst_violation(g.d_mu, fd.d_mu), 0.0);
  EXPECT_LE(worst_violation(g.d_V, fd.d_V), 0.0);
}

TEST(Gradients, RegularizerOnlyMatchesFiniteDifferences) {
  auto inst = fixtures::random_instance(77, 3, 8, 4, 1);
  const auto& p = inst.params;
  const auto& d = inst.data;
  Mat dV = gradients(p, d, 1.0).d_V - gradients(p, d, 0.0).d_V;
  auto fr = [&](const Mat& V) {
    Mat Xn(3, p.dims());
    for (int u = 0; u < 3; ++u) Xn.row(u) = project_row(d.network.profiles[static_cast<std::size_t>(u)], V);
    return homogeneity_penalty(Xn, d.network.edges);
  };
  Mat fd = Mat::Zero(dV.rows(), dV.cols());
  const double h = 1e-5;
  for (Eigen::Index i = 0; i < dV.rows(); ++i)
    for (Eigen::Index j = 0; j < dV.cols(); ++j) {
      Mat V = p.basis.V;
      V(i, j) += h;
      const double fp = fr(V);
      V(i, j) -= 2 * h;
      fd(i, j) = (fp - fr(V)) / (2 * h);
    }
  EXPECT_LE(worst_violation(dV, fd), 0.0);
  EXPECT_GT(dV.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Gradients, RegularizerPullsConnectedPairTogether) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    auto inst = fixtures::random_instance(300 + seed, 3, 8, 4, 1);
    auto& p = inst.params;
    const auto& d = inst.data;
    const auto [i, j] = d.network.edges[0];
    auto sig_pair = [&](const Mat& V) {
      return sigmoid(project_row(d.network.profiles[i], V).dot(project_row(d.network.profiles[j], V)));
    };
    Mat dV = gradients(p, d, 1.0).d_V - gradients(p, d, 0.0).d_V;
    const double before = sig_pair(p.basis.V);
    EXPECT_GT(sig_pair(p.basis.V - 1e-3 * dV), before);
  }
}

namespace {

/// I = 1, one word, no window and no network.
fixtures::Instance one_dim_instance(double log_s_prev, double t) {
  fixtures::Instance inst;
  inst.params.basis.U = Mat::Zero(1, 1);
  inst.params.basis.V = Mat::Constant(1, 1, 0.8);
  inst.params.basis.T = Mat::Identity(1, 1);
  inst.params.drift.mu = Vec::Constant(1, 0.01);
  inst.params.drift.sigma = Vec::Constant(1, 0.1);
  inst.data.log_s_prev = Vec::Constant(1, log_s_prev);
  inst.data.observed = {1, {{0, 1}}};
  inst.data.elapsed_days = t;
  return inst;
}

}  // namespace

TEST(FitMessage, InfiniteToleranceTakesOneStep) {
  auto inst = fixtures::random_instance(3);
  Hyperparams h;
  h.tol = std::numeric_limits<double>::infinity();
  auto r = fit_message(inst.params, inst.data, h);
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.trace.size(), 2u);
}

TEST(FitMessage, ObjectiveNonIncreasing) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    auto inst = fixtures::random_instance(seed);
    Hyperparams h;
    h.eta = 1e-4;
    h.max_iters = 100;
    h.tol = 1e-300;
    h.w_reg = 0.3;
    auto r = fit_message(inst.params, inst.data, h);
    ASSERT_GE(r.trace.size(), 2u);
    for (std::size_t k = 1; k < r.trace.size(); ++k) EXPECT_LE(r.trace[k], r.trace[k - 1]);
    EXPECT_LT(r.trace.back(), r.trace.front());
    EXPECT_GE(r.params.drift.sigma.minCoeff(), h.sigma_min);
  }
}

TEST(FitMessage, ClosedFormStationaryPoint) {
  auto inst = one_dim_instance(0.2, 2.0);
  Hyperparams h;
  h.w_reg = 0.0;
  h.max_iters = 100000;
  h.tol = 1e-15;
  auto r = fit_message(inst.params, inst.data, h);
  const double a = r.params.basis.V(0, 0);
  const double s = r.params.drift.sigma(0), t = 2.0;
  const double mu_star = (a - 0.2 + s * s * t / 2) / t;
  EXPECT_NEAR(r.params.drift.mu(0), mu_star, 1e-3);
}

TEST(FitMessage, RejectsNonfiniteStart) {
  auto inst = fixtures::random_instance(1);
  inst.data.log_s_prev(0) = NAN;
  EXPECT_THROW(fit_message(inst.params, inst.data, Hyperparams{}), DivergenceError);
}

namespace {

const char* kTwoStatusPosts = R"({"user_id":"u","ts":0,"text":"alpha beta"}
{"user_id":"u","ts":86400,"text":"beta gamma"}
{"user_id":"g","ts":10,"text":"alpha gamma delta"}
{"user_id":"u","ts":172800,"text":"done","label":1})";
const char* kTwoStatusInteractions = R"({"src":"u","dst":"g","ts":5,"text":"hello"}
{"src":"g","dst":"u","ts":100,"text":"alpha news"}
{"src":"g","dst":"u","ts":90000,"text":"beta news"})";

}  // namespace

TEST(TrainUser, TwoStatusesOneFit) {
  auto c = fixtures::make_corpus(kTwoStatusPosts, kTwoStatusInteractions);
  Hyperparams h;
  h.dims = 4;
  auto u = train_user(c.timeline("u"), c, h);
  EXPECT_EQ(u.fit_calls, 1u);
  EXPECT_EQ(u.m.size(), 4);
  EXPECT_TRUE((u.v.array() > 0).all());
}

TEST(TrainUser, InsufficientHistory) {
  const char* posts = R"({"user_id":"u","ts":0,"text":"alpha beta"}
{"user_id":"u","ts":100,"text":"done","label":0})";
  auto c = fixtures::make_corpus(posts, "");
  try {
    train_user(c.timeline("u"), c, Hyperparams{});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("insufficient history"), std::string::npos);
  }
}

TEST(TrainUser, Deterministic) {
  auto c = fixtures::make_corpus(kTwoStatusPosts, kTwoStatusInteractions);
  Hyperparams h;
  h.dims = 5;
  auto a = train_user(c.timeline("u"), c, h);
  auto b = train_user(c.timeline("u"), c, h);
  EXPECT_EQ(a.m, b.m);
  EXPECT_EQ(a.v, b.v);
  auto par = train_users(c, h, 3);
  ASSERT_TRUE(par[0].model);
  EXPECT_EQ(par[0].model->m, a.m);
}

TEST(TrainUser, AblationChangesPrediction) {
  auto c = fixtures::make_corpus(kTwoStatusPosts, kTwoStatusInteractions);
  Hyperparams h;
  h.dims = 4;
  auto full = train_user(c.timeline("u"), c, h);
  h.ablation_int = true;
  auto abl = train_user(c.timeline("u"), c, h);
  EXPECT_NE(full.m, abl.m);
}

namespace {

/// Corpus with one user whose status word counts follow a GBM log path in
/// each of `dims` dimensions: word j appears round(x_j) times.
Corpus gbm_count_corpus(std::uint64_t seed, int dims, int statuses, Vec& mu_true) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> mag(2.0, 5.0);
  std::bernoulli_distribution sign(0.5);
  std::normal_distribution<double> normal;
  mu_true.resize(dims);
  for (int j = 0; j < dims; ++j) mu_true(j) = (sign(rng) ? 1 : -1) * mag(rng);
  const double sigma = 0.5;
  std::vector<double> x(static_cast<std::size_t>(dims), 1000.0);
  std::ostringstream posts;
  Timestamp ts = 0;
  std::exponential_distribution<double> gap(1.0);
  for (int s = 0; s < statuses; ++s) {
    const double t = 0.5 + gap(rng);
    if (s > 0) {
      ts += static_cast<Timestamp>(t * kSecondsPerDay);
      for (int j = 0; j < dims; ++j)
        x[static_cast<std::size_t>(j)] += (mu_true(j) - sigma * sigma / 2) * t + sigma * std::sqrt(t) * normal(rng);
    }
    std::string text;
    for (int j = 0; j < dims; ++j)
      for (long k = std::lround(x[static_cast<std::size_t>(j)]); k > 0; --k) text += "w" + std::to_string(j) + "x ";
    posts << R"({"user_id":"u","ts":)" << ts << R"(,"text":")" << text << "\"}\n";
  }
  posts << R"({"user_id":"u","ts":)" << ts + 86400 << R"(,"text":"end","label":1})" << "\n";
  return fixtures::make_corpus(posts.str(), "");
}

}  // namespace

TEST(TrainUser, RecoversDriftSignWithoutInteractions) {
  const int dims = 3;
  int agree = 0, total = 0;
  for (std::uint64_t trial = 0; trial < 20; ++trial) {
    Vec mu_true;
    auto c = gbm_count_corpus(trial, dims, 50, mu_true);
    ASSERT_EQ(c.interactor_vocab().size(), static_cast<std::size_t>(dims));
    Hyperparams h;
    h.dims = dims;
    h.w_reg = 0.0;
    h.max_iters = 200;
    ModelParams init = init_params(0, dims, dims, trial);
    init.basis.V = Mat::Identity(dims, dims);  // a = status word counts
    auto u = train_user(c.timeline("u"), c, h, init);
    for (int j = 0; j < dims; ++j, ++total)
      if ((u.params.drift.mu(j) > 0) == (mu_true(j) > 0)) ++agree;
  }
  EXPECT_GE(static_cast<double>(agree) / total, 0.8) << agree << "/" << total;
}

TEST(PredictNextLatent, DeterministicReturnsMean) {
  Vec m(3), v(3);
  m << 1, 2, 3;
  v << 0.1, 0.2, 0.3;
  EXPECT_EQ(predict_next_latent(m, v, true, nullptr), m);
}

TEST(PredictNextLatent, VanishingVariance) {
  Vec m(2);
  m << -0.5, 0.5;
  Vec v = Vec::Constant(2, 1e-3 * std::sqrt(kEpsilonDays));
  std::mt19937_64 rng(1);
  auto u = predict_next_latent(m, v, false, &rng);
  EXPECT_LT((u - m).cwiseAbs().maxCoeff(), 1e-2);
}

TEST(PredictNextLatent, SampleMeanWithinStandardErrors) {
  Vec m(3), v(3);
  m << 0.3, -1.0, 2.0;
  v << 0.5, 1.0, 0.1;
  std::mt19937_64 rng(99);
  const int N = 10000;
  Vec sum = Vec::Zero(3);
  for (int k = 0; k < N; ++k) sum += predict_next_latent(m, v, false, &rng);
  for (int i = 0; i < 3; ++i) EXPECT_LT(std::abs(sum(i) / N - m(i)), 4 * v(i) / std::sqrt(N));
}

TEST(ModelJson, RoundTrip) {
  auto c = fixtures::make_corpus(kTwoStatusPosts, kTwoStatusInteractions);
  Hyperparams h;
  h.dims = 3;
  auto u = train_user(c.timeline("u"), c, h);
  auto j = model_to_json(u, h);
  EXPECT_EQ(j.at("format_version"), 1);
  auto back = model_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(back.m, u.m);
  EXPECT_EQ(back.params.basis.V, u.params.basis.V);
  EXPECT_EQ(back.params.basis.U, u.params.basis.U);
  EXPECT_EQ(Hyperparams::from_json(j.at("hyper")).dims, 3);
}
