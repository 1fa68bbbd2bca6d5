#pragma once

// Per-user parameter learning. For each status transition the objective is
//
//   f_t = sum_i [ ln sigma_i + 1/2 ln(2 pi t) + (a_i - m_i)^2 / (2 sigma_i^2 t) ]
//         + w_reg * sum_{N_ij >= 1} (sig(X_i' . X_j') - 1)^2
//
// where a = g V is the latent coordinate of the observed status. Gradients
// are derived from f_t directly (see docs/GRADIENT_NOTES.md) and checked
// against central finite differences in the test suite.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <random>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include <json.hpp>

#include "driftcast/common.hpp"
#include "driftcast/corpus.hpp"
#include "driftcast/dynamics.hpp"

namespace driftcast {

class DivergenceError : public NumericError {
 public:
  using NumericError::NumericError;
};

struct Hyperparams {
  int dims = 50;
  double w_reg = 0.1;
  double eta = 0.01;
  int max_iters = 500;
  double tol = 1e-6;
  double sigma_min = 1e-3;
  std::uint64_t seed = 0;
  bool deterministic_predict = true;
  /// Drop interactions entirely: n_i = 1 and no network regularizer.
  bool ablation_int = false;

  void validate() const {
    if (dims <= 0) throw Error("dims must be positive");
    if (!(w_reg >= 0.0)) throw Error("w_reg must be >= 0");
    if (!(eta > 0.0)) throw Error("eta must be > 0");
    if (max_iters <= 0) throw Error("max_iters must be positive");
    if (!(tol > 0.0)) throw Error("tol must be > 0");
    if (!(sigma_min > 0.0)) throw Error("sigma_min must be > 0");
  }

  nlohmann::json to_json() const {
    return {{"I", dims},
            {"w_reg", w_reg},
            {"eta", eta},
            {"max_iters", max_iters},
            {"tol", std::isfinite(tol) ? nlohmann::json(tol) : nlohmann::json("inf")},
            {"sigma_min", sigma_min},
            {"seed", seed},
            {"deterministic_predict", deterministic_predict},
            {"ablation_int", ablation_int}};
  }

  static Hyperparams from_json(const nlohmann::json& j) {
    Hyperparams h;
    h.dims = j.value("I", h.dims);
    h.w_reg = j.value("w_reg", h.w_reg);
    h.eta = j.value("eta", h.eta);
    h.max_iters = j.value("max_iters", h.max_iters);
    if (j.contains("tol")) {
      const auto& t = j.at("tol");
      h.tol = t.is_string() ? std::numeric_limits<double>::infinity() : t.get<double>();
    }
    h.sigma_min = j.value("sigma_min", h.sigma_min);
    h.seed = j.value("seed", h.seed);
    h.deterministic_predict = j.value("deterministic_predict", h.deterministic_predict);
    h.ablation_int = j.value("ablation_int", h.ablation_int);
    h.validate();
    return h;
  }
};

struct ModelParams {
  DriftParams drift;
  LatentBasis basis;

  Eigen::Index dims() const { return basis.dims(); }
};

/// Seeded uniform(-0.1, 0.1) bases; mu = 0.01 and sigma = 0.1 everywhere.
inline ModelParams init_params(std::size_t r, std::size_t q, int dims, std::uint64_t seed) {
  auto rng = make_rng(seed, "init");
  std::uniform_real_distribution<double> unif(-0.1, 0.1);
  auto fill = [&](Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
      for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = unif(rng);
    return m;
  };
  ModelParams p;
  p.basis.U = fill(static_cast<Eigen::Index>(r), dims);
  p.basis.V = fill(static_cast<Eigen::Index>(q), dims);
  p.basis.T = fill(dims, dims);
  p.drift.mu = Vec::Constant(dims, 0.01);
  p.drift.sigma = Vec::Constant(dims, 0.1);
  return p;
}

struct GradientSet {
  Vec d_mu, d_sigma;
  Mat d_U, d_V, d_T;

  static GradientSet zeros_like(const ModelParams& p) {
    return {Vec::Zero(p.drift.mu.size()), Vec::Zero(p.drift.sigma.size()),
            Mat::Zero(p.basis.U.rows(), p.basis.U.cols()), Mat::Zero(p.basis.V.rows(), p.basis.V.cols()),
            Mat::Zero(p.basis.T.rows(), p.basis.T.cols())};
  }
};

/// Latent-space content of each network user plus the ordered pairs with at
/// least one mention.
struct NetworkTerm {
  std::vector<WordVector> profiles;
  std::vector<std::pair<std::size_t, std::size_t>> edges;
};

/// Everything the objective needs for one status transition.
struct TransitionData {
  Vec log_s_prev;
  Window window;
  WordVector observed;  // the new status over the interactor vocabulary
  double elapsed_days = 1.0;
  NetworkTerm network;
  bool interactions = true;  // false forces n_i = 1
};

// ---------------------------------------------------------------------------
// Objective pieces

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

/// -ln of the Gaussian density of ln s at a, with mean m and standard
/// deviation sigma sqrt(t).
inline double neg_log_likelihood(double a, double m, double sigma, double t_days) {
  const double t = clamp_elapsed(t_days);
  const double c = a - m;
  const double out = std::log(sigma) + 0.5 * std::log(2.0 * std::numbers::pi * t) + c * c / (2.0 * sigma * sigma * t);
  if (!std::isfinite(out)) throw NumericError("neg_log_likelihood is not finite");
  return out;
}

/// Sum over connected ordered pairs of (sig(X_i' . X_j') - 1)^2.
inline double homogeneity_penalty(const Mat& X, const std::vector<std::pair<std::size_t, std::size_t>>& edges) {
  double f = 0.0;
  for (const auto& [i, j] : edges) {
    // 1 - sig(x) = sig(-x), exact even when sig(x) rounds to 1
    const double gap = sigmoid(-X.row(static_cast<Eigen::Index>(i)).dot(X.row(static_cast<Eigen::Index>(j))));
    f += gap * gap;
  }
  return f;
}

inline double homogeneity_penalty(const Mat& X, const InteractionNetwork& net) {
  if (static_cast<std::size_t>(X.rows()) != net.size()) throw Error("one latent row per network user is required");
  std::vector<std::pair<std::size_t, std::size_t>> edges;
  for (const auto& e : net.edges)
    if (e.count >= 1) edges.emplace_back(e.src, e.dst);
  return homogeneity_penalty(X, edges);
}

struct ObjectiveParts {
  double likelihood = 0.0;   // sum_i -ln L_i
  double regularizer = 0.0;  // f_r, unweighted
  double total = 0.0;        // likelihood + w_reg * regularizer
};

namespace detail {

struct Forward {
  Mat L, X;     // window projections
  Vec n, a, m;  // drift factors, observed latent, Gaussian mean
  Mat Xnet;     // network user projections
  double t = 1.0;
};

inline Forward forward(const ModelParams& p, const TransitionData& d) {
  Forward fw;
  const auto I = p.dims();
  fw.t = clamp_elapsed(d.elapsed_days);
  if (d.log_s_prev.size() != I) throw Error("log_s_prev has the wrong dimension");
  if (d.interactions && !d.window.empty()) {
    std::tie(fw.L, fw.X) = project_interactions(d.window, p.basis);
    fw.n = drift_factors(fw.L, fw.X, p.basis.T);
  } else {
    fw.n = Vec::Ones(I);
  }
  fw.a = project_row(d.observed, p.basis.V).transpose();
  fw.m = d.log_s_prev.array() + (p.drift.mu.array() * fw.n.array() - 0.5 * p.drift.sigma.array().square()) * fw.t;
  fw.Xnet.resize(static_cast<Eigen::Index>(d.network.profiles.size()), I);
  for (std::size_t u = 0; u < d.network.profiles.size(); ++u)
    fw.Xnet.row(static_cast<Eigen::Index>(u)) = project_row(d.network.profiles[u], p.basis.V);
  return fw;
}

inline ObjectiveParts evaluate(const ModelParams& p, const TransitionData& d, const Forward& fw, double w_reg) {
  ObjectiveParts out;
  for (Eigen::Index i = 0; i < p.dims(); ++i)
    out.likelihood += neg_log_likelihood(fw.a(i), fw.m(i), p.drift.sigma(i), fw.t);
  out.regularizer = homogeneity_penalty(fw.Xnet, d.network.edges);
  out.total = out.likelihood + w_reg * out.regularizer;
  return out;
}

}  // namespace detail

inline ObjectiveParts objective_parts(const ModelParams& p, const TransitionData& d, double w_reg) {
  return detail::evaluate(p, d, detail::forward(p, d), w_reg);
}

/// f_t = -ln L + w_reg f_r for one transition.
inline double objective(const ModelParams& p, const TransitionData& d, double w_reg) {
  return objective_parts(p, d, w_reg).total;
}

/// Exact gradient of objective() with respect to every parameter block.
inline GradientSet gradients(const ModelParams& p, const TransitionData& d, double w_reg) {
  const auto fw = detail::forward(p, d);
  const auto& mu = p.drift.mu;
  const auto& sigma = p.drift.sigma;
  const double t = fw.t;
  GradientSet g = GradientSet::zeros_like(p);

  const Vec c = fw.a - fw.m;
  // r = d f / d a = -d f / d m
  const Vec r = c.array() / (sigma.array().square() * t);
  g.d_mu = -(r.array() * fw.n.array() * t).matrix();
  g.d_sigma = (1.0 / sigma.array() - c.array().square() / (sigma.array().cube() * t) + c.array() / sigma.array()).matrix();

  // observed latent a = g V
  for (const auto& e : d.observed.entries)
    g.d_V.row(static_cast<Eigen::Index>(e.col)).noalias() += static_cast<double>(e.count) * r.transpose();

  if (d.interactions && !d.window.empty()) {
    // q = d f / d n
    const Vec q = -(r.array() * mu.array() * t).matrix();
    const Mat& L = fw.L;
    const Mat& X = fw.X;
    const Mat& T = p.basis.T;
    g.d_T = q.asDiagonal() * (L.transpose() * X);
    const Mat dL = (X * T.transpose()) * q.asDiagonal();
    const Mat dX = (L * q.asDiagonal()) * T;
    for (std::size_t k = 0; k < d.window.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      for (const auto& e : d.window.interaction[k].entries)
        g.d_U.row(static_cast<Eigen::Index>(e.col)).noalias() += static_cast<double>(e.count) * dL.row(kk);
      for (const auto& e : d.window.interactor[k].entries)
        g.d_V.row(static_cast<Eigen::Index>(e.col)).noalias() += static_cast<double>(e.count) * dX.row(kk);
    }
  }

  if (w_reg != 0.0 && !d.network.edges.empty()) {
    Mat dXnet = Mat::Zero(fw.Xnet.rows(), fw.Xnet.cols());
    for (const auto& [i, j] : d.network.edges) {
      const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
      const double x = fw.Xnet.row(ii).dot(fw.Xnet.row(jj));
      const double s = sigmoid(x), gap = sigmoid(-x);
      // d/dx (sig(x) - 1)^2 = -2 sig(x) (1 - sig(x))^2
      const double dx = -w_reg * 2.0 * s * gap * gap;
      dXnet.row(ii) += dx * fw.Xnet.row(jj);
      dXnet.row(jj) += dx * fw.Xnet.row(ii);
    }
    for (std::size_t u = 0; u < d.network.profiles.size(); ++u)
      for (const auto& e : d.network.profiles[u].entries)
        g.d_V.row(static_cast<Eigen::Index>(e.col)).noalias() +=
            static_cast<double>(e.count) * dXnet.row(static_cast<Eigen::Index>(u));
  }

  auto check = [](bool finite, const char* block) {
    if (!finite) throw NumericError(std::string("nonfinite gradient in block ") + block);
  };
  check(g.d_mu.allFinite(), "mu");
  check(g.d_sigma.allFinite(), "sigma");
  check(g.d_U.allFinite(), "U");
  check(g.d_V.allFinite(), "V");
  check(g.d_T.allFinite(), "T");
  return g;
}

// ---------------------------------------------------------------------------
// Optimization

enum class Block { mu, sigma, U, T, V };

/// Update order within one iteration.
inline constexpr Block kBlockOrder[] = {Block::mu, Block::sigma, Block::U, Block::T, Block::V};

inline void apply_step(ModelParams& p, const GradientSet& g, Block b, double step, double sigma_min) {
  switch (b) {
    case Block::mu: p.drift.mu -= step * g.d_mu; break;
    case Block::sigma: p.drift.sigma = (p.drift.sigma - step * g.d_sigma).cwiseMax(sigma_min); break;
    case Block::U: p.basis.U -= step * g.d_U; break;
    case Block::T: p.basis.T -= step * g.d_T; break;
    case Block::V: p.basis.V -= step * g.d_V; break;
  }
}

struct FitResult {
  ModelParams params;
  GaussianSummary summary;
  int iterations = 0;
  std::vector<double> trace;  // objective before the first iteration and after each one
};

/// Maximum number of step halvings tried for one block update.
inline constexpr int kMaxStepHalvings = 40;

/// Gradient descent on one transition's objective. An iteration updates the
/// blocks mu, sigma, U, T, V in turn; each block takes a gradient step that
/// starts at eta and is halved until the objective does not increase, then
/// halved further for as long as that keeps lowering the objective. Sigma
/// is projected onto [sigma_min, inf). Stops when the relative change of the
/// objective over an iteration, |df| / max(|f|, 1), drops below tol, when no
/// block can descend, or after max_iters iterations.
inline FitResult fit_message(ModelParams params, const TransitionData& data, const Hyperparams& hyper) {
  const double w_reg = hyper.ablation_int ? 0.0 : hyper.w_reg;
  params.drift.sigma = params.drift.sigma.cwiseMax(hyper.sigma_min);
  FitResult res;
  double f;
  try {
    f = objective(params, data, w_reg);
  } catch (const NumericError& e) {
    throw DivergenceError(std::string("fit_message start: ") + e.what());
  }
  if (!std::isfinite(f)) throw DivergenceError("objective is not finite at the start of fit_message");
  res.trace.push_back(f);

  const bool window_active = data.interactions && !data.window.empty();
  for (int it = 0; it < hyper.max_iters; ++it) {
    const double f_start = f;
    bool moved = false;
    for (Block b : kBlockOrder) {
      if (!window_active && (b == Block::U || b == Block::T)) continue;  // zero gradient
      GradientSet g;
      try {
        g = gradients(params, data, w_reg);
      } catch (const NumericError& e) {
        throw DivergenceError(e.what());
      }
      // halve until the objective does not increase, then keep halving while it improves
      std::optional<ModelParams> best;
      double f_best = f;
      double step = hyper.eta;
      for (int h = 0; h <= kMaxStepHalvings; ++h, step *= 0.5) {
        ModelParams cand = params;
        apply_step(cand, g, b, step, hyper.sigma_min);
        double fc = std::numeric_limits<double>::infinity();
        try {
          fc = objective(cand, data, w_reg);
        } catch (const NumericError&) {
        }
        if (!std::isfinite(fc)) fc = std::numeric_limits<double>::infinity();
        if (best) {
          if (!(fc < f_best)) break;
        } else if (!(fc <= f)) {
          continue;
        }
        best = std::move(cand);
        f_best = fc;
      }
      if (best) {
        moved = moved || f_best < f;
        params = std::move(*best);
        f = f_best;
      }
    }
    res.trace.push_back(f);
    ++res.iterations;
    const double rel = std::abs(f_start - f) / std::max(std::abs(f_start), 1.0);
    if (!moved || rel < hyper.tol) break;
  }

  TrajectoryState st{data.log_s_prev, {}, {}, 0};
  res.summary = gaussian_summary(st, params.drift, params.basis, data.window, data.elapsed_days, data.interactions);
  res.params = std::move(params);
  return res;
}

// ---------------------------------------------------------------------------
// Per-user training

struct TrainedUser {
  std::string user_id;
  ModelParams params;
  Vec m, v;  // Gaussian summary of ln s at the candidate post
  std::size_t fit_calls = 0;
  std::optional<int> label;
  Timestamp candidate_ts = 0;
};

namespace detail {

/// Network term for the snapshot at `at`: the candidate's profile is the sum
/// of its statuses so far, an interactor's is the author content of its most
/// recent mention.
inline NetworkTerm network_term(const Corpus& corpus, const UserTimeline& tl, const UserNetworkEvents& ne,
                                Timestamp at) {
  NetworkTerm term;
  const auto net = network_snapshot(ne, at);
  const std::size_t q = corpus.interactor_vocab().size();
  term.profiles.assign(net.size(), WordVector{q, {}});

  std::map<std::size_t, std::int64_t> own;
  for (const auto& s : tl.statuses) {
    if (s.ts > at) break;
    for (const auto& e : corpus.status_in_interactor_space(s.row).entries) own[e.col] += e.count;
  }
  term.profiles[0] = WordVector::from_counts(q, own);

  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 1; i < net.users.size(); ++i) idx.emplace(net.users[i], i);
  for (const auto& mref : tl.mentions) {
    if (mref.ts > at) break;
    if (auto it = idx.find(mref.author); it != idx.end())
      term.profiles[it->second] = corpus.interactor_content().row_vector(mref.row);
  }
  for (const auto& e : net.edges)
    if (e.count >= 1) term.edges.emplace_back(e.src, e.dst);
  return term;
}

inline Window window_rows(const Corpus& corpus, const UserTimeline& tl, const std::vector<std::size_t>& mention_ids) {
  Window w;
  for (auto k : mention_ids) {
    const auto row = tl.mentions[k].row;
    w.interaction.push_back(corpus.interactions().row_vector(row));
    w.interactor.push_back(corpus.interactor_content().row_vector(row));
  }
  return w;
}

}  // namespace detail

/// Trains one user's parameters starting from `init`.
inline TrainedUser train_user(const UserTimeline& tl, const Corpus& corpus, const Hyperparams& hyper,
                              ModelParams init) {
  hyper.validate();
  const std::size_t L = tl.statuses.size();
  if (L < 2) throw Error("insufficient history for user " + tl.user_id);
  init.basis.check();
  if (init.basis.U.rows() != static_cast<Eigen::Index>(corpus.interaction_vocab().size()) ||
      init.basis.V.rows() != static_cast<Eigen::Index>(corpus.interactor_vocab().size()))
    throw Error("initial basis does not match corpus vocabulary widths");

  const bool use_int = !hyper.ablation_int;
  const auto windows = mention_windows(tl);
  const auto ne = use_int ? user_network_events(corpus, tl.user_id) : UserNetworkEvents{};

  TrainedUser out;
  out.user_id = tl.user_id;
  out.label = tl.label;
  out.candidate_ts = tl.candidate_ts;
  ModelParams params = std::move(init);

  Vec log_s = project_row(corpus.status_in_interactor_space(tl.statuses[0].row), params.basis.V).transpose();
  for (std::size_t M = 1; M < L; ++M) {
    TransitionData data;
    data.log_s_prev = log_s;
    data.interactions = use_int;
    if (use_int) {
      data.window = detail::window_rows(corpus, tl, windows[M]);
      data.network = detail::network_term(corpus, tl, ne, tl.statuses[M].ts);
    }
    data.observed = corpus.status_in_interactor_space(tl.statuses[M].row);
    data.elapsed_days = elapsed_days(tl.statuses[M - 1].ts, tl.statuses[M].ts);

    FitResult fit;
    try {
      fit = fit_message(params, data, hyper);
    } catch (const DivergenceError& e) {
      log_warn("user " + tl.user_id + ": " + e.what() + "; retrying with eta/10");
      Hyperparams slow = hyper;
      slow.eta /= 10.0;
      fit = fit_message(params, data, slow);
    }
    ++out.fit_calls;
    params = std::move(fit.params);
    // condition the trajectory on the observed status
    log_s = project_row(data.observed, params.basis.V).transpose();
  }

  TrajectoryState st{log_s, {}, {}, tl.statuses.back().ts};
  Window last;
  if (use_int) last = detail::window_rows(corpus, tl, windows[L]);
  auto summary = gaussian_summary(st, params.drift, params.basis, last,
                                  elapsed_days(tl.statuses.back().ts, tl.candidate_ts), use_int);
  out.m = std::move(summary.m);
  out.v = std::move(summary.v);
  out.params = std::move(params);
  return out;
}

/// Trains one user from the seeded initialization. The initial parameters
/// depend on the seed only, so every user starts from the same latent basis.
inline TrainedUser train_user(const UserTimeline& tl, const Corpus& corpus, const Hyperparams& hyper) {
  return train_user(tl, corpus, hyper,
                    init_params(corpus.interaction_vocab().size(), corpus.interactor_vocab().size(), hyper.dims,
                                hyper.seed));
}

struct TrainOutcome {
  std::string user_id;
  std::optional<TrainedUser> model;
  std::string error;
};

/// Trains every timeline with at least two statuses, fanning out over `jobs`
/// threads. Results come back in timeline (user id) order.
inline std::vector<TrainOutcome> train_users(const Corpus& corpus, const Hyperparams& hyper, unsigned jobs = 1) {
  const auto& tls = corpus.timelines();
  std::vector<TrainOutcome> out(tls.size());
  const ModelParams init = init_params(corpus.interaction_vocab().size(), corpus.interactor_vocab().size(),
                                       hyper.dims, hyper.seed);
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < tls.size(); i = next++) {
      out[i].user_id = tls[i].user_id;
      try {
        out[i].model = train_user(tls[i], corpus, hyper, init);
      } catch (const std::exception& e) {
        out[i].error = e.what();
        log_warn("training failed for " + tls[i].user_id + ": " + e.what());
      }
    }
  };
  jobs = std::max(1u, std::min<unsigned>(jobs, static_cast<unsigned>(std::max<std::size_t>(1, tls.size()))));
  if (jobs == 1) {
    worker();
  } else {
    std::vector<std::jthread> pool;
    for (unsigned j = 0; j < jobs; ++j) pool.emplace_back(worker);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Prediction

/// Next-post latent vector: m itself, or a draw from N(m, v^2).
inline Vec predict_next_latent(const Vec& m, const Vec& v, bool deterministic, std::mt19937_64* rng) {
  if (m.size() != v.size()) throw Error("m and v differ in size");
  if (deterministic) return m;
  if (rng == nullptr) throw Error("sampling mode needs a random stream");
  std::normal_distribution<double> normal(0.0, 1.0);
  Vec u(m.size());
  for (Eigen::Index i = 0; i < m.size(); ++i) u(i) = m(i) + v(i) * normal(*rng);
  return u;
}

/// Prediction using the user's own seeded stream.
inline Vec predict_next_latent(const TrainedUser& user, const Hyperparams& hyper) {
  auto rng = make_rng(hyper.seed, user.user_id);
  return predict_next_latent(user.m, user.v, hyper.deterministic_predict, &rng);
}

// ---------------------------------------------------------------------------
// Model files

namespace detail {

inline nlohmann::json flat(const Mat& m) {
  std::vector<double> v(m.data(), m.data() + m.size());  // row-major storage
  return v;
}

inline nlohmann::json flat(const Vec& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

inline Vec vec_from(const nlohmann::json& j) {
  auto v = j.get<std::vector<double>>();
  return Eigen::Map<Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
}

inline Mat mat_from(const nlohmann::json& j, Eigen::Index cols) {
  auto v = j.get<std::vector<double>>();
  if (cols <= 0 || v.size() % static_cast<std::size_t>(cols) != 0) throw Error("matrix size is not a multiple of I");
  return Eigen::Map<Mat>(v.data(), static_cast<Eigen::Index>(v.size()) / cols, cols);
}

}  // namespace detail

inline nlohmann::json model_to_json(const TrainedUser& u, const Hyperparams& hyper) {
  return {{"format_version", 1},
          {"user_id", u.user_id},
          {"I", u.params.dims()},
          {"mu", detail::flat(u.params.drift.mu)},
          {"sigma", detail::flat(u.params.drift.sigma)},
          {"U", detail::flat(u.params.basis.U)},
          {"V", detail::flat(u.params.basis.V)},
          {"T", detail::flat(u.params.basis.T)},
          {"m", detail::flat(u.m)},
          {"v", detail::flat(u.v)},
          {"label", u.label ? nlohmann::json(*u.label) : nlohmann::json(nullptr)},
          {"candidate_ts", u.candidate_ts},
          {"fit_calls", u.fit_calls},
          {"hyper", hyper.to_json()}};
}

inline TrainedUser model_from_json(const nlohmann::json& j) {
  if (j.value("format_version", 0) != 1) throw Error("unsupported model format_version");
  TrainedUser u;
  const auto I = j.at("I").get<Eigen::Index>();
  u.user_id = j.at("user_id").get<std::string>();
  u.params.drift.mu = detail::vec_from(j.at("mu"));
  u.params.drift.sigma = detail::vec_from(j.at("sigma"));
  u.params.basis.U = detail::mat_from(j.at("U"), I);
  u.params.basis.V = detail::mat_from(j.at("V"), I);
  u.params.basis.T = detail::mat_from(j.at("T"), I);
  u.m = detail::vec_from(j.at("m"));
  u.v = detail::vec_from(j.at("v"));
  if (j.contains("label") && !j.at("label").is_null()) u.label = j.at("label").get<int>();
  u.candidate_ts = j.value("candidate_ts", Timestamp{0});
  u.fit_calls = j.value("fit_calls", std::size_t{0});
  u.params.basis.check();
  if (u.m.size() != I || u.v.size() != I || u.params.drift.mu.size() != I || u.params.drift.sigma.size() != I)
    throw Error("model vectors do not match I");
  return u;
}

}  // namespace driftcast
