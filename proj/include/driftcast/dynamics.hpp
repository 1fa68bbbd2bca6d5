#pragma once

// Latent projections and the log-space Geometric Brownian Motion transition.
//
// Between two statuses the state of dimension i evolves as
//   ds_i / s_i = mu_i * n_i dt + sigma_i dW,
//   n_i = 1 + sum_k L_ki * (T_i' . X_k'),
// so ln s_i after elapsed time t is Gaussian with mean
//   m_i = ln s_prev_i + (mu_i n_i - sigma_i^2 / 2) t
// and standard deviation v_i = sigma_i sqrt(t).

#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "driftcast/common.hpp"
#include "driftcast/sparse.hpp"

namespace driftcast {

using Vec = Eigen::VectorXd;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct LatentBasis {
  Mat U;  // interaction word -> latent, r x I
  Mat V;  // interactor word -> latent, q x I
  Mat T;  // dimension correlation, I x I

  Eigen::Index dims() const { return T.rows(); }

  void check() const {
    if (T.rows() != T.cols() || U.cols() != T.rows() || V.cols() != T.rows())
      throw Error("latent basis shapes are inconsistent");
    if (!U.allFinite() || !V.allFinite() || !T.allFinite()) throw NumericError("latent basis has nonfinite entries");
  }
};

struct DriftParams {
  Vec mu;     // 1/day
  Vec sigma;  // 1/sqrt(day)
};

struct TrajectoryState {
  Vec log_s;
  Vec m;
  Vec v;
  Timestamp at = 0;
};

/// Mention messages of one window: interaction text rows (width r) aligned
/// with the author-content rows (width q).
struct Window {
  std::vector<WordVector> interaction;
  std::vector<WordVector> interactor;

  std::size_t size() const { return interaction.size(); }
  bool empty() const { return interaction.empty(); }
};

/// Dense row vector x . B for a sparse count row x.
inline Eigen::RowVectorXd project_row(const WordVector& x, const Mat& B) {
  if (x.width != static_cast<std::size_t>(B.rows()))
    throw Error("row width " + std::to_string(x.width) + " does not match basis rows " + std::to_string(B.rows()));
  Eigen::RowVectorXd out = Eigen::RowVectorXd::Zero(B.cols());
  for (const auto& e : x.entries) out.noalias() += static_cast<double>(e.count) * B.row(static_cast<Eigen::Index>(e.col));
  return out;
}

/// L = P U and X = W V for the window's messages.
inline std::pair<Mat, Mat> project_interactions(const Window& window, const LatentBasis& basis) {
  if (window.interaction.size() != window.interactor.size())
    throw Error("window interaction and interactor rows are misaligned");
  const auto k = static_cast<Eigen::Index>(window.size());
  Mat L(k, basis.U.cols()), X(k, basis.V.cols());
  for (Eigen::Index i = 0; i < k; ++i) {
    L.row(i) = project_row(window.interaction[static_cast<std::size_t>(i)], basis.U);
    X.row(i) = project_row(window.interactor[static_cast<std::size_t>(i)], basis.V);
  }
  return {std::move(L), std::move(X)};
}

/// n_i = 1 + sum_k L_ki (T_i' . X_k').
inline double drift_factor(const Mat& L, const Mat& X, const Mat& T, Eigen::Index i) {
  if (i < 0 || i >= T.rows()) throw Error("dimension index out of range");
  if (L.rows() == 0) return 1.0;
  return 1.0 + L.col(i).dot(X * T.row(i).transpose());
}

/// All drift factors at once.
inline Vec drift_factors(const Mat& L, const Mat& X, const Mat& T) {
  Vec n = Vec::Ones(T.rows());
  if (L.rows() == 0) return n;
  // (X T^T)_ki = T_i' . X_k'
  const Mat XT = X * T.transpose();
  n.array() += (L.array() * XT.array()).colwise().sum().transpose();
  return n;
}

inline double clamp_elapsed(double t_days) {
  if (!std::isfinite(t_days)) throw NumericError("nonfinite elapsed time");
  if (t_days < kEpsilonDays) {
    log_debug("elapsed time " + std::to_string(t_days) + " d clamped to " + std::to_string(kEpsilonDays));
    return kEpsilonDays;
  }
  return t_days;
}

/// One transition of ln s_i over elapsed time t (days) given a standard
/// normal draw w.
inline double gbm_step(double log_s_prev, double mu, double sigma, double n, double t_days, double w) {
  if (!std::isfinite(log_s_prev) || !std::isfinite(mu) || !std::isfinite(sigma) || !std::isfinite(n) ||
      !std::isfinite(w))
    throw NumericError("gbm_step: nonfinite input");
  if (sigma <= 0.0) throw NumericError("gbm_step: sigma must be positive");
  const double t = clamp_elapsed(t_days);
  const double m = log_s_prev + (mu * n - 0.5 * sigma * sigma) * t;
  return m + sigma * std::sqrt(t) * w;
}

struct GaussianSummary {
  Vec m;
  Vec v;  // standard deviation of ln s
};

/// Mean and standard deviation of the next ln s for given drift factors.
inline GaussianSummary gaussian_summary(const Vec& log_s_prev, const DriftParams& drift, const Vec& n,
                                        double t_days) {
  const auto I = log_s_prev.size();
  if (drift.mu.size() != I || drift.sigma.size() != I || n.size() != I)
    throw Error("gaussian_summary: dimension mismatch");
  if (!log_s_prev.allFinite() || !drift.mu.allFinite() || !drift.sigma.allFinite() || !n.allFinite())
    throw NumericError("gaussian_summary: nonfinite input");
  if ((drift.sigma.array() <= 0.0).any()) throw NumericError("gaussian_summary: sigma must be positive");
  const double t = clamp_elapsed(t_days);
  GaussianSummary g;
  g.m = log_s_prev.array() + (drift.mu.array() * n.array() - 0.5 * drift.sigma.array().square()) * t;
  g.v = drift.sigma * std::sqrt(t);
  return g;
}

/// Same, computing the drift factors from a window of mentions. With
/// `interactions` false the drift factors are fixed at 1.
inline GaussianSummary gaussian_summary(const TrajectoryState& state, const DriftParams& drift,
                                        const LatentBasis& basis, const Window& window, double t_days,
                                        bool interactions = true) {
  Vec n = Vec::Ones(basis.dims());
  if (interactions && !window.empty()) {
    auto [L, X] = project_interactions(window, basis);
    n = drift_factors(L, X, basis.T);
  }
  return gaussian_summary(state.log_s, drift, n, t_days);
}

}  // namespace driftcast
