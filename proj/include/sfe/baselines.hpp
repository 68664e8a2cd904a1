#pragma once

// Classical comparison estimators: difference of means, OLS adjustment,
// propensity-score matching and weighting, Mahalanobis nearest-neighbour
// matching. The matching estimators match treated units to controls with
// replacement and so target the effect on the treated.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "sfe/data_model.hpp"
#include "sfe/error.hpp"
#include "sfe/types.hpp"

namespace sfe {

inline constexpr double kLinearRidge = 1e-8;
inline constexpr double kLogisticRidge = 1e-6;

/// Treated when the raw value lies above the midpoint of the column range.
inline std::vector<bool> treatment_indicator(const Dataset& d, const std::string& treat) {
  const Index a = d.column_index(treat);
  const double lo = d.x().col(a).minCoeff();
  const double hi = d.x().col(a).maxCoeff();
  const double mid = 0.5 * (lo + hi);
  std::vector<bool> t(static_cast<std::size_t>(d.rows()));
  for (Index i = 0; i < d.rows(); ++i) t[static_cast<std::size_t>(i)] = hi > lo && d.x()(i, a) > mid;
  const auto n_t = std::count(t.begin(), t.end(), true);
  if (n_t == 0 || n_t == static_cast<long>(t.size())) {
    throw data_error("degenerate split on '" + treat + "'");
  }
  return t;
}

/// Covariate names: everything except the treatment column.
inline std::vector<std::string> default_covariates(const Dataset& d, const std::string& treat) {
  std::vector<std::string> names;
  for (const auto& c : d.columns()) {
    if (c.name != treat) names.push_back(c.name);
  }
  return names;
}

namespace detail {

/// Centered and scaled copies of the named columns; constant columns are
/// dropped. Makes the ridge terms independent of covariate units.
inline Matrix standardized(const Dataset& d, const std::vector<std::string>& covariates) {
  std::vector<Vector> kept;
  for (const auto& name : covariates) {
    const Vector col = d.x().col(d.column_index(name));
    const double mean = col.mean();
    const double sd = std::sqrt((col.array() - mean).square().mean());
    if (!(sd > 0.0)) continue;
    kept.emplace_back((col.array() - mean) / sd);
  }
  Matrix z(d.rows(), static_cast<Index>(kept.size()));
  for (std::size_t k = 0; k < kept.size(); ++k) z.col(static_cast<Index>(k)) = kept[k];
  return z;
}

inline Vector as_vector(const std::vector<bool>& t) {
  Vector v(static_cast<Index>(t.size()));
  for (std::size_t i = 0; i < t.size(); ++i) v[static_cast<Index>(i)] = t[i] ? 1.0 : 0.0;
  return v;
}

}  // namespace detail

inline double ate_diff_means(const Dataset& d, const std::string& treat) {
  const auto t = treatment_indicator(d, treat);
  double sum_t = 0.0, sum_c = 0.0;
  Index n_t = 0, n_c = 0;
  for (Index i = 0; i < d.rows(); ++i) {
    if (t[static_cast<std::size_t>(i)]) {
      sum_t += d.y()[i];
      ++n_t;
    } else {
      sum_c += d.y()[i];
      ++n_c;
    }
  }
  return sum_t / static_cast<double>(n_t) - sum_c / static_cast<double>(n_c);
}

/// Treatment coefficient of y ~ 1 + treat + covariates by normal equations;
/// a ridge of 1e-8 on the non-intercept terms is added when the system is
/// singular.
inline double ate_ols(const Dataset& d, const std::string& treat,
                      const std::vector<std::string>& covariates) {
  const auto t = treatment_indicator(d, treat);
  const Matrix z = detail::standardized(d, covariates);
  const Index n = d.rows();
  const Index p = 2 + z.cols();
  Eigen::MatrixXd design(n, p);
  design.col(0).setOnes();
  design.col(1) = detail::as_vector(t);
  design.rightCols(z.cols()) = z;

  Eigen::MatrixXd gram = design.transpose() * design;
  const Eigen::VectorXd rhs = design.transpose() * d.y();
  Eigen::LLT<Eigen::MatrixXd> llt(gram);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-12) {
    gram.diagonal().tail(p - 1).array() += kLinearRidge;
    llt.compute(gram);
    if (llt.info() != Eigen::Success) throw numeric_error("ols: design is rank deficient");
  }
  const Eigen::VectorXd beta = llt.solve(rhs);
  if (!beta.allFinite()) throw numeric_error("ols: non-finite coefficients");
  return beta[1];
}

/// Logistic-regression propensity scores by iteratively reweighted least
/// squares (at most 100 Newton steps, stop when no coefficient moves by more
/// than 1e-8, ridge 1e-6 on the slopes).
inline Vector fit_propensity(const Dataset& d, const std::string& treat,
                             const std::vector<std::string>& covariates) {
  constexpr int kMaxIterations = 100;
  constexpr double kTolerance = 1e-8;
  const Vector t = detail::as_vector(treatment_indicator(d, treat));
  const Matrix z = detail::standardized(d, covariates);
  const Index n = d.rows();
  const Index p = 1 + z.cols();
  Eigen::MatrixXd design(n, p);
  design.col(0).setOnes();
  design.rightCols(z.cols()) = z;

  Eigen::VectorXd beta = Eigen::VectorXd::Zero(p);
  const double frac = t.mean();
  beta[0] = std::log(frac / (1.0 - frac));
  Eigen::VectorXd penalty = Eigen::VectorXd::Constant(p, kLogisticRidge);
  penalty[0] = 0.0;

  double last_step = 0.0;
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    const Eigen::VectorXd eta = design * beta;
    const Eigen::ArrayXd prob = 1.0 / (1.0 + (-eta.array()).exp());
    const Eigen::ArrayXd w = (prob * (1.0 - prob)).max(1e-300);
    Eigen::MatrixXd hessian = design.transpose() * (design.array().colwise() * w).matrix();
    hessian.diagonal() += penalty;
    const Eigen::VectorXd score =
        design.transpose() * (t.array() - prob).matrix() - penalty.cwiseProduct(beta);
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hessian);
    if (ldlt.info() != Eigen::Success) {
      throw numeric_error("propensity: singular Hessian at iteration " + std::to_string(iter));
    }
    const Eigen::VectorXd step = ldlt.solve(score);
    beta += step;
    last_step = step.cwiseAbs().maxCoeff();
    if (!beta.allFinite()) {
      throw numeric_error("propensity: non-finite coefficients at iteration " + std::to_string(iter));
    }
    if (last_step < kTolerance) {
      const Eigen::ArrayXd eta_final = design * beta;
      return (1.0 / (1.0 + (-eta_final).exp())).matrix();
    }
  }
  throw numeric_error("propensity: no convergence after " + std::to_string(kMaxIterations) +
                      " iterations (last max coefficient change " + std::to_string(last_step) + ")");
}

enum class PsMode { match, iptw };

namespace detail {

/// Linear-interpolation percentile of sorted values, q in [0,1].
inline double percentile(std::vector<double> values, double q) {
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

}  // namespace detail

/// mode=match: each treated unit is compared with the control of nearest
/// score (with replacement; exactly tied controls are averaged). mode=iptw: normalized
/// inverse-probability weighting with weights truncated at their 1st and
/// 99th percentiles.
inline double ate_ps(const Dataset& d, const std::string& treat, const Vector& scores, PsMode mode) {
  const auto t = treatment_indicator(d, treat);
  const Index n = d.rows();
  if (scores.size() != n) throw usage_error("score vector length does not match rows");
  for (double s : scores) {
    if (!(s > 0.0 && s < 1.0)) throw usage_error("propensity scores must lie in (0,1)");
  }
  const Vector& y = d.y();

  if (mode == PsMode::match) {
    std::vector<Index> controls;
    for (Index i = 0; i < n; ++i) {
      if (!t[static_cast<std::size_t>(i)]) controls.push_back(i);
    }
    double total = 0.0;
    Index n_t = 0;
    for (Index i = 0; i < n; ++i) {
      if (!t[static_cast<std::size_t>(i)]) continue;
      double best = std::numeric_limits<double>::infinity();
      double matched = 0.0;
      Index ties = 0;
      for (Index c : controls) {
        const double dist = std::abs(scores[i] - scores[c]);
        if (dist < best) {
          best = dist;
          matched = y[c];
          ties = 1;
        } else if (dist == best) {
          matched += y[c];
          ++ties;
        }
      }
      total += y[i] - matched / static_cast<double>(ties);
      ++n_t;
    }
    return total / static_cast<double>(n_t);
  }

  std::vector<double> weights(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    weights[static_cast<std::size_t>(i)] =
        t[static_cast<std::size_t>(i)] ? 1.0 / scores[i] : 1.0 / (1.0 - scores[i]);
  }
  const double lo = detail::percentile(weights, 0.01);
  const double hi = detail::percentile(weights, 0.99);
  double wy_t = 0.0, w_t = 0.0, wy_c = 0.0, w_c = 0.0;
  for (Index i = 0; i < n; ++i) {
    const double w = std::clamp(weights[static_cast<std::size_t>(i)], lo, hi);
    if (t[static_cast<std::size_t>(i)]) {
      wy_t += w * y[i];
      w_t += w;
    } else {
      wy_c += w * y[i];
      w_c += w;
    }
  }
  return wy_t / w_t - wy_c / w_c;
}

/// Each treated unit is compared with the mean outcome of its k nearest
/// controls under the Mahalanobis metric of the covariates, plus any
/// controls tied with the k-th.
inline double ate_mahalanobis(const Dataset& d, const std::string& treat,
                              const std::vector<std::string>& covariates, int k) {
  if (k < 1) throw usage_error("k must be at least 1");
  const auto t = treatment_indicator(d, treat);
  const Index n = d.rows();
  const Matrix z = detail::standardized(d, covariates);

  std::vector<Index> controls;
  for (Index i = 0; i < n; ++i) {
    if (!t[static_cast<std::size_t>(i)]) controls.push_back(i);
  }
  if (static_cast<Index>(controls.size()) < k) {
    throw data_error("mahalanobis: fewer than " + std::to_string(k) + " controls");
  }

  // Whitening with the Cholesky factor turns Mahalanobis into Euclidean
  // distance.
  Matrix white = z;
  if (z.cols() > 0) {
    Eigen::MatrixXd cov = (z.transpose() * z) / static_cast<double>(n);
    cov.diagonal().array() += kLinearRidge;
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success) throw numeric_error("mahalanobis: covariance not invertible");
    white = llt.matrixL().solve(z.transpose()).transpose();
  }

  const Vector& y = d.y();
  std::vector<std::pair<double, Index>> dist(controls.size());
  double total = 0.0;
  Index n_t = 0;
  for (Index i = 0; i < n; ++i) {
    if (!t[static_cast<std::size_t>(i)]) continue;
    for (std::size_t c = 0; c < controls.size(); ++c) {
      dist[c] = {(white.row(i) - white.row(controls[c])).squaredNorm(), controls[c]};
    }
    std::sort(dist.begin(), dist.end());
    // Controls tied with the k-th nearest are kept as well.
    std::size_t used = static_cast<std::size_t>(k);
    while (used < dist.size() && dist[used].first == dist[used - 1].first) ++used;
    double matched = 0.0;
    for (std::size_t q = 0; q < used; ++q) matched += y[dist[q].second];
    total += y[i] - matched / static_cast<double>(used);
    ++n_t;
  }
  return total / static_cast<double>(n_t);
}

}  // namespace sfe
