#pragma once

// Per-pair kernels: outcome differences, the dot-product treatment
// likelihood, the treatment-size and balance penalties, and the
// per-individual objective with its gradient.
//
// Every inner product is scaled by 1/m, so rows in [-1,+1]^m have dot
// products in [-1,+1].

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "sfe/error.hpp"
#include "sfe/types.hpp"

namespace sfe {

using ConstRow = Eigen::Ref<const RowVector>;

inline double outcome_diff(double yn_i, double yn_j) { return std::max(0.0, yn_i - yn_j); }

inline double pair_dot(ConstRow x_i, ConstRow x_j) {
  if (x_i.size() != x_j.size()) throw usage_error("pair_dot: row lengths differ");
  if (x_i.size() == 0) throw usage_error("pair_dot: empty rows");
  return x_i.dot(x_j) / static_cast<double>(x_i.size());
}

/// Probability of drawing a treated coordinate when comparing i with j.
inline double treatment_likelihood(ConstRow x_i, ConstRow x_j) {
  return std::max(0.0, -pair_dot(x_i, x_j));
}

/// Treatment-size penalty |x_i + x_j| / m (l2 norm).
inline double phi_cx(ConstRow x_i, ConstRow x_j) {
  if (x_i.size() != x_j.size()) throw usage_error("phi_cx: row lengths differ");
  return (x_i + x_j).norm() / static_cast<double>(x_i.size());
}

/// Balance penalty |<mean_row, x_i + x_j>| / m, equal to the absolute mean
/// projection of the sample onto the pair's common direction.
inline double phi_bl(ConstRow x_i, ConstRow x_j, ConstRow mean_row) {
  if (x_i.size() != x_j.size() || x_i.size() != mean_row.size()) {
    throw usage_error("phi_bl: row lengths differ");
  }
  return std::abs(mean_row.dot(x_i + x_j)) / static_cast<double>(x_i.size());
}

struct PairDecomposition {
  Index i = 0;
  Index j = 0;
  double y_ij = 0.0;
  double dot = 0.0;
  double likelihood = 0.0;
  double phi_cx = 0.0;
  double phi_bl = 0.0;
};

inline RowVector mean_row(const Matrix& positions) { return positions.colwise().mean(); }

inline PairDecomposition decompose(Index i, Index j, const Matrix& positions, const Vector& yn,
                                   ConstRow mean) {
  PairDecomposition p;
  p.i = i;
  p.j = j;
  p.y_ij = outcome_diff(yn[i], yn[j]);
  p.dot = pair_dot(positions.row(i), positions.row(j));
  p.likelihood = std::max(0.0, -p.dot);
  p.phi_cx = phi_cx(positions.row(i), positions.row(j));
  p.phi_bl = phi_bl(positions.row(i), positions.row(j), mean);
  return p;
}

namespace detail {

inline void check_gamma_args(Index i, const Matrix& positions, const Vector& yn) {
  if (i < 0 || i >= positions.rows()) throw usage_error("individual index out of range");
  if (yn.size() != positions.rows()) throw usage_error("outcome length does not match positions");
}

}  // namespace detail

/// Gamma(x_i) summed over the given partners (i itself is skipped); the
/// balance penalty uses `mean`.
inline double objective_gamma(Index i, const Matrix& positions, const Vector& yn,
                              std::span<const Index> partners, ConstRow mean) {
  detail::check_gamma_args(i, positions, yn);
  double total = 0.0;
  for (Index j : partners) {
    if (j == i) continue;
    const PairDecomposition p = decompose(i, j, positions, yn, mean);
    const double residual = p.dot + p.y_ij;
    total += (1.0 + p.phi_cx) * residual * residual + p.phi_bl * p.dot * p.dot;
  }
  return total;
}

/// Analytic gradient of objective_gamma with respect to x_i, holding the
/// penalty coefficients at their current values.
inline RowVector grad_gamma(Index i, const Matrix& positions, const Vector& yn,
                            std::span<const Index> partners, ConstRow mean) {
  detail::check_gamma_args(i, positions, yn);
  const auto m = static_cast<double>(positions.cols());
  RowVector grad = RowVector::Zero(positions.cols());
  for (Index j : partners) {
    if (j == i) continue;
    const PairDecomposition p = decompose(i, j, positions, yn, mean);
    const double weight = (1.0 + p.phi_cx) * (p.dot + p.y_ij) + p.phi_bl * p.dot;
    grad += (2.0 * weight / m) * positions.row(j);
  }
  return grad;
}

inline std::vector<Index> all_individuals(Index n) {
  std::vector<Index> ids(static_cast<std::size_t>(n));
  for (Index k = 0; k < n; ++k) ids[static_cast<std::size_t>(k)] = k;
  return ids;
}

inline double objective_gamma(Index i, const Matrix& positions, const Vector& yn) {
  const auto ids = all_individuals(positions.rows());
  return objective_gamma(i, positions, yn, ids, mean_row(positions));
}

inline RowVector grad_gamma(Index i, const Matrix& positions, const Vector& yn) {
  const auto ids = all_individuals(positions.rows());
  return grad_gamma(i, positions, yn, ids, mean_row(positions));
}

/// Sum of Gamma(x_i) over every individual.
inline double total_objective(const Matrix& positions, const Vector& yn) {
  const auto ids = all_individuals(positions.rows());
  const RowVector mean = mean_row(positions);
  double total = 0.0;
  for (Index i = 0; i < positions.rows(); ++i) total += objective_gamma(i, positions, yn, ids, mean);
  return total;
}

/// Objective and gradients for every member of a batch at once, with the
/// batch members as each other's partners. Row k of `grad` belongs to batch
/// row k. Same values as objective_gamma/grad_gamma per member, computed a
/// partner column at a time with matrix products. The workspace buffers are
/// reused across calls.
struct BatchTerms {
  Eigen::MatrixXd gram;
  Eigen::MatrixXd weights;
  Matrix grad;
  double objective = 0.0;
};

inline void batch_terms(const Matrix& batch, const Vector& yb, ConstRow mean, BatchTerms& out) {
  const Index b = batch.rows();
  const auto m = static_cast<double>(batch.cols());
  out.objective = 0.0;
  if (b < 2) {
    out.grad.setZero(b, batch.cols());
    return;
  }
  out.gram.resize(b, b);
  out.gram.noalias() = batch * batch.transpose();
  const Eigen::ArrayXd sq = out.gram.diagonal().array();
  const Eigen::ArrayXd proj = (batch * mean.transpose()).array();
  const Eigen::ArrayXd y = yb.array();

  out.weights.resize(b, b);
  const double inv_m = 1.0 / m;
  double objective = 0.0;
  for (Index j = 0; j < b; ++j) {
    const double* g = out.gram.col(j).data();
    double* w = out.weights.col(j).data();
    const double sq_j = sq[j];
    const double proj_j = proj[j];
    const double y_j = y[j];
    double col_objective = 0.0;
    auto accumulate = [&](Index from, Index to) {
      for (Index i = from; i < to; ++i) {
        const double dot = g[i] * inv_m;
        const double cx = std::sqrt(std::max(0.0, sq[i] + sq_j + 2.0 * g[i])) * inv_m;
        const double bl = std::abs(proj[i] + proj_j) * inv_m;
        const double residual = dot + std::max(0.0, y[i] - y_j);
        w[i] = (1.0 + cx) * residual + bl * dot;
        col_objective += (1.0 + cx) * residual * residual + bl * dot * dot;
      }
    };
    accumulate(0, j);
    w[j] = 0.0;
    accumulate(j + 1, b);
    objective += col_objective;
  }
  out.grad.resize(b, batch.cols());
  out.grad.noalias() = (2.0 / m) * (out.weights * batch);
  out.objective = objective;
}

}  // namespace sfe
