#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "sfe/data_model.hpp"
#include "sfe/error.hpp"
#include "sfe/pairwise.hpp"
#include "sfe/rng.hpp"
#include "sfe/types.hpp"

namespace sfe {

struct FitConfig {
  double eta = 0.025;
  std::int64_t iterations = 10000;
  /// 0 means the full sample.
  std::int64_t batch_size = 0;
  std::uint64_t seed = 0;
  bool deterministic = true;
  /// Early stop when the windowed objective changes by less than this
  /// (relative) between consecutive windows.
  std::optional<double> tolerance;

  static constexpr std::int64_t kStopWindow = 100;
  static constexpr double kDivergenceBound = 1e6;

  void validate(Index n) const {
    if (!(eta > 0.0) || !std::isfinite(eta)) throw usage_error("eta must be positive");
    if (iterations < 1) throw usage_error("iterations must be at least 1");
    if (batch_size < 0) throw usage_error("batch size must be positive");
    if (batch_size > n) throw usage_error("batch size exceeds sample size");
    if (tolerance && !(*tolerance >= 0.0)) throw usage_error("tolerance must be nonnegative");
  }

  Index effective_batch(Index n) const { return batch_size == 0 ? n : static_cast<Index>(batch_size); }
};

/// Range records needed to map an effect back to raw outcome units.
struct Scaling {
  Vector x_min;
  Vector x_max;
  double y_min = 0.0;
  double y_max = 1.0;

  static Scaling of(const NormalizedData& nd) { return {nd.x_min, nd.x_max, nd.y_min, nd.y_max}; }
};

/// Fitted positions T_y(X) with the run that produced them.
struct EffectSpace {
  Matrix positions;
  FitConfig config;
  std::vector<double> objective_trace;
  std::vector<std::string> column_names;
  Scaling scaling;
  std::string outcome_name = "y";

  Index rows() const { return positions.rows(); }
  Index cols() const { return positions.cols(); }
  std::int64_t iterations_run() const { return static_cast<std::int64_t>(objective_trace.size()); }

  Index column_index(const std::string& name) const {
    for (std::size_t a = 0; a < column_names.size(); ++a) {
      if (column_names[a] == name) return static_cast<Index>(a);
    }
    throw usage_error("unknown factor '" + name + "'");
  }
};

class DivergenceError : public Error {
 public:
  DivergenceError(std::int64_t iteration, std::vector<double> trace)
      : Error(ErrorKind::numeric, "diverged at iteration " + std::to_string(iteration)),
        iteration_(iteration),
        trace_(std::move(trace)) {}

  std::int64_t iteration() const { return iteration_; }
  const std::vector<double>& trace() const { return trace_; }

 private:
  std::int64_t iteration_;
  std::vector<double> trace_;
};

namespace detail {

/// Column order that depends only on column contents, so a permuted input
/// is processed in exactly the same internal order.
inline std::vector<Index> canonical_column_order(const Matrix& x) {
  std::vector<Index> order(static_cast<std::size_t>(x.cols()));
  std::iota(order.begin(), order.end(), Index{0});
  auto less = [&](Index a, Index b) {
    for (Index i = 0; i < x.rows(); ++i) {
      const double u = x(i, a);
      const double v = x(i, b);
      if (u < v) return true;
      if (v < u) return false;
      if (std::signbit(u) != std::signbit(v)) return std::signbit(u);
    }
    return false;
  };
  std::stable_sort(order.begin(), order.end(), less);
  return order;
}

inline bool window_converged(const std::vector<double>& trace, double tolerance) {
  const auto w = static_cast<std::size_t>(FitConfig::kStopWindow);
  if (trace.size() < 2 * w) return false;
  const auto end = trace.end();
  const double recent = std::accumulate(end - w, end, 0.0) / static_cast<double>(w);
  const double before = std::accumulate(end - 2 * w, end - w, 0.0) / static_cast<double>(w);
  const double scale = std::max(std::abs(before), std::numeric_limits<double>::min());
  return std::abs(recent - before) / scale < tolerance;
}

}  // namespace detail

/// Minibatch SGD over individual positions, starting from the normalized
/// covariates. Each iteration shuffles the individuals and walks them in
/// batches; batch members are each other's partners, and every member moves
/// by eta times its gradient averaged over its partners. All members of a
/// batch are updated from the batch-start positions.
///
/// The trace records, per iteration, the sum of the batch objectives
/// evaluated before each batch update (the total objective when the batch is
/// the full sample).
inline EffectSpace fit(const NormalizedData& nd, const FitConfig& cfg) {
  const Index n = nd.rows();
  const Index m = nd.cols();
  if (n < 2) throw data_error("fit needs at least 2 individuals");
  if (nd.yn.size() != n) throw data_error("outcome length does not match rows");
  cfg.validate(n);
  const Index batch = cfg.effective_batch(n);

  std::vector<Index> columns(static_cast<std::size_t>(m));
  std::iota(columns.begin(), columns.end(), Index{0});
  if (cfg.deterministic) columns = detail::canonical_column_order(nd.xn);

  Matrix positions(n, m);
  for (Index k = 0; k < m; ++k) positions.col(k) = nd.xn.col(columns[k]);

  Rng rng(cfg.seed);
  std::vector<Index> order = all_individuals(n);
  std::vector<double> trace;
  trace.reserve(static_cast<std::size_t>(cfg.iterations));

  Matrix batch_rows;
  Vector batch_y;
  BatchTerms terms;
  for (std::int64_t it = 0; it < cfg.iterations; ++it) {
    shuffle(std::span<Index>(order), rng);
    double objective = 0.0;
    for (Index start = 0; start < n; start += batch) {
      const Index b = std::min(batch, n - start);
      batch_rows.resize(b, m);
      batch_y.resize(b);
      for (Index k = 0; k < b; ++k) {
        batch_rows.row(k) = positions.row(order[start + k]);
        batch_y[k] = nd.yn[order[start + k]];
      }
      const RowVector mean = mean_row(positions);
      batch_terms(batch_rows, batch_y, mean, terms);
      objective += terms.objective;
      if (b < 2) continue;
      const double step = cfg.eta / static_cast<double>(b - 1);
      for (Index k = 0; k < b; ++k) {
        auto row = positions.row(order[start + k]);
        row -= step * terms.grad.row(k);
        for (double v : row) {
          if (!std::isfinite(v) || std::abs(v) > FitConfig::kDivergenceBound) {
            trace.push_back(objective);
            throw DivergenceError(it + 1, std::move(trace));
          }
        }
      }
    }
    if (!std::isfinite(objective)) {
      trace.push_back(objective);
      throw DivergenceError(it + 1, std::move(trace));
    }
    trace.push_back(objective);
    if (cfg.tolerance && detail::window_converged(trace, *cfg.tolerance)) break;
  }

  EffectSpace es;
  es.positions.resize(n, m);
  for (Index k = 0; k < m; ++k) es.positions.col(columns[k]) = positions.col(k);
  es.config = cfg;
  es.objective_trace = std::move(trace);
  es.column_names = nd.column_names;
  es.scaling = Scaling::of(nd);
  return es;
}

}  // namespace sfe
