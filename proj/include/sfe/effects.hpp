#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "sfe/data_model.hpp"
#include "sfe/error.hpp"
#include "sfe/optimizer.hpp"

namespace sfe {

/// How a coordinate gap becomes an effect: `sqrt` takes the square root of
/// the absolute gap, `linear` reports the absolute gap itself.
enum class AteMode { sqrt, linear };

/// Repository default, fixed by the homogeneous-design calibration run
/// (see README).
inline constexpr AteMode kDefaultAteMode = AteMode::linear;

inline std::string to_string(AteMode mode) { return mode == AteMode::sqrt ? "sqrt" : "linear"; }

inline AteMode parse_ate_mode(const std::string& s) {
  if (s == "sqrt") return AteMode::sqrt;
  if (s == "linear") return AteMode::linear;
  throw usage_error("unknown mode '" + s + "' (expected sqrt or linear)");
}

struct EffectQuery {
  AteMode mode = kDefaultAteMode;
  /// Normalized value above which an individual counts as treated.
  double threshold = 0.0;
  Mask mask;
  std::string mask_description = "all";
};

struct AteResult {
  std::string factor;
  double ate_normalized = 0.0;
  double ate_raw = 0.0;
  /// Mean treated minus mean control coordinate, before the mode transform.
  double signed_difference = 0.0;
  Index n_treated = 0;
  Index n_control = 0;
  std::string mask_description;
  AteMode mode = kDefaultAteMode;
};

struct IteResult {
  Index individual = 0;
  bool treated = false;
  double ite_normalized = 0.0;
  double ite_raw = 0.0;
};

namespace detail {

inline void check_compatible(const EffectSpace& es, const NormalizedData& nd) {
  if (es.rows() != nd.rows() || es.cols() != nd.cols()) {
    throw usage_error("dimension mismatch: space is " + std::to_string(es.rows()) + "x" +
                      std::to_string(es.cols()) + ", dataset is " + std::to_string(nd.rows()) +
                      "x" + std::to_string(nd.cols()));
  }
}

inline bool included(const Mask& mask, Index i) {
  return mask.empty() || mask[static_cast<std::size_t>(i)];
}

struct GroupMeans {
  double treated = 0.0;
  double control = 0.0;
  Index n_treated = 0;
  Index n_control = 0;
};

inline GroupMeans group_means(const EffectSpace& es, const NormalizedData& nd, Index a,
                              const EffectQuery& q) {
  if (!q.mask.empty() && static_cast<Index>(q.mask.size()) != es.rows()) {
    throw usage_error("mask length does not match sample size");
  }
  GroupMeans g;
  for (Index i = 0; i < es.rows(); ++i) {
    if (!included(q.mask, i)) continue;
    if (nd.xn(i, a) > q.threshold) {
      g.treated += es.positions(i, a);
      ++g.n_treated;
    } else {
      g.control += es.positions(i, a);
      ++g.n_control;
    }
  }
  if (g.n_treated == 0 || g.n_control == 0) {
    throw data_error("degenerate split on '" + nd.column_names[static_cast<std::size_t>(a)] +
                     "': " + std::to_string(g.n_treated) + " treated, " +
                     std::to_string(g.n_control) + " control");
  }
  g.treated /= static_cast<double>(g.n_treated);
  g.control /= static_cast<double>(g.n_control);
  return g;
}

inline double transform(double gap, AteMode mode) {
  return mode == AteMode::sqrt ? std::sqrt(std::abs(gap)) : std::abs(gap);
}

}  // namespace detail

/// Average effect of `factor`: the factor coordinate of the mean treated
/// position minus that of the mean control position, transformed per mode.
inline AteResult ate(const EffectSpace& es, const NormalizedData& nd, const std::string& factor,
                     const EffectQuery& q = {}) {
  detail::check_compatible(es, nd);
  const Index a = nd.column_index(factor);
  const auto g = detail::group_means(es, nd, a, q);
  AteResult r;
  r.factor = factor;
  r.signed_difference = g.treated - g.control;
  r.ate_normalized = detail::transform(r.signed_difference, q.mode);
  r.ate_raw = denormalize_effect(r.ate_normalized, nd);
  r.n_treated = g.n_treated;
  r.n_control = g.n_control;
  r.mask_description = q.mask_description;
  r.mode = q.mode;
  return r;
}

/// Individual effect: the gap between individual i's factor coordinate and
/// the mean coordinate of the opposite group, oriented treated minus
/// control. The sign survives both modes, so averaging over treated
/// individuals in linear mode gives back the signed ATE gap.
inline IteResult ite(const EffectSpace& es, const NormalizedData& nd, Index i,
                     const std::string& factor, const EffectQuery& q = {}) {
  detail::check_compatible(es, nd);
  if (i < 0 || i >= es.rows()) throw usage_error("individual index out of range");
  const Index a = nd.column_index(factor);
  const auto g = detail::group_means(es, nd, a, q);
  IteResult r;
  r.individual = i;
  r.treated = nd.xn(i, a) > q.threshold;
  const double gap = r.treated ? es.positions(i, a) - g.control : g.treated - es.positions(i, a);
  const double magnitude = detail::transform(gap, q.mode);
  r.ite_normalized = std::signbit(gap) ? -magnitude : magnitude;
  r.ite_raw = denormalize_effect(r.ite_normalized, nd);
  return r;
}

/// Cosine between two mean-centered columns of the position matrix.
inline double column_cosine(const EffectSpace& es, Index a, Index b) {
  if (a < 0 || b < 0 || a >= es.cols() || b >= es.cols()) {
    throw usage_error("column index out of range");
  }
  const Vector u = es.positions.col(a).array() - es.positions.col(a).mean();
  const Vector v = es.positions.col(b).array() - es.positions.col(b).mean();
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw numeric_error("undefined angle: zero-norm column");
  return std::clamp(u.dot(v) / (nu * nv), -1.0, 1.0);
}

inline double column_cosine(const EffectSpace& es, const std::string& a, const std::string& b) {
  return column_cosine(es, es.column_index(a), es.column_index(b));
}

struct RankedColumn {
  std::string name;
  double ate = 0.0;
};

/// Per-column effects in decreasing order (ties by column index); columns
/// without both a treated and a control group are left out.
inline std::vector<RankedColumn> rank_columns(const EffectSpace& es, const NormalizedData& nd,
                                              const EffectQuery& q = {}) {
  detail::check_compatible(es, nd);
  std::vector<std::pair<Index, double>> scored;
  for (Index a = 0; a < nd.cols(); ++a) {
    try {
      scored.emplace_back(a, ate(es, nd, nd.column_names[static_cast<std::size_t>(a)], q).ate_normalized);
    } catch (const Error& e) {
      if (e.kind() != ErrorKind::data) throw;
    }
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& l, const auto& r) { return l.second > r.second; });
  std::vector<RankedColumn> ranked;
  for (const auto& [a, v] : scored) ranked.push_back({nd.column_names[static_cast<std::size_t>(a)], v});
  return ranked;
}

inline constexpr std::size_t kSelectionPool = 20;

/// Greedy selection of effective, non-redundant columns: start from the
/// largest effect among the top candidates, then repeatedly add the
/// candidate whose largest squared cosine against the selected set is
/// smallest.
inline std::vector<std::string> select_variables(const EffectSpace& es, const NormalizedData& nd,
                                                 Index k, const EffectQuery& q = {}) {
  if (k < 1) throw usage_error("k must be at least 1");
  if (k > nd.cols()) throw usage_error("k exceeds the number of columns");
  std::vector<RankedColumn> pool = rank_columns(es, nd, q);
  if (pool.size() > kSelectionPool) pool.resize(kSelectionPool);
  if (static_cast<Index>(pool.size()) < k) {
    throw data_error("only " + std::to_string(pool.size()) + " columns have a usable split");
  }

  // Candidates are kept in column-index order for tie-breaking.
  std::vector<Index> candidates;
  for (const auto& c : pool) candidates.push_back(es.column_index(c.name));
  std::vector<Index> selected{es.column_index(pool.front().name)};
  std::sort(candidates.begin(), candidates.end());
  std::erase(candidates, selected.front());

  auto cos2 = [&](Index a, Index b) {
    try {
      const double c = column_cosine(es, a, b);
      return c * c;
    } catch (const Error&) {
      return 1.0;
    }
  };

  while (static_cast<Index>(selected.size()) < k) {
    Index best = -1;
    double best_score = 0.0;
    for (Index c : candidates) {
      double worst = 0.0;
      for (Index s : selected) worst = std::max(worst, cos2(c, s));
      if (best < 0 || worst < best_score) {
        best = c;
        best_score = worst;
      }
    }
    selected.push_back(best);
    std::erase(candidates, best);
  }

  std::vector<std::string> names;
  for (Index a : selected) names.push_back(es.column_names[static_cast<std::size_t>(a)]);
  return names;
}

/// Parses a conjunction of simple comparisons on raw dataset values, such as
/// "married=1" or "age>=30&black=1". Operators: = == != < <= > >=.
inline Mask parse_mask(const std::string& expr, const Dataset& d) {
  Mask mask(static_cast<std::size_t>(d.rows()), true);
  std::size_t pos = 0;
  while (pos <= expr.size()) {
    const std::size_t amp = expr.find('&', pos);
    std::string term = expr.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
    pos = amp == std::string::npos ? expr.size() + 1 : amp + 1;

    const std::size_t op_at = term.find_first_of("=!<>");
    if (op_at == std::string::npos || op_at == 0) {
      throw usage_error("bad mask term '" + term + "'");
    }
    std::size_t op_end = op_at + 1;
    if (op_end < term.size() && term[op_end] == '=') ++op_end;
    const std::string name = term.substr(0, op_at);
    const std::string op = term.substr(op_at, op_end - op_at);
    double value = 0.0;
    if (!csv::parse_double(term.substr(op_end), value)) {
      throw usage_error("bad mask value in '" + term + "'");
    }
    const Index a = d.column_index(name);
    for (Index i = 0; i < d.rows(); ++i) {
      const double v = d.x()(i, a);
      bool keep = false;
      if (op == "=" || op == "==") keep = v == value;
      else if (op == "!=") keep = v != value;
      else if (op == "<") keep = v < value;
      else if (op == "<=") keep = v <= value;
      else if (op == ">") keep = v > value;
      else if (op == ">=") keep = v >= value;
      else throw usage_error("bad mask operator '" + op + "'");
      if (!keep) mask[static_cast<std::size_t>(i)] = false;
    }
  }
  return mask;
}

}  // namespace sfe
